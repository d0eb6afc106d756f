use crate::rate_region::DecodingOrder;

/// Floor for the relative tie test so that all-zero multipliers tie.
const TIE_FLOOR: f64 = 1e-300;

/// Decoding order from multipliers: ascending `theta` (smallest decoded
/// first). Neighbours in the sorted list whose values differ by at most
/// `tie_tol * max(theta_i, theta_j)` share a cluster; clusters are listed in
/// decoding order and each is sorted by user index, which is also the
/// returned canonical order inside the cluster.
pub fn extract_order(theta: &[f64], tie_tol: f64) -> (DecodingOrder, Vec<Vec<usize>>) {
    let mut sorted: Vec<usize> = (0..theta.len()).collect();
    sorted.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(a.cmp(&b)));

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut prev: Option<usize> = None;
    for &u in &sorted {
        let joins = prev.is_some_and(|p| {
            let scale = theta[p].abs().max(theta[u].abs()).max(TIE_FLOOR);
            theta[u] - theta[p] <= tie_tol * scale
        });
        if joins {
            clusters.last_mut().expect("previous cluster").push(u);
        } else {
            clusters.push(vec![u]);
        }
        prev = Some(u);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    let order = DecodingOrder::new(clusters.iter().flatten().copied().collect()).expect("permutation by construction");
    (order, clusters)
}
