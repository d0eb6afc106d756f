//! Per-subcarrier weighted-rate maximization for a fixed multiplier vector.
//!
//! For fixed `theta` the Lagrangian splits over subcarriers. On one
//! subcarrier, with users decoded in ascending-`theta` order, the weighted
//! rate sum telescopes into
//!
//! ```text
//! sum_k c_k log2|I + sum_{i >= k} H_(i) R_(i) H_(i)^*|,   c_0 = theta_(0),
//!                                                        c_k = theta_(k) - theta_(k-1)
//! ```
//!
//! which is concave because every `c_k >= 0`. We maximize it minus the
//! weighted trace cost with projected gradient ascent (Barzilai-Borwein
//! step, Armijo backtracking, PSD projection per user).
//!
//! Everything in this file works in noise-normalized units: the noise
//! covariance is the identity.

use std::f64::consts::LN_2;

use crate::numerics::{ComplexMatrix, HermitianMatrix, NumericsError};

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    /// Stop once `||P(R + G) - R||_F` falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Cold-start covariance `eps * I`, in mW.
    pub init_energy_mw: f64,
    pub armijo: f64,
    /// Telescoped coefficients below this are treated as exact ties.
    pub coef_threshold: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_iterations: 2_000, init_energy_mw: 1e-6, armijo: 1e-4, coef_threshold: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SubcarrierSolution {
    pub covariances: Vec<HermitianMatrix>,
    /// Per-user rate on this subcarrier, bits.
    pub rates: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Decoding order implied by `theta`: ascending, ties broken by user index.
pub(crate) fn ascending_order(theta: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(a.cmp(&b)));
    idx
}

struct Evaluation {
    objective: f64,
    rates: Vec<f64>,
    gradient: Option<Vec<HermitianMatrix>>,
}

pub(crate) struct SubcarrierProblem<'a> {
    /// Noise-normalized channel of every user on this subcarrier.
    h: &'a [ComplexMatrix],
    weights: &'a [f64],
    /// `order[k]` is the user decoded k-th.
    order: Vec<usize>,
    coef: Vec<f64>,
    ly: usize,
}

impl<'a> SubcarrierProblem<'a> {
    pub fn new(h: &'a [ComplexMatrix], theta: &[f64], weights: &'a [f64], coef_threshold: f64) -> Self {
        let order = ascending_order(theta);
        let mut coef = Vec::with_capacity(order.len());
        let mut prev = 0.0;
        for &u in &order {
            let c = theta[u] - prev;
            coef.push(if c < coef_threshold { 0.0 } else { c });
            prev = theta[u];
        }
        let ly = h[0].rows();
        Self { h, weights, order, coef, ly }
    }

    fn evaluate(&self, r: &[HermitianMatrix], with_gradient: bool) -> Result<Evaluation, NumericsError> {
        let u_count = self.order.len();
        // a[k] = I + sum_{i >= k} rx_(i); logdet[k] = log2|a[k]|, logdet[U] = 0.
        let mut a: Vec<HermitianMatrix> = Vec::with_capacity(u_count);
        let mut logdet = vec![0.0; u_count + 1];
        let mut acc = HermitianMatrix::identity(self.ly);
        for k in (0..u_count).rev() {
            let user = self.order[k];
            acc.add_assign(&r[user].congruence(&self.h[user]));
            logdet[k] = acc.log2_det()?;
            a.push(acc.clone());
        }
        a.reverse();

        let mut objective = 0.0;
        let mut rates = vec![0.0; u_count];
        for k in 0..u_count {
            objective += self.coef[k] * logdet[k];
            rates[self.order[k]] = (logdet[k] - logdet[k + 1]).max(0.0);
        }
        for (u, m) in r.iter().enumerate() {
            objective -= self.weights[u] * m.trace();
        }

        let gradient = if with_gradient {
            let mut grads = vec![HermitianMatrix::zeros(1); u_count];
            let mut m = HermitianMatrix::zeros(self.ly);
            for k in 0..u_count {
                if self.coef[k] > 0.0 {
                    m.add_assign(&a[k].inverse_pd()?.scale(self.coef[k] / LN_2));
                }
                let user = self.order[k];
                let lx = self.h[user].cols();
                grads[user] =
                    m.adjoint_congruence(&self.h[user]).sub(&HermitianMatrix::scaled_identity(lx, self.weights[user]));
            }
            Some(grads)
        } else {
            None
        };
        Ok(Evaluation { objective, rates, gradient })
    }

    /// Projected gradient ascent from `init`.
    pub fn solve(&self, init: Vec<HermitianMatrix>, cfg: &InnerConfig) -> Result<SubcarrierSolution, NumericsError> {
        let mut r = project_all(&init)?;
        let mut eval = self.evaluate(&r, true)?;
        let mut step = 1.0;
        let mut iterations = 0;
        let mut residual;
        let mut best: Option<(f64, Vec<HermitianMatrix>, Vec<f64>)> = None;

        loop {
            let grad = eval.gradient.as_ref().expect("gradient requested");
            residual = projected_residual(&r, grad)?;
            if best.as_ref().is_none_or(|(obj, _, _)| eval.objective > *obj) {
                best = Some((eval.objective, r.clone(), eval.rates.clone()));
            }
            if residual < cfg.tol || iterations >= cfg.max_iterations {
                break;
            }
            iterations += 1;

            // Armijo backtracking along the projection arc.
            let mut t = step;
            let mut accepted = None;
            for _ in 0..80 {
                let trial = step_and_project(&r, grad, t)?;
                let dir: f64 =
                    trial.iter().zip(&r).zip(grad).map(|((x, y), g)| g.as_matrix().inner(x.sub(y).as_matrix())).sum();
                let trial_eval = self.evaluate(&trial, false)?;
                if trial_eval.objective >= eval.objective + cfg.armijo * dir {
                    accepted = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            let Some(next) = accepted else {
                // No ascent possible at machine precision.
                break;
            };
            let next_eval = self.evaluate(&next, true)?;
            let next_grad = next_eval.gradient.as_ref().expect("gradient requested");

            // Barzilai-Borwein step for the next iteration (concave: -<s, y> > 0).
            let mut ss = 0.0;
            let mut sy = 0.0;
            for u in 0..r.len() {
                let s = next[u].sub(&r[u]);
                let y = next_grad[u].sub(&grad[u]);
                ss += s.as_matrix().frobenius_norm_sqr();
                sy += s.as_matrix().inner(y.as_matrix());
            }
            step = if sy < 0.0 && ss > 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { (t * 2.0).min(1e12) };

            r = next;
            eval = next_eval;
        }

        let (_, covariances, rates) = best.expect("at least one evaluation");
        Ok(SubcarrierSolution { covariances, rates, iterations, residual, converged: residual < cfg.tol })
    }
}

fn project_all(r: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>, NumericsError> {
    r.iter().map(|m| m.project_psd()).collect()
}

fn step_and_project(
    r: &[HermitianMatrix],
    g: &[HermitianMatrix],
    t: f64,
) -> Result<Vec<HermitianMatrix>, NumericsError> {
    r.iter().zip(g).map(|(x, d)| x.add(&d.scale(t)).project_psd()).collect()
}

fn projected_residual(r: &[HermitianMatrix], g: &[HermitianMatrix]) -> Result<f64, NumericsError> {
    let mut total = 0.0;
    for (x, d) in r.iter().zip(g) {
        total += x.add(d).project_psd()?.sub(x).as_matrix().frobenius_norm_sqr();
    }
    Ok(total.sqrt())
}
