mod common;

use mcnoma::harness::{run_oracle, OracleSpec};
use mcnoma::numerics::C64;
use mcnoma::pipeline::PipelineConfig;
use mcnoma::scenario::ChannelSet;

use common::{scalar_channels, Rng};

#[test]
fn single_user_two_subcarriers_matches_water_filling() {
    // Gains 1 and 0.25 with unit noise, 3 bits: water level 4, powers 3 and 0.
    let ch = ChannelSet::scalar(&[vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0)]], 1.0).unwrap();
    let r = run_oracle(&ch, &[2.0], &[1.0], &OracleSpec::default(), &PipelineConfig::default()).unwrap();
    assert!((r.solver_energy - 3.0).abs() < 1e-6, "{}", r.solver_energy);
    assert!(r.oracle_energy >= 3.0 - 1e-9 && r.oracle_energy <= 3.0 + r.slack, "{}", r.oracle_energy);
}

#[test]
fn symmetric_pair_within_grid_slack() {
    let g = C64::new(0.8, 0.0);
    let ch = ChannelSet::scalar(&[vec![g, g], vec![g, g]], 0.5).unwrap();
    let r = run_oracle(&ch, &[1.5, 1.5], &[1.0, 1.0], &OracleSpec::default(), &PipelineConfig::default()).unwrap();
    assert!(r.solver_energy <= r.oracle_energy + r.slack, "{r:?}");
    assert!(r.solver_meets_targets);
    // Both orders are optimal by symmetry.
    assert_eq!(r.optimal_orders.len(), 2);
}

#[test]
fn three_users_one_subcarrier_order_is_oracle_optimal() {
    let cfg = PipelineConfig::default();
    for seed in 0..5 {
        let mut rng = Rng::new(100 + seed);
        let ch = scalar_channels(&mut rng, 3, 1, 0.3, 2.0);
        let targets: Vec<f64> = (0..3).map(|_| rng.range(0.3, 2.0)).collect();
        let weights: Vec<f64> = (0..3).map(|_| rng.range(0.3, 1.0)).collect();
        let r = run_oracle(&ch, &targets, &weights, &OracleSpec::default(), &cfg).unwrap();
        assert_eq!(r.orders_enumerated, 6);
        assert!(r.solver_energy <= r.oracle_energy + r.slack, "seed {seed}: {r:?}");
        assert!(r.optimal_orders.contains(&r.solver_order), "seed {seed}: {r:?}");
    }
}
