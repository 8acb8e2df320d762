use ior_core::propagation::{
    analytic_rounds, compare, kolmogorov_distance, simulate_trial, GossipConfig, GossipMode,
};

fn cfg(n: usize) -> GossipConfig {
    GossipConfig::new(n, 2, n.div_ceil(100) as f64 / n as f64, 1.0, 3)
}

#[test]
fn mean_curve_approaches_logistic_as_n_grows() {
    let d: Vec<f64> = [50, 200, 1000].iter().map(|&n| kolmogorov_distance(&cfg(n), 40, 12).unwrap()).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    assert!(d[2] < 0.02, "{d:?}");
}

#[test]
fn trials_are_independent_streams() {
    let c = cfg(500);
    let a = simulate_trial(&c, 0).unwrap();
    let b = simulate_trial(&c, 1).unwrap();
    assert_ne!(a.informed, b.informed);
    assert_eq!(a, simulate_trial(&c, 0).unwrap());
}

#[test]
fn synchronous_rounds_are_slower_than_relay() {
    let relay = compare(&cfg(1000), 20).unwrap();
    let mut sync_cfg = cfg(1000);
    sync_cfg.mode = GossipMode::Synchronous;
    let sync = compare(&sync_cfg, 20).unwrap();
    assert!(sync.rounds_emp_mean >= relay.rounds_emp_mean);
    assert_eq!(relay.rounds_analytic, analytic_rounds(&cfg(1000)).unwrap() + 1.0);
    assert_eq!(relay.t_analytic, sync.t_analytic);
}

#[test]
fn config_json_rejects_unknown_fields() {
    let ok: GossipConfig = serde_json::from_str(r#"{"n": 10, "lambda": 2, "i0": 0.1, "p": 0.5}"#).unwrap();
    assert_eq!(ok.mode, GossipMode::Relay);
    assert!(serde_json::from_str::<GossipConfig>(r#"{"n": 10, "lambda": 2, "i0": 0.1, "p": 0.5, "fanout": 3}"#).is_err());
}
