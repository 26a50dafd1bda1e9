use pckv_demo::{budget_json, scan_json, simulate_json, SCAN_POINTS};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn budget_reports_a_consistent_split() {
    let v = parse(budget_json(1.0, 2, 50, "grr", "optimized").unwrap());
    assert!((v["composed"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["d_prime"], 52);
    assert!(v["a"].as_f64().unwrap() > v["b"].as_f64().unwrap());
    let v = parse(budget_json(1.0, 1, 100_000, "ue", "naive").unwrap());
    assert_eq!(v["recommended"]["frequency"], "ue");
    assert!(budget_json(1.0, 1, 10, "laplace", "optimized").is_err());
    assert!(budget_json(-1.0, 1, 10, "ue", "optimized").is_err());
}

#[test]
fn scan_is_thinned_and_keeps_the_minimizer() {
    let v = parse(scan_json(2.0, 0.25, "ue", 0).unwrap());
    let pts = v["points"].as_array().unwrap();
    assert!(pts.len() <= SCAN_POINTS && pts.len() > 10);
    let min = v["argmin"]["phi"].as_f64().unwrap();
    assert!(pts.iter().all(|p| p[3].as_f64().unwrap() >= min - 1e-12));
    assert!(scan_json(2.0, 0.25, "grr", 12).is_ok());
}

#[test]
fn simulation_is_seeded_and_bounded() {
    let a = simulate_json("pckv-ue", 4.0, 1, 20_000, 10, "uniform", "optimized", 3).unwrap();
    let b = simulate_json("pckv-ue", 4.0, 1, 20_000, 10, "uniform", "optimized", 3).unwrap();
    assert_eq!(a, b);
    let v = parse(a);
    let keys = v["keys"].as_array().unwrap();
    assert_eq!(keys.len(), 10);
    for k in keys {
        assert!((k[1].as_f64().unwrap() - k[2].as_f64().unwrap()).abs() < 0.05);
    }
    assert!(simulate_json("privkv", 2.0, 1, 1_000_000, 10, "uniform", "optimized", 0).is_err());
}
