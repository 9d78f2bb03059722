mod common;

use avc::solver::{run_trace, SolverParams};
use common::{fine_integrator, DEFAULTS};

const DT: f64 = 128.0 / 5600.0;

fn first_within(a: &[f64], target: f64, tol: f64) -> Option<f64> {
    a.iter().position(|v| (v - target).abs() <= tol).map(|i| i as f64 * DT)
}

#[test]
fn step_response_crossing_matches_fine_integration() {
    let mut levels = vec![50.0];
    levels.extend(vec![60.0; 200]);
    let coarse: Vec<f64> = run_trace(&levels, &SolverParams::with_dt(DT))
        .unwrap()
        .iter()
        .map(|s| s.a_val)
        .collect();
    let fine = fine_integrator(&levels, &DEFAULTS, 10);
    let t_coarse = first_within(&coarse, 60.0, 1.0).unwrap();
    let t_fine = first_within(&fine, 60.0, 1.0).unwrap();
    assert!((t_coarse - t_fine).abs() <= 2.0 * DT, "{t_coarse} vs {t_fine}");
    assert!((0.3..2.0).contains(&t_coarse), "{t_coarse}");
}

#[test]
fn stays_put_once_settled() {
    let mut levels = vec![50.0];
    levels.extend(vec![60.0; 400]);
    let a = run_trace(&levels, &SolverParams::with_dt(DT)).unwrap();
    let t = a.iter().position(|s| (s.a_val - 60.0).abs() < 1.0).unwrap();
    assert!(a[t..].iter().all(|s| (s.a_val - 60.0).abs() < 1.0 + 0.5));
}
