use habitform::fbp::{solve_free_boundary_with, FbpOptions};
use habitform::params::ModelParams;
use habitform::verify::{verify, VerifyOptions};

#[test]
fn boundary_is_stable_under_tighter_tolerances() {
    let c = ModelParams::reference().derive().unwrap();
    let opts = FbpOptions::default();
    let base = solve_free_boundary_with(&c, &opts).unwrap();
    let tight = FbpOptions {
        controls: opts.controls.scaled(0.1),
        ..opts
    };
    let fine = solve_free_boundary_with(&c, &tight).unwrap();
    let moved = (fine.y_star - base.y_star).abs();
    assert!(moved < 10.0 * opts.eta_tol * base.y_star, "{moved:e}");
    assert!((fine.h_at_floor() - base.h_at_floor()).abs() < 1e-8 * c.h_top());
}

#[test]
fn deep_tail_stays_below_the_cap() {
    let c = ModelParams::reference().derive().unwrap();
    let s = solve_free_boundary_with(&c, &FbpOptions::default()).unwrap();
    assert!(s.h_at_floor() <= c.h_top());
    // Converges to a fraction of the cap rather than the cap itself.
    let beta = s.h_at_floor() / c.h_top();
    assert!(beta > 0.85 && beta < 0.95, "{beta}");
    assert!(s.grid_violations().is_empty());
}

#[test]
fn corrupted_boundary_is_caught_through_the_public_api() {
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default()).unwrap();
    assert!(verify(&policy, &VerifyOptions::default()).passed());
    for factor in [1.01, 0.99, 1.001, 0.999] {
        let report = verify(&policy.with_perturbed_boundary(factor), &VerifyOptions::default());
        assert!(!report.get("primal_smooth_fit").unwrap().passed, "factor {factor}");
    }
    // Below y* the closed form leaks past x*, which only the inequality sees.
    let report = verify(&policy.with_perturbed_boundary(0.99), &VerifyOptions::default());
    assert!(!report.get("variational_inequality").unwrap().passed);
}

#[test]
fn solves_across_regimes() {
    for (key, value) in [("sharpe_ratio", 0.05), ("sharpe_ratio", 2.0), ("delta", 0.1), ("gamma", 5.0), ("rho", 0.5)] {
        let mut p = ModelParams::reference();
        p.set(key, value).unwrap();
        let policy = habitform::solve(&p, &FbpOptions::default()).unwrap_or_else(|e| panic!("{key}={value}: {e}"));
        let report = verify(&policy, &VerifyOptions::default());
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert!(failed.is_empty(), "{key}={value}: {failed:?}");
    }
}
