use condtune::gradcheck::{run_gradcheck, Gradcheck, GRADCHECK_TOLERANCE};

#[test]
fn standard_suite_passes() {
    let report = run_gradcheck(0).unwrap();
    println!("{}", report.render());
    assert!(report.passed(), "{}", report.render());
    assert!(report.paths.iter().any(|p| p.name.starts_with("total_loss/")));
    assert!(report.paths.iter().all(|p| p.max_rel_err <= GRADCHECK_TOLERANCE));
}

#[test]
fn report_is_deterministic_per_seed() {
    let a = run_gradcheck(3).unwrap();
    let b = run_gradcheck(3).unwrap();
    assert_eq!(a.render(), b.render());
}

#[test]
fn corrupted_primitive_fails_by_name() {
    let mut g = Gradcheck::empty(1);
    g.add_unary("softplus", |x: f64| (1.0 + x.exp()).ln(), |x: f64| 1.0 / (1.0 + (-x).exp()));
    g.add_unary("corrupted_softplus", |x: f64| (1.0 + x.exp()).ln(), |x: f64| 1.1 / (1.0 + (-x).exp()));
    let report = g.run().unwrap();
    let failures: Vec<&str> = report.failures().iter().map(|p| p.name.as_str()).collect();
    assert_eq!(failures, vec!["primitive/corrupted_softplus"]);
    assert!(report.render().contains("primitive/corrupted_softplus"));
    assert!(!report.passed());
}
