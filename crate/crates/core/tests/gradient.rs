mod support;

#[test]
fn analytic_gradient_matches_finite_differences() {
    let check = support::gradient_check();
    println!(
        "{} parameters, max relative error {:e} ({})",
        check.parameters, check.max_rel_error, check.worst_tensor
    );
    assert!(check.parameters <= 2000);
    assert!(check.max_rel_error < 1e-4);
}
