mod props;

#[test]
fn jacobians_match_finite_differences() {
    props::jacobians_match_finite_differences().unwrap();
}

#[test]
fn accepted_steps_lower_the_cost() {
    props::cost_is_monotone().unwrap();
}

#[test]
fn ate_ignores_pose_order() {
    props::ate_ignores_order().unwrap();
}
