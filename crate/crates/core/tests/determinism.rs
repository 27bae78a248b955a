mod props;

#[test]
fn full_runs_are_bit_identical() {
    props::full_runs_are_bit_identical().unwrap();
}
