use prophet_demo::ops;

#[test]
fn sqrt3_curve_decreases() {
    let v = ops::sqrt3_curve(&[10, 30]).unwrap();
    assert!((v[0] - 0.749038).abs() < 1e-5, "{v:?}");
    assert!(v[1] <= v[0]);
    assert!(ops::sqrt3_curve(&[1]).is_err());
}

#[test]
fn geometric_mean_keeps_max_law() {
    let text = "3 0\n2 0 0.5 1 0.5\n2 0 0.9 4 0.1\n1 2 1.0\n";
    let triples = ops::geometric_mean(text).unwrap();
    assert_eq!(triples.len() % 3, 0);
    for t in triples.chunks(3) {
        assert!(t[2] < 1e-12, "{t:?}");
    }
    assert!(ops::geometric_mean("not an instance").is_err());
}

#[test]
fn evaluate_two_coins() {
    let v = ops::evaluate("2 2\n2 0 0.5 1 0.5\n2 0 0.5 1 0.5\n", "secretary", 20_000, 7).unwrap();
    assert!((v[0] - 6.0 / 7.0).abs() < 1e-6);
    assert!(v[1] >= v[0] - 1e-6);
    assert!((v[3] - v[1]).abs() < 4.0 * v[4] + 1e-9, "{v:?}");
    assert!(v[5] >= v[1] - 1e-9);
    assert!(ops::evaluate("1 0\n1 1 1.0\n", "nope", 10, 1).is_err());
}
