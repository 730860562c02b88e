use liesym::observability::linear_observability_matrix;
use liesym::simulator::TimeSeries;
use liesym::symbolic::{parse_expr, Binding, Expr, Sym};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn atom() -> impl Strategy<Value = String> {
    prop_oneof![
        (1i32..9).prop_map(|n| n.to_string()),
        prop::sample::select(vec!["x", "y", "k"]).prop_map(String::from),
    ]
}

fn expr_text() -> impl Strategy<Value = String> {
    atom().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), 1u32..4).prop_map(|(a, n)| format!("({a})^{n}")),
            inner.prop_map(|a| format!("tanh({a})")),
        ]
    })
}

fn point(x: f64, y: f64, k: f64) -> Binding {
    [(Sym::new("x"), x), (Sym::new("y"), y), (Sym::new("k"), k)].into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse_to_the_same_function(
        text in expr_text(),
        x in -1.0f64..1.0, y in -1.0f64..1.0, k in -1.0f64..1.0,
    ) {
        let e = parse_expr(&text).unwrap();
        let again = parse_expr(&e.to_string()).unwrap();
        let b = point(x, y, k);
        let (u, v) = (e.evaluate(&b).unwrap(), again.evaluate(&b).unwrap());
        prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()), "{text} -> {e}: {u} vs {v}");
    }

    #[test]
    fn derivative_matches_central_difference(text in expr_text(), x in -0.8f64..0.8, y in -0.8f64..0.8) {
        let e = parse_expr(&text).unwrap();
        let d = e.differentiate(Sym::new("x"));
        let h = 1e-5;
        let f = |x: f64| e.evaluate(&point(x, y, 0.5)).unwrap();
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        let exact = d.evaluate(&point(x, y, 0.5)).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "d/dx {e}: {exact} vs {fd}");
    }

    #[test]
    fn series_survive_a_csv_round_trip(
        rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 2), 1..40),
        dt in 1e-3f64..1.0,
    ) {
        let ts = TimeSeries::new(0.0, dt, vec!["a".into(), "b".into()], rows).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let back = TimeSeries::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values, ts.values);
        prop_assert!((back.dt - dt).abs() < 1e-12);
    }

    #[test]
    fn output_rescaling_keeps_observability_rank(
        a in prop::collection::vec(-2.0f64..2.0, 16),
        c in prop::collection::vec(-2.0f64..2.0, 4),
        s in 0.1f64..10.0,
    ) {
        let a = DMatrix::from_row_slice(4, 4, &a);
        let c = DMatrix::from_row_slice(1, 4, &c);
        let (_, r0) = linear_observability_matrix(&a, &c).unwrap();
        let (_, r1) = linear_observability_matrix(&a, &(c * s)).unwrap();
        prop_assert_eq!(r0, r1);
    }
}

#[test]
fn zero_is_its_own_derivative() {
    assert!(Expr::zero().differentiate(Sym::new("x")).equivalent(&Expr::zero()));
}
