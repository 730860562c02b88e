use liesym_web::{bouc_wen_loop, rank_vs_order, symmetry_flow};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn numbers(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn rank_grows_until_it_saturates() {
    let v = parse(&rank_vs_order("viscous-wind", "a1,a2,a3,a4,a5,d1,d2,d3,d4,d5", "", 6, 1));
    assert!(v.get("error").is_none(), "{v}");
    let ranks: Vec<i64> = v["per_order"].as_array().unwrap().iter().map(|o| o["rank"].as_i64().unwrap()).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
    assert_eq!(v["sensors"].as_array().unwrap().len(), 10);
}

#[test]
fn stiffer_shape_narrows_the_loop() {
    let wide = parse(&bouc_wen_loop(100.0, 2, 0.25, 0.25, 2))["dissipated_kj"].as_f64().unwrap();
    let design = parse(&bouc_wen_loop(100.0, 2, 0.75, 0.8, 2))["dissipated_kj"].as_f64().unwrap();
    assert!(wide > 0.0 && design > 0.0);
    assert!((wide - design).abs() > 1e-3 * design, "{wide} vs {design}");
}

#[test]
fn moving_along_the_symmetry_keeps_the_outputs() {
    let v = parse(&symmetry_flow(0.01, 5.0));
    assert!(v.get("error").is_none(), "{v}");
    let a1 = numbers(&v["a1"]);
    let scale = a1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(v["max_output_gap"].as_f64().unwrap() < 1e-6 * scale);
    let x1 = numbers(&v["x1"]);
    let x1m = numbers(&v["x1_moved"]);
    assert!((x1m[0] - x1[0] - 0.01).abs() < 1e-12);
    assert_eq!(v["terminates"], true);
    assert!(parse(&symmetry_flow(0.01, -1.0))["error"].is_string());
}
