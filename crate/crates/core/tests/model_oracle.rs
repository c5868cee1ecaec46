use invaria::expr::Bindings;
use invaria::model::{from_expressions, ExtendedParams, Model, OriginalParams, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eval(m: &Model, x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; m.dim()];
    m.rhs(0.0, x, u, &mut dx).unwrap();
    dx
}

#[test]
fn text_models_match_hard_coded_models() {
    let ext = ExtendedParams { b: 0.3, c: 2.0, s: 0.25, l: 0.7, r0: 11.0, d0: 0.01 };
    let orig = OriginalParams { u0: 1.2, s: 0.8, p: 1.7, y0: 5.0 };
    let cases: Vec<(Model, Model)> = vec![
        (
            Model::Extended2(ext),
            Model::Custom(
                from_expressions(2, &["b*x1 + d + s*x2*(l*r - x1)", "-c*x2*(r - x1)"], 0, ext.bindings()).unwrap(),
            ),
        ),
        (
            Model::Original3(orig),
            Model::Custom(
                from_expressions(3, &["u0 + u - s*x2*x1", "p*x3*x1 - x2", "x3*(x1 - y0)"], 0, orig.bindings()).unwrap(),
            ),
        ),
        (
            Model::Simplified2(orig),
            Model::Custom(from_expressions(2, &["u0 + u - s*x2*x1", "x2*(x1 - y0)"], 0, orig.bindings()).unwrap()),
        ),
        (
            Model::Substituted2(orig),
            Model::Custom(from_expressions(2, &["u0 + u - x2*x1", "x2*(x1 - y0)"], 0, orig.bindings()).unwrap()),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (hard, text) in &cases {
        assert_eq!(hard.input_names(), text.input_names(), "{}", hard.name());
        for _ in 0..100 {
            let x: Vec<f64> = (0..hard.dim()).map(|_| rng.random_range(-5.0..20.0)).collect();
            let u: Vec<f64> = hard.input_names().iter().map(|_| rng.random_range(0.0..15.0)).collect();
            let a = eval(hard, &x, &u);
            let b = eval(text, &x, &u);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12, "{}: {a:?} vs {b:?}", hard.name());
            }
        }
    }
}

#[test]
fn substituted_model_is_simplified_model_in_scaled_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let s = rng.random_range(0.1..3.0);
        let p = OriginalParams { u0: 1.0, s, p: 1.0, y0: 4.0 };
        let (y, z, u) = (rng.random_range(0.0..10.0), rng.random_range(0.0..5.0), rng.random_range(-0.5..2.0));
        let simp = eval(&Model::Simplified2(p), &[y, z], &[u]);
        let subst = eval(&Model::Substituted2(p), &[y, s * z], &[u]);
        assert!((simp[0] - subst[0]).abs() < 1e-12);
        assert!((s * simp[1] - subst[1]).abs() < 1e-12);
    }
}

#[test]
fn custom_models_see_time_and_parameters() {
    let m = Model::Custom(from_expressions(1, &["k*t - x1"], 0, Bindings::new().with("k", 2.0)).unwrap());
    let mut dx = [0.0];
    m.rhs(3.0, &[1.0], &[], &mut dx).unwrap();
    assert_eq!(dx, [5.0]);
}
