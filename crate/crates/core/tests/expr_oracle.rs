use invaria::expr::{self, partial_fd, BinOp, Bindings, Expr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single-pass evaluator straight from text, sharing no code with the
/// crate's tokenizer, parser or tree evaluator.
struct Direct<'a> {
    s: &'a [u8],
    i: usize,
    env: &'a [(&'a str, f64)],
}

impl Direct<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i] == b' ' {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn sum(&mut self) -> f64 {
        let mut v = self.product();
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.i += 1;
                    v += self.product();
                }
                Some(b'-') => {
                    self.i += 1;
                    v -= self.product();
                }
                _ => return v,
            }
        }
    }

    fn product(&mut self) -> f64 {
        let mut v = self.signed();
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.i += 1;
                    v *= self.signed();
                }
                Some(b'/') => {
                    self.i += 1;
                    v /= self.signed();
                }
                _ => return v,
            }
        }
    }

    fn signed(&mut self) -> f64 {
        if self.peek() == Some(b'-') {
            self.i += 1;
            return -self.signed();
        }
        let base = self.primary();
        if self.peek() == Some(b'^') {
            self.i += 1;
            let e = self.signed();
            return base.powf(e);
        }
        base
    }

    fn primary(&mut self) -> f64 {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let v = self.sum();
                assert_eq!(self.peek(), Some(b')'));
                self.i += 1;
                v
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
                    self.i += 1;
                }
                std::str::from_utf8(&self.s[start..self.i]).unwrap().parse().unwrap()
            }
            Some(_) => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_') {
                    self.i += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.i]).unwrap();
                self.env.iter().find(|(n, _)| *n == name).unwrap().1
            }
            None => panic!("unexpected end"),
        }
    }
}

fn direct_eval(text: &str, env: &[(&str, f64)]) -> f64 {
    let mut d = Direct { s: text.as_bytes(), i: 0, env };
    let v = d.sum();
    assert_eq!(d.peek(), None, "trailing input in {text}");
    v
}

fn random_text(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.5) {
            ["x1", "x2", "s", "b"][rng.random_range(0..4)].to_string()
        } else {
            format!("{}", rng.random_range(1..50) as f64 / 4.0)
        };
    }
    match rng.random_range(0..7) {
        0 => format!("-{}", random_text(rng, depth - 1)),
        1 => format!("({})", random_text(rng, depth - 1)),
        2 => format!("({})^2", random_text(rng, depth - 1)),
        _ => {
            let op = ["+", "-", "*", "/"][rng.random_range(0..4)];
            format!("{} {op} {}", random_text(rng, depth - 1), random_text(rng, depth - 1))
        }
    }
}

#[test]
fn tree_evaluator_matches_direct_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vars = [("x1", 1.75), ("x2", -0.5), ("s", 0.25), ("b", 3.0)];
    let env: Bindings = vars.iter().copied().collect();
    let mut compared = 0;
    while compared < 100 {
        let text = random_text(&mut rng, 5);
        let expected = direct_eval(&text, &vars);
        let got = expr::parse(&text).unwrap().eval(&env);
        if expected.is_finite() {
            assert_eq!(got.unwrap(), expected, "{text}");
            compared += 1;
        } else {
            assert!(got.is_err(), "{text}");
        }
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..10_000).prop_map(|n| Expr::num(n as f64 / 100.0)),
        "[a-zA-Z_][a-zA-Z0-9_]{0,6}".prop_map(Expr::sym),
    ];
    leaf.prop_recursive(6, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)],
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_round_trips(e in arb_expr()) {
        let text = e.to_string();
        prop_assert_eq!(expr::parse(&text).unwrap(), e, "{}", text);
    }

    #[test]
    fn evaluation_is_pure(e in arb_expr(), v in -10.0f64..10.0) {
        let env: Bindings = e.symbols().into_iter().map(|s| (s, v)).collect();
        let a = e.eval(&env);
        let b = e.eval(&env);
        match (a, b) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

#[test]
fn central_difference_converges_at_second_order() {
    // d/dx (x^3 / (1 + x^2)) at x = 1.3
    let e = expr::parse("x^3/(1 + x^2)").unwrap();
    let x: f64 = 1.3;
    let exact = (3.0 * x * x * (1.0 + x * x) - 2.0 * x.powi(4)) / (1.0 + x * x).powi(2);
    let env = Bindings::new().with("x", x);
    let hs: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
    let pts: Vec<(f64, f64)> =
        hs.iter().map(|&h| (h.ln(), (partial_fd(&e, &env, "x", h).unwrap() - exact).abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    // below ~1e-5 roundoff takes over; the error must still be small there
    let tiny = (partial_fd(&e, &env, "x", 1e-6).unwrap() - exact).abs();
    assert!(tiny < 1e-8, "{tiny}");
}
