use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wazewski::dsl::{builtin, parse, BinOp, ControlExpr, Controller, Func, VarSet};

const FUNCS: &[&str] = &["sin", "cos", "tan", "atan", "exp", "ln", "sqrt", "abs", "sign", "tanh", "min", "max", "sat"];

fn expr() -> impl Strategy<Value = ControlExpr> {
    let leaf = prop_oneof![
        (0.0f64..1e3).prop_map(ControlExpr::num),
        prop::sample::select(vec!["q", "p", "x", "y", "t"]).prop_map(ControlExpr::var),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(ControlExpr::neg),
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| ControlExpr::binary(op, a, b)),
            (prop::sample::select(FUNCS.to_vec()), prop::collection::vec(inner, 3)).prop_map(|(name, mut args)| {
                let f = Func::from_name(name).unwrap();
                args.truncate(f.arity());
                ControlExpr::call(f, args)
            }),
        ]
    })
}

proptest! {
    #[test]
    fn display_round_trips(e in expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse(&text).unwrap(), e);
    }

    #[test]
    fn evaluation_is_deterministic(e in expr(), q in -4.0f64..4.0, p in -4.0f64..4.0, t in 0.0f64..10.0) {
        let env = [("q", q), ("p", p), ("x", 0.5), ("y", -0.5), ("t", t)];
        // Errors may carry NaN operands, so compare renderings.
        let a = format!("{:?}", e.eval(&env).map(f64::to_bits));
        let b = format!("{:?}", parse(&e.to_string()).unwrap().eval(&env).map(f64::to_bits));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn builtin_bounds_hold() {
    let laws = [
        ("saturated_pd", vec![5.0, 2.0, 1.2, 0.8]),
        ("energy_swingup", vec![3.0, 1.5]),
        ("periodic_forcing", vec![0.5, 6.0]),
        ("constant", vec![-0.3]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, params) in laws {
        let law = builtin(name, &params).unwrap();
        let c = Controller::new(VarSet::Planar, &law).unwrap();
        let bound = c.declared_bound().unwrap();
        for _ in 0..10_000 {
            let state = [rng.random_range(-10.0..10.0), rng.random_range(-50.0..50.0)];
            let t = rng.random_range(0.0..100.0);
            let u = c.u.eval_raw(&state, t).unwrap();
            assert!(u.abs() <= bound, "{name}: |{u}| > {bound} at {state:?}, t = {t}");
        }
    }
}
