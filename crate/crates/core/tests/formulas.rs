//! Certificate formulas against the frozen extended-precision fixture
//! produced by `tests/oracles/formulas.py`.

#![allow(clippy::excessive_precision)]

use fbcert_core::certificates::{
    beta_coco, beta_strong, epsilon_zero_coco, epsilon_zero_strong, epsilon_zero_strong_with,
    generalization_bound, generalization_bound_with, BoundForm,
};
use fbcert_core::operators::{contraction_factor, LossBound, OperatorConstants};

const FIXTURE: &str = include_str!("data/formula_cases.csv");
const REL_TOL: f64 = 1e-12;

struct Case {
    gamma: f64,
    constants: OperatorConstants,
    s: usize,
    k: usize,
    delta: f64,
    rhat: f64,
    expected: [f64; 7],
}

fn cases() -> Vec<Case> {
    let mut lines = FIXTURE.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("gamma,mu,kappa"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 16);
            let num = |i: usize| f[i].parse::<f64>().unwrap();
            let constants = OperatorConstants::new(
                num(1),
                num(2),
                None,
                num(3),
                LossBound::analytic(num(4)),
            )
            .unwrap();
            Case {
                gamma: num(0),
                constants,
                s: f[5].parse().unwrap(),
                k: f[6].parse().unwrap(),
                delta: num(7),
                rhat: num(8),
                expected: [num(9), num(10), num(11), num(12), num(13), num(14), num(15)],
            }
        })
        .collect()
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

#[test]
fn fixture_has_1000_cases() {
    assert_eq!(cases().len(), 1000);
}

#[test]
fn all_formulas_match_extended_precision() {
    let mut worst = [0.0_f64; 7];
    for (n, c) in cases().iter().enumerate() {
        let lb = c.constants.loss_bound;
        let tau = contraction_factor(c.gamma, &c.constants).unwrap();
        let bs = beta_strong(c.gamma, &c.constants, c.s).unwrap();
        let bc = beta_coco(c.gamma, c.constants.bound_m, c.k, c.s).unwrap();
        let gen = generalization_bound(c.rhat, bs, lb.value, c.s, c.delta).unwrap();
        let gen_rm =
            generalization_bound_with(BoundForm::Removal, c.rhat, bs, lb.value, c.s, c.delta).unwrap();
        let es = epsilon_zero_strong(c.rhat, c.gamma, &c.constants, c.s, c.k, c.delta).unwrap();
        let ec = epsilon_zero_coco(c.rhat, c.gamma, c.constants.bound_m, lb, c.s, c.k, c.delta).unwrap();
        let got = [tau, bs, bc, gen, gen_rm, es.epsilon, ec.epsilon];
        for j in 0..7 {
            let e = rel_err(got[j], c.expected[j]);
            worst[j] = worst[j].max(e);
            assert!(e <= REL_TOL, "case {n} column {j}: got {} want {} (rel {e:e})", got[j], c.expected[j]);
        }
        let removal = epsilon_zero_strong_with(BoundForm::Removal, c.rhat, c.gamma, &c.constants, c.s, c.k, c.delta)
            .unwrap();
        assert!(rel_err(removal.epsilon * c.gamma, c.expected[4]) <= REL_TOL);
    }
    eprintln!("worst relative errors: {worst:?}");
}

#[test]
fn derived_examples() {
    let c = OperatorConstants::new(0.0127, 0.1159, None, 39.2192, LossBound::analytic(24.3852)).unwrap();
    assert!(rel_err(contraction_factor(0.02, &c).unwrap(), 0.999_748_654_974_839_163_45) < 1e-15);
    assert!(rel_err(contraction_factor(0.0001, &c).unwrap(), 0.999_998_730_066_357_684_27) < 1e-15);
    assert!(rel_err(beta_strong(0.02, &c, 3000).unwrap(), 4.160_471_840_066_724_566_7) < REL_TOL);
    assert!(rel_err(beta_coco(0.01, 10.0, 100, 10_000).unwrap(), 0.004) < 1e-15);
    assert!(rel_err(generalization_bound(0.5, 0.01, 2.0, 100, 0.05).unwrap(), 1.244_324_049_204_244_963_9) < 1e-15);
}
