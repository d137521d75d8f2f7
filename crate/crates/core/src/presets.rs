//! Named reference models used by the tests, the acceptance suite and the
//! CLI `--preset` flag.

use crate::model::{Model, ModelSpec, NegJumpDist};
use crate::risk::{RiskModel, RiskSpec};

/// Scalar model with only positive jumps: `lambda = 2`, `c = 1`.
pub fn spec_s1() -> ModelSpec {
    ModelSpec {
        nu: vec![1.0],
        p: vec![vec![1.0]],
        lambda: vec![2.0],
        c: vec![1.0],
        pos_jump_prob: vec![1.0],
        neg_jump: vec![NegJumpDist::empty()],
        trans_jump: None,
    }
}

/// Scalar model `lambda = 3`, half the jumps `Exp(1)` upward, half `-Exp(1)`.
pub fn spec_s2() -> ModelSpec {
    ModelSpec {
        nu: vec![1.0],
        p: vec![vec![1.0]],
        lambda: vec![3.0],
        c: vec![1.0],
        pos_jump_prob: vec![0.5],
        neg_jump: vec![NegJumpDist::exponential(0.5, 1.0)],
        trans_jump: None,
    }
}

/// Two-state model with a hyperexponential negative jump law and
/// nonzero jumps at chain transitions.
pub fn spec_m2() -> ModelSpec {
    let mixed = NegJumpDist {
        exp_components: vec![
            crate::model::ExpComponent { weight: 0.3, rate: 2.0 },
            crate::model::ExpComponent { weight: 0.3, rate: 0.5 },
        ],
        atoms: vec![],
    };
    let mut t12 = NegJumpDist::exponential(0.5, 3.0);
    t12.atoms.push(crate::model::JumpAtom { weight: 0.5, location: 0.0 });
    let mut t21 = NegJumpDist::exponential(0.3, 1.0);
    t21.atoms.push(crate::model::JumpAtom { weight: 0.7, location: 0.0 });
    ModelSpec {
        nu: vec![1.0, 2.0],
        p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        lambda: vec![2.0, 3.0],
        c: vec![1.5, 2.0],
        pos_jump_prob: vec![0.6, 0.4],
        neg_jump: vec![NegJumpDist::exponential(0.4, 1.0), mixed],
        trans_jump: Some(vec![
            vec![NegJumpDist::empty(), t12],
            vec![t21, NegJumpDist::empty()],
        ]),
    }
}

/// Two-state model with positive stationary drift and `c_k > 2`.
pub fn spec_d2() -> ModelSpec {
    ModelSpec {
        nu: vec![1.0, 1.0],
        p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        lambda: vec![4.0, 3.0],
        c: vec![3.0, 4.0],
        pos_jump_prob: vec![0.7, 0.5],
        neg_jump: vec![
            NegJumpDist::exponential(0.3, 2.0),
            NegJumpDist::exponential(0.5, 3.0),
        ],
        trans_jump: None,
    }
}

/// Two-state chain with `xi` identically zero.
pub fn spec_zero() -> ModelSpec {
    ModelSpec {
        nu: vec![1.0, 2.0],
        p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        lambda: vec![0.0, 0.0],
        c: vec![1.0, 1.0],
        pos_jump_prob: vec![1.0, 1.0],
        neg_jump: vec![NegJumpDist::empty(), NegJumpDist::empty()],
        trans_jump: None,
    }
}

pub fn model_s1() -> Model {
    Model::new(spec_s1()).expect("S1 is valid")
}

pub fn model_s2() -> Model {
    Model::new(spec_s2()).expect("S2 is valid")
}

pub fn model_m2() -> Model {
    Model::new(spec_m2()).expect("M2 is valid")
}

pub fn model_d2() -> Model {
    Model::new(spec_d2()).expect("D2 is valid")
}

pub fn model_zero() -> Model {
    Model::new(spec_zero()).expect("zero model is valid")
}

/// Looks a preset up by its lowercase name.
pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "s1" => Some(spec_s1()),
        "s2" => Some(spec_s2()),
        "m2" => Some(spec_m2()),
        "d2" => Some(spec_d2()),
        "zero" => Some(spec_zero()),
        _ => None,
    }
}

/// Scalar risk scenario with zero drift: premiums and claims both `Exp(1)`
/// at rate 1, cap 2, start 1.
pub fn spec_r1() -> RiskSpec {
    RiskSpec {
        nu: vec![1.0],
        p: vec![vec![1.0]],
        lambda1: vec![1.0],
        lambda2: vec![1.0],
        c: vec![1.0],
        claims: vec![NegJumpDist::exponential(1.0, 1.0)],
        b: 2.0,
        u: 1.0,
    }
}

/// As R1 with claim rate 0.5, so the drift is 0.5.
pub fn spec_r2() -> RiskSpec {
    RiskSpec {
        lambda2: vec![0.5],
        ..spec_r1()
    }
}

/// Two-state risk scenario with positive drift and a hyperexponential claim
/// law in the second state.
pub fn spec_risk_m2() -> RiskSpec {
    let mixed = NegJumpDist {
        exp_components: vec![
            crate::model::ExpComponent { weight: 0.5, rate: 2.0 },
            crate::model::ExpComponent { weight: 0.5, rate: 0.5 },
        ],
        atoms: vec![],
    };
    RiskSpec {
        nu: vec![1.0, 2.0],
        p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        lambda1: vec![2.0, 1.5],
        lambda2: vec![1.0, 1.0],
        c: vec![1.0, 1.5],
        claims: vec![NegJumpDist::exponential(1.0, 1.0), mixed],
        b: 2.0,
        u: 1.0,
    }
}

pub fn risk_r1() -> RiskModel {
    RiskModel::new(spec_r1()).expect("R1 is valid")
}

pub fn risk_r2() -> RiskModel {
    RiskModel::new(spec_r2()).expect("R2 is valid")
}

pub fn risk_m2() -> RiskModel {
    RiskModel::new(spec_risk_m2()).expect("risk M2 is valid")
}

/// Looks a risk preset up by its lowercase name.
pub fn risk_by_name(name: &str) -> Option<RiskSpec> {
    match name {
        "r1" => Some(spec_r1()),
        "r2" => Some(spec_r2()),
        "rm2" => Some(spec_risk_m2()),
        _ => None,
    }
}

/// A random valid model with `m` states: positive off-diagonal switching
/// probabilities, exponential or atomic negative jumps and, for `m > 1`,
/// jumps at chain transitions.
pub fn random_spec(seed: u64, m: usize) -> ModelSpec {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            if m == 1 {
                return vec![1.0];
            }
            let raw: Vec<f64> = (0..m).map(|r| if r == k { 0.0 } else { rng.random_range(0.2..1.0) }).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|x| x / total).collect()
        })
        .collect();
    let pos: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..0.9)).collect();
    let neg = (0..m)
        .map(|k| {
            let rest = 1.0 - pos[k];
            let share = rng.random_range(0.3..1.0);
            let mut d = NegJumpDist::exponential(rest * share, rng.random_range(0.5..3.0));
            d.atoms.push(crate::model::JumpAtom {
                weight: rest * (1.0 - share),
                location: -rng.random_range(0.1..1.5),
            });
            d
        })
        .collect();
    let trans_jump = (m > 1).then(|| {
        (0..m)
            .map(|k| {
                (0..m)
                    .map(|r| {
                        if p[k][r] == 0.0 {
                            return NegJumpDist::empty();
                        }
                        let moving = rng.random_range(0.0..1.0);
                        let mut d = NegJumpDist::exponential(p[k][r] * moving, rng.random_range(0.5..3.0));
                        d.atoms.push(crate::model::JumpAtom {
                            weight: p[k][r] * (1.0 - moving),
                            location: 0.0,
                        });
                        d
                    })
                    .collect()
            })
            .collect()
    });
    ModelSpec {
        nu: (0..m).map(|_| rng.random_range(0.5..2.0)).collect(),
        p,
        lambda: (0..m).map(|_| rng.random_range(0.5..4.0)).collect(),
        c: (0..m).map(|_| rng.random_range(0.5..3.0)).collect(),
        pos_jump_prob: pos,
        neg_jump: neg,
        trans_jump,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_specs_are_valid() {
        for seed in 0..30 {
            for m in 1..=3 {
                assert!(Model::new(random_spec(seed, m)).is_ok(), "seed {seed}, m {m}");
            }
        }
        assert_eq!(random_spec(4, 2), random_spec(4, 2));
    }
}
