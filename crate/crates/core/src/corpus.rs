//! Seeded random models and policies for property checks.
//!
//! A model has 1 to 8 states, 1 to 4 actions and one or two constraints.
//! Each state-action pair is a zero-rate pair with probability 0.2 and
//! otherwise draws every off-diagonal rate from `U[0,5]`. Costs are zero with
//! probability 0.3 and otherwise `U[0,2]`; bounds are `U[0,2]`; the initial
//! distribution is a normalized vector of `U[0,1]` weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classify::Classification;
use crate::model::{CtmdpModel, ModelBuilder, StationaryPolicy};
use crate::reduce::DtmdpModel;

pub const MAX_STATES: usize = 8;
pub const MAX_ACTIONS: usize = 4;
pub const ZERO_RATE_PROB: f64 = 0.2;
pub const ZERO_COST_PROB: f64 = 0.3;

/// Generator for model `index` of the corpus with this seed.
pub fn model_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn random_model<R: Rng>(rng: &mut R) -> CtmdpModel {
    let ns = rng.random_range(1..=MAX_STATES);
    let na = rng.random_range(1..=MAX_ACTIONS);
    let n_constraints = rng.random_range(1..=2);
    let states: Vec<String> = (0..ns).map(|x| format!("x{x}")).collect();
    let actions: Vec<String> = (0..na).map(|a| format!("a{a}")).collect();
    let mut b = ModelBuilder::new(states, actions, n_constraints);
    for x in 0..ns {
        for a in 0..na {
            if rng.random_bool(ZERO_RATE_PROB) {
                continue;
            }
            for y in (0..ns).filter(|&y| y != x) {
                b = b.rate(x, a, y, rng.random_range(0.0..=5.0));
            }
        }
    }
    for i in 0..=n_constraints {
        for x in 0..ns {
            for a in 0..na {
                if !rng.random_bool(ZERO_COST_PROB) {
                    b = b.cost(i, x, a, rng.random_range(0.0..=2.0));
                }
            }
        }
    }
    for j in 1..=n_constraints {
        b = b.bound(j, rng.random_range(0.0..=2.0));
    }
    let w: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = w.iter().sum();
    let initial = if total > 0.0 { w.iter().map(|v| v / total).collect() } else { vec![1.0 / ns as f64; ns] };
    b.initial_vec(initial).build().expect("generated models are valid")
}

/// The first `count` models of the corpus with this seed.
pub fn generate(seed: u64, count: usize) -> Vec<CtmdpModel> {
    (0..count).map(|k| random_model(&mut model_rng(seed, k))).collect()
}

fn positive_row<R: Rng>(rng: &mut R, allowed: impl Fn(usize) -> bool, na: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..na).map(|a| if allowed(a) { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn point_row(a: usize, na: usize) -> Vec<f64> {
    let mut row = vec![0.0; na];
    row[a] = 1.0;
    row
}

/// A CTMDP policy with strictly positive rows, except `f*` on `S2` and `ψ*`
/// off `ζ`.
pub fn random_ct_policy<R: Rng>(rng: &mut R, cls: &Classification, n_actions: usize) -> StationaryPolicy {
    let rows = (0..cls.psi_star.len())
        .map(|x| {
            if !cls.in_zeta(x) {
                point_row(cls.psi_star[x], n_actions)
            } else {
                positive_row(rng, |_| true, n_actions)
            }
        })
        .collect();
    StationaryPolicy::new(rows).expect("rows are distributions")
}

/// A jump-chain policy positive on the non-forbidden actions, `f*` on `S2`,
/// and the lowest action where every action is forbidden.
pub fn random_dt_policy<R: Rng>(rng: &mut R, cls: &Classification, d: &DtmdpModel) -> StationaryPolicy {
    let na = d.n_actions();
    let rows = (0..d.n_states())
        .map(|x| {
            if let Some(f) = cls.f_star[x] {
                point_row(f, na)
            } else if (0..na).all(|a| d.is_forbidden(x, a)) {
                point_row(0, na)
            } else {
                positive_row(rng, |a| !d.is_forbidden(x, a), na)
            }
        })
        .collect();
    StationaryPolicy::new(rows).expect("rows are distributions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use crate::reduce::build_jump_chain;

    #[test]
    fn corpus_is_reproducible_and_valid() {
        let a = generate(1, 30);
        assert_eq!(a, generate(1, 30));
        assert_ne!(a, generate(2, 30));
        for m in &a {
            assert!(validate_model(m).is_valid());
            assert!(m.n_states() <= MAX_STATES && m.n_actions() <= MAX_ACTIONS);
            assert!((1..=2).contains(&m.n_constraints()));
        }
    }

    #[test]
    fn corpus_has_zero_rate_pairs() {
        let ms = generate(7, 100);
        let zero = ms
            .iter()
            .flat_map(|m| (0..m.n_states()).flat_map(move |x| (0..m.n_actions()).map(move |a| m.total_rate(x, a))))
            .filter(|&q| q == 0.0)
            .count();
        assert!(zero > 0);
    }

    #[test]
    fn policies_respect_selectors() {
        for (k, m) in generate(3, 40).iter().enumerate() {
            let cls = Classification::compute(m).unwrap();
            let d = build_jump_chain(m);
            let mut rng = model_rng(99, k);
            let phi = random_ct_policy(&mut rng, &cls, m.n_actions());
            let sigma = random_dt_policy(&mut rng, &cls, &d);
            for x in 0..m.n_states() {
                if !cls.in_zeta(x) {
                    assert_eq!(phi.deterministic_action(x), Some(cls.psi_star[x]));
                } else {
                    assert!(phi.row(x).iter().all(|&p| p > 0.0));
                }
                if let Some(f) = cls.f_star[x] {
                    assert_eq!(sigma.deterministic_action(x), Some(f));
                }
                for a in 0..m.n_actions() {
                    if d.is_forbidden(x, a) && !(0..m.n_actions()).all(|b| d.is_forbidden(x, b)) {
                        assert_eq!(sigma.prob(x, a), 0.0);
                    }
                }
            }
        }
    }
}
