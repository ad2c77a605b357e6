//! Small named models used by tests, the CLI and the documentation.

use crate::model::{CtmdpModel, ModelBuilder};

/// Three states, two actions, one constraint.
///
/// `s0` jumps to `s1` at rate 1 under `a0` and to `s2` at rate 2 under `a1`;
/// `s1` can only leave under `a1` (rate 1 to `s2`); `s2` is absorbing and free.
/// `c_0` charges 1 for `a0` at `s0` and for both actions at `s1`; `c_1`
/// charges 1 for `a1` at `s0`. `d_1 = 0.4`, start in `s0`.
pub fn m3() -> CtmdpModel {
    ModelBuilder::new(["s0", "s1", "s2"], ["a0", "a1"], 1)
        .rate(0, 0, 1, 1.0)
        .rate(0, 1, 2, 2.0)
        .rate(1, 1, 2, 1.0)
        .cost(0, 0, 0, 1.0)
        .cost(0, 1, 0, 1.0)
        .cost(0, 1, 1, 1.0)
        .cost(1, 0, 1, 1.0)
        .bound(1, 0.4)
        .initial(0, 1.0)
        .build()
        .expect("m3 is valid")
}

/// `m` with every cost set to zero.
pub fn zero_costs(m: &CtmdpModel) -> CtmdpModel {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut b = ModelBuilder::new(m.states().to_vec(), m.actions().to_vec(), m.n_constraints())
        .initial_vec(m.initial().to_vec());
    for x in 0..ns {
        for a in 0..na {
            for y in 0..ns {
                b = b.rate(x, a, y, m.rate(x, a, y));
            }
        }
    }
    for (j, &d) in m.bounds().iter().enumerate() {
        b = b.bound(j + 1, d);
    }
    b.build().expect("zeroing costs keeps a model valid")
}

/// One state `x`, one action, no constraints, with the given cost rate. The
/// state has no off-diagonal rates, so it is absorbing.
pub fn single_resting_state(cost: f64) -> CtmdpModel {
    ModelBuilder::new(["x"], ["a"], 0)
        .cost(0, 0, 0, cost)
        .initial(0, 1.0)
        .build()
        .expect("valid")
}
