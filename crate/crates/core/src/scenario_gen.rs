//! Seeded random scenario families.
//!
//! Generator: ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. User `i` draws from stream `i` of that generator
//! (`set_stream(i)`), so adding users never shifts the draws of earlier ones.
//! Uniform variates are `rng.gen::<f64>()`, which takes 53 random bits into
//! `[0, 1)`. This contract is fixed: changing it changes every recorded
//! experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{CostModel, QuadraticUtility, Scenario};

pub const CLASS1: &str = "class1";
pub const CLASS2: &str = "class2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    PofPoe,
    TwoClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomSpec {
    pub seed: u64,
    pub n_users: usize,
    pub family: Family,
    /// Class sizes for the two-class family; `n_users` is their sum.
    pub class_sizes: (usize, usize),
    /// Common free-energy consumption `b_i / a_i` for the two-class family.
    pub xbar: f64,
    pub cost: CostModel,
}

impl RandomSpec {
    pub fn pofpoe(seed: u64, n_users: usize) -> Self {
        Self { seed, n_users, family: Family::PofPoe, class_sizes: (0, 0), xbar: 10.0, cost: CostModel::unit_linear() }
    }

    pub fn two_class(seed: u64) -> Self {
        Self::two_class_sized(seed, 10, 10)
    }

    pub fn two_class_sized(seed: u64, class1: usize, class2: usize) -> Self {
        Self {
            seed,
            n_users: class1 + class2,
            family: Family::TwoClass,
            class_sizes: (class1, class2),
            xbar: 10.0,
            cost: CostModel::unit_linear(),
        }
    }
}

fn user_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `a_i ~ 1 + U(0,1)`, `b_i ~ 1 + 10(a_i + 1) + 10·U(0,1)`, utility
/// `-(1/2)a_i x² + b_i x`.
pub fn gen_pofpoe_users(spec: &RandomSpec) -> Scenario {
    let users = (0..spec.n_users.max(1))
        .map(|i| {
            let mut rng = user_stream(spec.seed, i);
            let a = 1.0 + rng.gen::<f64>();
            let b = 1.0 + 10.0 * (a + 1.0) + 10.0 * rng.gen::<f64>();
            QuadraticUtility { q: a, b }
        })
        .collect();
    Scenario::new(users, spec.cost).expect("at least one user")
}

/// Class 1 draws `a ~ U(1,2)`, class 2 `a ~ U(3,4)`; `b_i = x̄·a_i`.
pub fn gen_two_class(spec: &RandomSpec) -> Scenario {
    let (n1, n2) = spec.class_sizes;
    let mut users = Vec::with_capacity(n1 + n2);
    let mut labels = Vec::with_capacity(n1 + n2);
    for i in 0..n1 + n2 {
        let mut rng = user_stream(spec.seed, i);
        let base = if i < n1 { 1.0 } else { 3.0 };
        let a = base + rng.gen::<f64>();
        users.push(QuadraticUtility { q: a, b: spec.xbar * a });
        labels.push(if i < n1 { CLASS1 } else { CLASS2 }.to_string());
    }
    Scenario::new(users, spec.cost)
        .and_then(|sc| sc.with_labels(labels))
        .expect("two-class scenario needs at least one user")
}

pub fn generate(spec: &RandomSpec) -> Scenario {
    match spec.family {
        Family::PofPoe => gen_pofpoe_users(spec),
        Family::TwoClass => gen_two_class(spec),
    }
}
