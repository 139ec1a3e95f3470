//! Fixtures shared by the criterion benches.

use fairalloc_core::scenario_gen::{generate, RandomSpec};
use fairalloc_core::{outer, Scenario};

/// A random scenario with the PoF/PoE distributions.
pub fn pofpoe_scenario(n_users: usize, seed: u64) -> Scenario {
    generate(&RandomSpec::pofpoe(seed, n_users))
}

/// A load in the middle of the scenario's search range.
pub fn mid_load(sc: &Scenario) -> f64 {
    0.5 * outer::default_l_max(sc).expect("generated scenarios have a positive load range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        let sc = pofpoe_scenario(10, 1);
        assert_eq!(sc.n_users(), 10);
        assert!(mid_load(&sc) > 0.0);
    }
}
