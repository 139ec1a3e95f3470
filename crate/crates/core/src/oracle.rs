//! Exhaustive reference optimizer for up to three users.
//!
//! The equality `Σx = l` is eliminated by gridding the first `N − 1`
//! coordinates and solving for the last, so every evaluated point is exactly
//! on the load slice.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{phi, ExtReal, FairnessParam};
use crate::inner::InnerSolution;
use crate::model::{surplus, AllocationResult, Method, Scenario, SurplusProfile};
use crate::outer::default_l_max;

pub const MAX_USERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Points per free axis; `None` picks 2000 for N ≤ 2 and 100 for N = 3.
    pub grid_resolution: Option<usize>,
    /// Points on the outer load grid.
    pub l_resolution: usize,
    /// Regrid rounds around the incumbent after the coarse pass.
    pub zoom_levels: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { grid_resolution: None, l_resolution: 400, zoom_levels: 3 }
    }
}

impl OracleConfig {
    fn resolution(&self, n: usize) -> Result<usize> {
        let r = self.grid_resolution.unwrap_or(if n <= 2 { 2000 } else { 100 });
        if r < 2 || self.l_resolution < 2 {
            return Err(Error::InvalidConfig("oracle resolutions must be >= 2".into()));
        }
        Ok(r)
    }
}

fn check_size(sc: &Scenario) -> Result<()> {
    if sc.n_users() > MAX_USERS {
        return Err(Error::Unsupported(format!("brute force handles at most {MAX_USERS} users, got {}", sc.n_users())));
    }
    Ok(())
}

/// `r` evenly spaced points covering `[lo, hi]`.
fn axis(lo: f64, hi: f64, r: usize) -> impl Iterator<Item = f64> {
    let span = hi - lo;
    (0..r).map(move |k| if k + 1 == r { hi } else { lo + span * k as f64 / (r - 1) as f64 })
}

struct Candidate {
    x: Vec<f64>,
    value: f64,
}

/// Evaluates Φ at `x`; priced-out users are left out when zero surplus would
/// send the objective to −∞. Returns None outside the feasible set.
fn score(sc: &Scenario, f: FairnessParam, l: f64, x: &[f64], ub: &[f64]) -> Option<f64> {
    let p = sc.price(l).ok()?;
    let mut kept = Vec::with_capacity(x.len());
    for ((u, &xi), &ui) in sc.users().iter().zip(x).zip(ub) {
        let s = surplus(u, xi, p).ok()?;
        if s < 0.0 {
            return None;
        }
        if ui > 0.0 || !f.requires_positive() {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Some(f64::NEG_INFINITY);
    }
    phi(&SurplusProfile(kept), f).ok().map(ExtReal::to_f64)
}

/// Points per axis in each zoom round; the window spans ±2 previous cells,
/// so every round shrinks the cell tenfold.
const ZOOM_POINTS: usize = 41;

/// Best grid point on `{Σx = l, 0 ≤ x ≤ ub}`, followed by
/// `cfg.zoom_levels` regrids around the incumbent. Φ is concave in `x` at
/// fixed `l`, so zooming cannot leave the basin of the global maximum.
pub fn brute_force_inner(sc: &Scenario, f: FairnessParam, l: f64, cfg: &OracleConfig) -> Result<InnerSolution> {
    check_size(sc)?;
    let r = cfg.resolution(sc.n_users())?;
    let ub = sc.upper_bounds(l)?;
    let degenerate = f.requires_positive() && ub.iter().any(|&u| u <= 0.0);
    let mut best: Option<Candidate> = None;
    let offer = |best: &mut Option<Candidate>, x: Vec<f64>| {
        if let Some(v) = score(sc, f, l, &x, &ub) {
            if best.as_ref().is_none_or(|b| v > b.value) {
                *best = Some(Candidate { x, value: v });
            }
        }
    };
    // feasible range of x1 once x0 is fixed (three users)
    let x1_range = |x0: f64| {
        let rest = l - x0;
        ((rest - ub[2]).max(0.0), ub[1].min(rest))
    };
    // free-axis windows and their point counts; the N=3 inner window is
    // intersected with the feasible range for each x0
    let x0_full = match sc.n_users() {
        1 => (l, l),
        2 => ((l - ub[1]).max(0.0), ub[0].min(l)),
        _ => (0.0, ub[0].min(l)),
    };
    let mut x0_win = x0_full;
    let mut x1_win = (f64::NEG_INFINITY, f64::INFINITY);
    let mut points = r;
    for _ in 0..=cfg.zoom_levels {
        if x0_win.0 > x0_win.1 {
            break;
        }
        match sc.n_users() {
            1 => {
                if l <= ub[0] {
                    offer(&mut best, vec![l]);
                }
            }
            2 => {
                for x0 in axis(x0_win.0, x0_win.1, points) {
                    offer(&mut best, vec![x0, l - x0]);
                }
            }
            _ => {
                for x0 in axis(x0_win.0, x0_win.1, points) {
                    let (lo, hi) = x1_range(x0);
                    let (lo, hi) = (lo.max(x1_win.0), hi.min(x1_win.1));
                    if lo > hi {
                        continue;
                    }
                    for x1 in axis(lo, hi, points) {
                        offer(&mut best, vec![x0, x1, l - x0 - x1]);
                    }
                }
            }
        }
        let Some(b) = best.as_ref() else { break };
        if sc.n_users() == 1 {
            break;
        }
        let h0 = (x0_win.1 - x0_win.0) / (points - 1) as f64;
        x0_win = ((b.x[0] - 2.0 * h0).max(x0_full.0), (b.x[0] + 2.0 * h0).min(x0_full.1));
        if sc.n_users() == 3 {
            let (lo, hi) = x1_range(b.x[0]);
            let (lo, hi) = (lo.max(x1_win.0), hi.min(x1_win.1));
            let h1 = (hi - lo) / (points - 1) as f64;
            x1_win = (b.x[1] - 2.0 * h1, b.x[1] + 2.0 * h1);
        }
        points = ZOOM_POINTS;
    }
    Ok(match best {
        Some(c) => InnerSolution {
            x: c.x,
            value: ExtReal::from_f64(c.value),
            feasible: c.value > f64::NEG_INFINITY || !f.requires_positive(),
            kkt_residual: f64::NAN,
            iterations: 0,
            degenerate,
        },
        None => InnerSolution {
            x: vec![0.0; sc.n_users()],
            value: ExtReal::NegInf,
            feasible: false,
            kkt_residual: f64::NAN,
            iterations: 0,
            degenerate: false,
        },
    })
}

fn tier(sol: &InnerSolution) -> (u8, f64) {
    let t = match (sol.feasible, sol.degenerate) {
        (false, _) => 0,
        (true, true) => 1,
        (true, false) => 2,
    };
    (t, sol.value.to_f64())
}

/// Outer grid over `l ∈ (0, l_max]` with [`brute_force_inner`] at each load.
pub fn brute_force_joint(sc: &Scenario, f: FairnessParam, cfg: &OracleConfig) -> Result<AllocationResult> {
    brute_force_joint_on(sc, f, cfg, default_l_max(sc)?)
}

pub fn brute_force_joint_on(
    sc: &Scenario,
    f: FairnessParam,
    cfg: &OracleConfig,
    l_max: f64,
) -> Result<AllocationResult> {
    check_size(sc)?;
    cfg.resolution(sc.n_users())?;
    if !(l_max > 0.0) {
        return Err(Error::Infeasible(format!("no positive load to search (l_max = {l_max})")));
    }
    let steps = cfg.l_resolution;
    let sols: Vec<(f64, InnerSolution)> = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let l = l_max * k as f64 / steps as f64;
            brute_force_inner(sc, f, l, cfg).map(|s| (l, s))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<&(f64, InnerSolution)> = None;
    for cand in &sols {
        if !cand.1.feasible {
            continue;
        }
        if best.is_none_or(|b| {
            let (tc, vc) = tier(&cand.1);
            let (tb, vb) = tier(&b.1);
            tc > tb || (tc == tb && vc > vb)
        }) {
            best = Some(cand);
        }
    }
    let (l, sol) = best.ok_or_else(|| Error::Infeasible("no feasible oracle grid point".into()))?;
    let s = sc.surplus_profile(&sol.x, *l)?;
    Ok(AllocationResult {
        alpha: f,
        x: sol.x.clone(),
        l: *l,
        s,
        objective: sol.value,
        kkt_residual: f64::NAN,
        iterations: steps,
        method: Method::Oracle,
        degenerate: sol.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostModel, QuadraticUtility};

    fn scenario(users: &[(f64, f64)]) -> Scenario {
        Scenario::new(
            users.iter().map(|&(q, b)| QuadraticUtility::new(q, b).unwrap()).collect(),
            CostModel::unit_linear(),
        )
        .unwrap()
    }

    #[test]
    fn single_user_takes_the_load() {
        let sol = brute_force_inner(&scenario(&[(2.0, 4.0)]), FairnessParam::Alpha(1.0), 0.8, &OracleConfig::default())
            .unwrap();
        assert_eq!(sol.x, vec![0.8]);
    }

    #[test]
    fn symmetric_pair_within_one_cell() {
        let cfg = OracleConfig::default();
        let l = 1.3;
        for f in [FairnessParam::Alpha(0.0), FairnessParam::Alpha(2.0), FairnessParam::MaxMin] {
            let sol = brute_force_inner(&scenario(&[(2.0, 4.0), (2.0, 4.0)]), f, l, &cfg).unwrap();
            assert!((sol.x[0] - l / 2.0).abs() <= l / 1999.0, "{f}: {:?}", sol.x);
        }
    }

    #[test]
    fn single_user_joint_matches_calculus() {
        // J(l) = -2l² + 4l on l ∈ (0, 4], optimum J(1) = 2 on the grid
        let r =
            brute_force_joint(&scenario(&[(2.0, 4.0)]), FairnessParam::Alpha(0.0), &OracleConfig::default()).unwrap();
        assert!((r.l - 1.0).abs() < 1e-12, "{}", r.l);
        assert!((r.objective.to_f64() - 2.0).abs() < 1e-12);
        assert_eq!(r.method, Method::Oracle);
    }

    #[test]
    fn single_feasible_grid_point_is_returned() {
        // user with ub(l) = 2(1 - l)/1: only l = 0.5 on a 2-point grid over (0, 1]
        let sc = scenario(&[(1.0, 1.0)]);
        let cfg = OracleConfig { l_resolution: 2, ..OracleConfig::default() };
        let r = brute_force_joint(&sc, FairnessParam::Alpha(0.0), &cfg).unwrap();
        assert_eq!(r.l, 0.5);
    }

    #[test]
    fn two_user_maxmin_surpluses_equal_within_a_cell() {
        let sc = scenario(&[(2.0, 3.0), (2.0, 6.0)]);
        let r = brute_force_joint(&sc, FairnessParam::MaxMin, &OracleConfig::default()).unwrap();
        // |ds/dx| ≤ 6 here, one cell is at most l/1999
        let cell = 6.0 * r.l / 1999.0;
        assert!((r.s.0[0] - r.s.0[1]).abs() <= cell, "{:?}", r.s);
    }

    #[test]
    fn rejects_four_users() {
        let sc = scenario(&[(1.0, 2.0); 4]);
        assert!(brute_force_inner(&sc, FairnessParam::Alpha(0.0), 1.0, &OracleConfig::default()).is_err());
        assert!(brute_force_joint(&sc, FairnessParam::Alpha(0.0), &OracleConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let sc = scenario(&[(1.5, 3.0), (2.5, 5.0), (1.0, 4.0)]);
        let cfg = OracleConfig { grid_resolution: Some(60), l_resolution: 50, zoom_levels: 2 };
        let a = brute_force_joint(&sc, FairnessParam::Alpha(1.0), &cfg).unwrap();
        let b = brute_force_joint(&sc, FairnessParam::Alpha(1.0), &cfg).unwrap();
        assert_eq!((&a.x, a.l, a.objective), (&b.x, b.l, b.objective));
    }
}
