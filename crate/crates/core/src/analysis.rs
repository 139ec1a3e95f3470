//! α-sweeps, Pareto dominance, and sampled optimality checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{price_of_efficiency, price_of_fairness, FairnessParam};
use crate::inner::SolverConfig;
use crate::model::{AllocationResult, Scenario, SurplusProfile};
use crate::outer::{self, default_l_max, OuterConfig};

/// Comparison slack for dominance tests.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub alpha: FairnessParam,
    pub s: SurplusProfile,
    pub x: Vec<f64>,
    pub l: f64,
    pub total_surplus: f64,
    pub min_surplus: f64,
    /// `None` when the sweep has no α = 0 anchor.
    pub pof: Option<f64>,
    /// `None` when the sweep has no max-min anchor.
    pub poe: Option<f64>,
}

impl ParetoPoint {
    fn from_result(r: &AllocationResult) -> Self {
        Self {
            alpha: r.alpha,
            s: r.s.clone(),
            x: r.x.clone(),
            l: r.l,
            total_surplus: r.s.total(),
            min_surplus: r.s.min(),
            pof: None,
            poe: None,
        }
    }
}

/// Runs the outer search for each α and fills PoF/PoE against the α = 0
/// and max-min points of the same sweep.
pub fn sweep_alpha(
    sc: &Scenario,
    alphas: &[FairnessParam],
    cfg: &OuterConfig,
    solver: &SolverConfig,
) -> Result<Vec<ParetoPoint>> {
    Ok(sweep_alpha_with_results(sc, alphas, cfg, solver)?.0)
}

/// Like [`sweep_alpha`], also returning the underlying results.
pub fn sweep_alpha_with_results(
    sc: &Scenario,
    alphas: &[FairnessParam],
    cfg: &OuterConfig,
    solver: &SolverConfig,
) -> Result<(Vec<ParetoPoint>, Vec<AllocationResult>)> {
    if alphas.is_empty() {
        return Err(Error::Domain("alpha list is empty".into()));
    }
    let results =
        alphas.iter().map(|&f| outer::solve(sc, f, cfg, solver).map(|o| o.result)).collect::<Result<Vec<_>>>()?;
    let mut points: Vec<ParetoPoint> = results.iter().map(ParetoPoint::from_result).collect();
    fill_prices(&mut points)?;
    Ok((points, results))
}

fn fill_prices(points: &mut [ParetoPoint]) -> Result<()> {
    let system = points.iter().find(|p| p.alpha.is_social_welfare()).map(|p| p.total_surplus);
    let maxmin = points.iter().find(|p| p.alpha == FairnessParam::MaxMin).map(|p| p.min_surplus);
    for p in points.iter_mut() {
        if let Some(sys) = system {
            p.pof = Some(if p.alpha.is_social_welfare() { 0.0 } else { price_of_fairness(sys, p.total_surplus)? });
        }
        if let Some(mm) = maxmin {
            p.poe = Some(if p.alpha == FairnessParam::MaxMin { 0.0 } else { price_of_efficiency(mm, p.min_surplus)? });
        }
    }
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `a` weakly above `b` everywhere and strictly somewhere, with slack `tol`.
fn dominates(a: &[f64], b: &[f64], tol: f64) -> bool {
    let mut strict = false;
    for (&ai, &bi) in a.iter().zip(b) {
        if ai < bi - tol {
            return false;
        }
        if ai > bi + tol {
            strict = true;
        }
    }
    strict
}

/// True iff some candidate dominates `s`.
pub fn is_dominated(s: &SurplusProfile, candidates: &[SurplusProfile]) -> Result<bool> {
    for c in candidates {
        check_len(s.len(), c.len())?;
    }
    Ok(candidates.iter().any(|c| dominates(&c.0, &s.0, DOMINANCE_TOL)))
}

/// Drops points whose profile is dominated by another point in the list.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            !points
                .iter()
                .enumerate()
                .any(|(j, q)| j != *i && q.s.len() == p.s.len() && dominates(&q.s.0, &p.s.0, DOMINANCE_TOL))
        })
        .map(|(_, p)| p.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfInequalityReport {
    pub max_value: f64,
    /// Indices of samples with `Σ (s_i − s_i^PF)/s_i^PF` above the tolerance.
    pub violations: Vec<usize>,
    pub samples: usize,
}

pub const PF_TOLERANCE: f64 = 1e-6;

/// Aggregated proportional change of each sample relative to `s_pf`.
pub fn check_pf_inequality(s_pf: &SurplusProfile, samples: &[SurplusProfile]) -> Result<PfInequalityReport> {
    if let Some((i, v)) = s_pf.0.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!("reference surplus s[{i}] = {v} must be > 0")));
    }
    let mut max_value = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        check_len(s_pf.len(), s.len())?;
        let change: f64 = s.0.iter().zip(&s_pf.0).map(|(si, pi)| (si - pi) / pi).sum();
        if change > PF_TOLERANCE {
            violations.push(k);
        }
        max_value = max_value.max(change);
    }
    Ok(PfInequalityReport { max_value, violations, samples: samples.len() })
}

/// A feasible `(x, l)` with its surplus profile.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSample {
    pub x: Vec<f64>,
    pub l: f64,
    pub s: SurplusProfile,
}

/// Draws feasible allocations: `l ~ U(0, l_max]`, then `x = l·w` with `w`
/// uniform on the simplex (normalized exponentials), rejecting box
/// violations.
pub struct FeasibleSampler<'a> {
    sc: &'a Scenario,
    l_max: f64,
    rng: ChaCha8Rng,
}

const MAX_REJECTIONS: usize = 10_000;

impl<'a> FeasibleSampler<'a> {
    pub fn new(sc: &'a Scenario, seed: u64) -> Result<Self> {
        let l_max = default_l_max(sc)?;
        if !(l_max > 0.0) {
            return Err(Error::Infeasible("scenario admits no positive load".into()));
        }
        Ok(Self { sc, l_max, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn simplex_weights(&mut self) -> Vec<f64> {
        let e: Vec<f64> = (0..self.sc.n_users()).map(|_| -(1.0 - self.rng.gen::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    /// A sample spread over the whole feasible set.
    pub fn far(&mut self) -> Option<FeasibleSample> {
        for _ in 0..MAX_REJECTIONS {
            let l = self.l_max * (1.0 - self.rng.gen::<f64>());
            let ub = self.sc.upper_bounds(l).ok()?;
            if ub.iter().sum::<f64>() < l {
                continue;
            }
            let x: Vec<f64> = self.simplex_weights().into_iter().map(|w| w * l).collect();
            if x.iter().zip(&ub).any(|(xi, ui)| xi > ui) {
                continue;
            }
            if let Some(sample) = self.accept(x) {
                return Some(sample);
            }
        }
        None
    }

    /// A sample near `center`: each coordinate moved by up to `radius`
    /// (relative to `1 + x_i`), with `l` following `Σx`.
    pub fn near(&mut self, center: &[f64], radius: f64) -> Option<FeasibleSample> {
        for _ in 0..MAX_REJECTIONS {
            let x: Vec<f64> = center
                .iter()
                .map(|&c| (c + radius * (1.0 + c.abs()) * (2.0 * self.rng.gen::<f64>() - 1.0)).max(0.0))
                .collect();
            if let Some(sample) = self.accept(x) {
                return Some(sample);
            }
        }
        None
    }

    fn accept(&self, x: Vec<f64>) -> Option<FeasibleSample> {
        let l: f64 = x.iter().sum();
        let s = self.sc.surplus_profile(&x, l).ok()?;
        s.0.iter().all(|&v| v >= 0.0).then_some(FeasibleSample { x, l, s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoProbeReport {
    pub probes: usize,
    pub dominating: usize,
    /// Up to ten dominating profiles, for inspection.
    pub examples: Vec<SurplusProfile>,
}

/// Margin a probe must gain on some component before it counts as
/// dominating; absorbs solver error in the result.
pub const PROBE_TOLERANCE: f64 = 1e-6;

/// Searches `n_probes` feasible points (half near the result, half spread
/// out) for one whose surplus dominates the result's.
pub fn verify_pareto_optimality(
    result: &AllocationResult,
    sc: &Scenario,
    n_probes: usize,
    seed: u64,
) -> Result<ParetoProbeReport> {
    let mut sampler = FeasibleSampler::new(sc, seed)?;
    let samples: Vec<SurplusProfile> = (0..n_probes)
        .filter_map(|k| {
            if k % 2 == 0 {
                let radius = 10f64.powi(-(((k / 2) % 6) as i32) - 1);
                sampler.near(&result.x, radius)
            } else {
                sampler.far()
            }
            .map(|p| p.s)
        })
        .collect();
    probe_domination(&result.s, &samples)
}

/// Counts samples that are nowhere below `s` and exceed it by more than
/// [`PROBE_TOLERANCE`] somewhere.
pub fn probe_domination(s: &SurplusProfile, samples: &[SurplusProfile]) -> Result<ParetoProbeReport> {
    let mut dominating = 0;
    let mut examples = Vec::new();
    for p in samples {
        check_len(s.len(), p.len())?;
        let weakly_above = p.0.iter().zip(&s.0).all(|(pi, si)| pi >= si);
        if weakly_above && p.0.iter().zip(&s.0).any(|(pi, si)| *pi > si + PROBE_TOLERANCE) {
            dominating += 1;
            if examples.len() < 10 {
                examples.push(p.clone());
            }
        }
    }
    Ok(ParetoProbeReport { probes: samples.len(), dominating, examples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostModel, QuadraticUtility};

    fn sp(v: &[f64]) -> SurplusProfile {
        SurplusProfile(v.to_vec())
    }

    fn point(s: &[f64]) -> ParetoPoint {
        ParetoPoint {
            alpha: FairnessParam::Alpha(0.0),
            s: sp(s),
            x: vec![0.0; s.len()],
            l: 0.0,
            total_surplus: s.iter().sum(),
            min_surplus: s.iter().copied().fold(f64::INFINITY, f64::min),
            pof: None,
            poe: None,
        }
    }

    fn two_user() -> Scenario {
        Scenario::new(
            vec![QuadraticUtility::new(2.0, 3.0).unwrap(), QuadraticUtility::new(2.0, 6.0).unwrap()],
            CostModel::unit_linear(),
        )
        .unwrap()
    }

    #[test]
    fn dominance_examples() {
        assert!(is_dominated(&sp(&[1.0, 1.0]), &[sp(&[2.0, 1.0])]).unwrap());
        assert!(!is_dominated(&sp(&[1.0, 2.0]), &[sp(&[2.0, 1.0])]).unwrap());
        assert!(!is_dominated(&sp(&[1.0, 1.0]), &[sp(&[1.0, 1.0])]).unwrap());
        assert!(is_dominated(&sp(&[1.0, 1.0]), &[sp(&[1.0])]).is_err());
    }

    #[test]
    fn filter_examples() {
        let out = pareto_filter(&[point(&[1.0, 1.0]), point(&[2.0, 2.0])]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].s, sp(&[2.0, 2.0]));

        let chain = [point(&[1.0, 3.0]), point(&[2.0, 2.0]), point(&[3.0, 1.0])];
        assert_eq!(pareto_filter(&chain), chain.to_vec());

        let dup = [point(&[1.0, 1.0]), point(&[1.0, 1.0])];
        assert_eq!(pareto_filter(&dup).len(), 2);
    }

    #[test]
    fn pf_inequality_examples() {
        let pf = sp(&[0.5, 2.0, 1.0]);
        let r = check_pf_inequality(&pf, std::slice::from_ref(&pf)).unwrap();
        assert_eq!(r.max_value, 0.0);
        let r = check_pf_inequality(&pf, &[sp(&[0.0, 0.0, 0.0])]).unwrap();
        assert_eq!(r.max_value, -3.0);
        assert!(r.violations.is_empty());
        assert!(check_pf_inequality(&sp(&[0.0, 1.0]), &[]).is_err());
    }

    #[test]
    fn sweep_anchors_have_zero_prices() {
        let alphas = [FairnessParam::Alpha(0.0)];
        let pts = sweep_alpha(&two_user(), &alphas, &OuterConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].pof, Some(0.0));
        assert_eq!(pts[0].poe, None);

        let pts =
            sweep_alpha(&two_user(), &[FairnessParam::MaxMin], &OuterConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(pts[0].poe, Some(0.0));
    }

    #[test]
    fn two_user_sweep_orders_total_and_min() {
        let alphas = crate::fairness::parse_alpha_list("0,0.5,1,2,inf").unwrap();
        let pts = sweep_alpha(&two_user(), &alphas, &OuterConfig::default(), &SolverConfig::default()).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].total_surplus < w[0].total_surplus, "{w:?}");
            assert!(w[1].min_surplus > w[0].min_surplus, "{w:?}");
        }
        for p in &pts {
            assert_eq!(p.total_surplus, p.s.total());
            assert_eq!(p.min_surplus, p.s.min());
            assert!(p.pof.unwrap() >= -1e-9 && p.pof.unwrap() <= 1.0);
            assert!(p.poe.unwrap() >= -1e-9 && p.poe.unwrap() <= 1.0);
        }
    }

    #[test]
    fn sampler_stays_feasible() {
        let sc = two_user();
        let mut sampler = FeasibleSampler::new(&sc, 9).unwrap();
        for _ in 0..500 {
            let p = sampler.far().unwrap();
            assert!((p.x.iter().sum::<f64>() - p.l).abs() < 1e-12);
            assert!(p.s.0.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn probes_against_optimum_and_perturbation() {
        let sc = two_user();
        let r = outer::solve(&sc, FairnessParam::Alpha(1.0), &OuterConfig::default(), &SolverConfig::default())
            .unwrap()
            .result;
        let rep = probe_domination(&r.s, std::slice::from_ref(&r.s)).unwrap();
        assert_eq!(rep.dominating, 0);
        let rep = verify_pareto_optimality(&r, &sc, 10_000, 1).unwrap();
        assert_eq!(rep.dominating, 0, "{:?}", rep.examples);

        // shrink both allocations: moving back to the optimum raises both surpluses
        let mut worse = r.clone();
        worse.x = r.x.iter().map(|v| v * 0.7).collect();
        worse.l = worse.x.iter().sum();
        worse.s = sc.surplus_profile(&worse.x, worse.l).unwrap();
        let rep = verify_pareto_optimality(&worse, &sc, 10_000, 1).unwrap();
        assert!(rep.dominating > 0);
    }
}
