//! Search over the total load `l`.
//!
//! `J(l)` is evaluated on the grid `{Δl, 2Δl, …, l_max}` and the best grid
//! point is refined by golden-section search inside its neighbouring cells,
//! which assumes `J` is single-peaked there. The whole trace is kept so that
//! assumption can be checked after the fact.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{ExtReal, FairnessParam};
use crate::inner::{solve_inner, InnerSolution, SolverConfig};
use crate::model::{AllocationResult, Method, Scenario};

const GRID_POINTS: f64 = 200.0;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterConfig {
    /// Grid step; defaults to `l_max / 200`.
    pub delta_l: Option<f64>,
    /// Search cap; defaults to [`default_l_max`].
    pub l_max: Option<f64>,
    pub refine: bool,
    /// Golden-section tolerance on `l`; defaults to `1e-6 · l_max`.
    pub refine_tolerance: Option<f64>,
    pub unimodality_check: bool,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self { delta_l: None, l_max: None, refine: true, refine_tolerance: None, unimodality_check: true }
    }
}

/// Concrete grid parameters for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedGrid {
    pub delta_l: f64,
    pub l_max: f64,
    pub refine_tolerance: f64,
}

impl OuterConfig {
    pub fn resolve(&self, sc: &Scenario) -> Result<ResolvedGrid> {
        let l_max = match self.l_max {
            Some(v) => v,
            None => default_l_max(sc)?,
        };
        if !(l_max > 0.0 && l_max.is_finite()) {
            return Err(Error::Infeasible(format!("no load with positive surplus exists (l_max = {l_max})")));
        }
        let delta_l = self.delta_l.unwrap_or(l_max / GRID_POINTS);
        if !(delta_l > 0.0 && delta_l.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta_l must be positive, got {delta_l}")));
        }
        let refine_tolerance = self.refine_tolerance.unwrap_or(1e-6 * l_max);
        if !(refine_tolerance > 0.0) {
            return Err(Error::InvalidConfig("refine_tolerance must be positive".into()));
        }
        Ok(ResolvedGrid { delta_l, l_max, refine_tolerance })
    }
}

/// Smallest load beyond which no user keeps a positive surplus.
pub fn default_l_max(sc: &Scenario) -> Result<f64> {
    let c = sc.cost();
    let bmax = sc.users().iter().map(|u| u.b).fold(f64::NEG_INFINITY, f64::max);
    if c.c2 > 0.0 {
        return Ok(((bmax - c.c1) / c.c2).max(0.0));
    }
    let mut total = 0.0;
    for (i, u) in sc.users().iter().enumerate() {
        let ub = u.surplus_bound(c.c1);
        if ub.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "unbounded feasible load: constant price {} with linear utility for user {i}",
                c.c1
            )));
        }
        total += ub;
    }
    Ok(total)
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub l: f64,
    pub value: ExtReal,
    pub feasible: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnimodalityReport {
    pub unimodal: bool,
    /// Trace indices of interior dips.
    pub violations: Vec<usize>,
}

/// Outcome of an outer search: the optimum plus grid diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub result: AllocationResult,
    pub trace: Vec<TracePoint>,
    pub grid: ResolvedGrid,
    /// `J` at the grid argmax, before refinement.
    pub grid_value: ExtReal,
    pub unimodality: Option<UnimodalityReport>,
}

/// Ordering used by every comparison over `l`: feasible beats infeasible,
/// a full objective beats one with priced-out users dropped, then value.
fn rank(sol: &InnerSolution) -> (u8, f64) {
    let tier = match (sol.feasible, sol.degenerate) {
        (false, _) => 0,
        (true, true) => 1,
        (true, false) => 2,
    };
    (tier, sol.value.to_f64())
}

fn better(a: &InnerSolution, b: &InnerSolution) -> bool {
    let (ta, va) = rank(a);
    let (tb, vb) = rank(b);
    ta > tb || (ta == tb && va > vb)
}

fn to_result(sc: &Scenario, f: FairnessParam, l: f64, sol: &InnerSolution, iterations: usize) -> AllocationResult {
    let s = sc.surplus_profile(&clamp_nonneg(&sol.x), l).expect("l >= 0 and sizes match");
    AllocationResult {
        alpha: f,
        x: sol.x.clone(),
        l,
        s,
        objective: sol.value,
        kkt_residual: sol.kkt_residual,
        iterations,
        method: Method::GridInner,
        degenerate: sol.degenerate,
    }
}

fn clamp_nonneg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

struct GridRun {
    best_index: usize,
    best: InnerSolution,
    points: Vec<f64>,
    trace: Vec<TracePoint>,
    iterations: usize,
}

fn run_grid(sc: &Scenario, f: FairnessParam, grid: &ResolvedGrid, solver: &SolverConfig) -> Result<GridRun> {
    let count = (grid.l_max / grid.delta_l + 1e-9).floor() as usize;
    if count == 0 {
        return Err(Error::InvalidConfig(format!("delta_l {} exceeds l_max {}", grid.delta_l, grid.l_max)));
    }
    let points: Vec<f64> = (1..=count).map(|k| k as f64 * grid.delta_l).collect();
    let sols: Vec<InnerSolution> = points.par_iter().map(|&l| solve_inner(sc, f, l, solver)).collect::<Result<_>>()?;

    let mut best_index = None;
    for (k, sol) in sols.iter().enumerate() {
        if !sol.feasible {
            continue;
        }
        match best_index {
            None => best_index = Some(k),
            Some(b) if better(sol, &sols[b]) => best_index = Some(k),
            _ => {}
        }
    }
    let best_index =
        best_index.ok_or_else(|| Error::Infeasible(format!("every grid load in (0, {}] is infeasible", grid.l_max)))?;
    let trace = points
        .iter()
        .zip(&sols)
        .map(|(&l, s)| TracePoint { l, value: s.value, feasible: s.feasible, degenerate: s.degenerate })
        .collect();
    let iterations = sols.iter().map(|s| s.iterations).sum();
    let best = sols[best_index].clone();
    Ok(GridRun { best_index, best, points, trace, iterations })
}

/// Grid search over `l` keeping the first strict improvement.
pub fn grid_search(sc: &Scenario, f: FairnessParam, cfg: &OuterConfig, solver: &SolverConfig) -> Result<SearchOutcome> {
    let grid = cfg.resolve(sc)?;
    let run = run_grid(sc, f, &grid, solver)?;
    let l = run.points[run.best_index];
    let result = to_result(sc, f, l, &run.best, run.iterations);
    Ok(SearchOutcome { grid_value: run.best.value, result, trace: run.trace, grid, unimodality: None })
}

/// Golden-section refinement of `J` on `bracket`, never returning a point
/// worse than `incumbent` (the grid answer at `incumbent_l`).
pub fn golden_refine(
    sc: &Scenario,
    f: FairnessParam,
    bracket: (f64, f64),
    tolerance: f64,
    incumbent_l: f64,
    incumbent: &InnerSolution,
    solver: &SolverConfig,
) -> Result<(f64, InnerSolution, usize)> {
    let (mut a, mut b) = bracket;
    if !(a.is_finite() && b.is_finite() && a <= incumbent_l && incumbent_l <= b && a >= 0.0) {
        return Ok((incumbent_l, incumbent.clone(), 0));
    }
    let eval = |l: f64| solve_inner(sc, f, l, solver);
    let mut best_l = incumbent_l;
    let mut best = incumbent.clone();
    let consider = |l: f64, sol: &InnerSolution, best_l: &mut f64, best: &mut InnerSolution| {
        if better(sol, best) {
            *best_l = l;
            *best = sol.clone();
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    consider(c, &fc, &mut best_l, &mut best);
    consider(d, &fd, &mut best_l, &mut best);
    let mut evaluations = 2;
    while (b - a) > tolerance && evaluations < 400 {
        if better(&fc, &fd) || rank(&fc) == rank(&fd) && fc.feasible {
            // maximum in [a, d]
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
            consider(c, &fc, &mut best_l, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
            consider(d, &fd, &mut best_l, &mut best);
        }
        evaluations += 1;
    }
    Ok((best_l, best, evaluations))
}

/// Whether the sequence rises (weakly) and then falls (weakly).
pub fn check_unimodality(values: &[f64]) -> UnimodalityReport {
    const TOL: f64 = 1e-9;
    let tol = |a: f64, b: f64| TOL * (1.0 + a.abs().max(b.abs()));
    let mut descending = false;
    let mut violations = Vec::new();
    for (i, w) in values.windows(2).enumerate() {
        let (u, v) = (w[0], w[1]);
        if v < u - tol(u, v) {
            descending = true;
        } else if v > u + tol(u, v) && descending {
            violations.push(i);
            descending = false;
        }
    }
    UnimodalityReport { unimodal: violations.is_empty(), violations }
}

/// Unimodality of the feasible, non-degenerate part of a grid trace.
pub fn check_trace_unimodality(trace: &[TracePoint]) -> UnimodalityReport {
    let idx: Vec<usize> = (0..trace.len()).filter(|&k| trace[k].feasible && !trace[k].degenerate).collect();
    let values: Vec<f64> = idx.iter().map(|&k| trace[k].value.to_f64()).collect();
    let mut report = check_unimodality(&values);
    report.violations = report.violations.iter().map(|&v| idx[v]).collect();
    report
}

/// Grid search, optional golden refinement and optional trace check.
pub fn solve(sc: &Scenario, f: FairnessParam, cfg: &OuterConfig, solver: &SolverConfig) -> Result<SearchOutcome> {
    let grid = cfg.resolve(sc)?;
    let run = run_grid(sc, f, &grid, solver)?;
    let grid_l = run.points[run.best_index];
    let mut l = grid_l;
    let mut sol = run.best.clone();
    let mut iterations = run.iterations;
    if cfg.refine {
        let lo = (grid_l - grid.delta_l).max(0.0);
        let hi = grid_l + grid.delta_l;
        let (rl, rsol, evals) = golden_refine(sc, f, (lo, hi), grid.refine_tolerance, grid_l, &run.best, solver)?;
        l = rl;
        sol = rsol;
        iterations += evals;
    }
    let unimodality = cfg.unimodality_check.then(|| check_trace_unimodality(&run.trace));
    Ok(SearchOutcome {
        result: to_result(sc, f, l, &sol, iterations),
        trace: run.trace,
        grid,
        grid_value: run.best.value,
        unimodality,
    })
}
