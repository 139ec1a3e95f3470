//! Fixed-load allocation: maximize Φ(s(x, l)) over `Σx = l`, `0 ≤ x ≤ ub(l)`.
//!
//! For fixed `l` the price is fixed and the problem separates per user up to
//! the load constraint, so every smooth member of the family is solved by
//! equalizing the marginal objective `φ'(s_i)·(b_i − p − q_i·x_i)` to a common
//! multiplier found by bisection. For `α = 0` the per-user inverse is the
//! closed-form water level. Projected gradient ascent is kept as an
//! independent route. Max-min uses the epigraph form with bisection on the
//! surplus level.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{ExtReal, FairnessParam};
use crate::model::{surplus_unchecked, QuadraticUtility, Scenario};

const BISECTION_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    /// Marginal equalization by dual bisection.
    #[default]
    Kkt,
    /// Projected gradient ascent with backtracking.
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    pub feasibility_tolerance: f64,
    /// Smallest surplus kept during α ≥ 1 gradient iterations.
    pub interior_margin: f64,
    pub backtracking: f64,
    pub initial_step: f64,
    pub method: InnerMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            kkt_tolerance: 1e-8,
            feasibility_tolerance: 1e-8,
            interior_margin: 1e-10,
            backtracking: 0.5,
            initial_step: 1.0,
            method: InnerMethod::Kkt,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kkt_tolerance", self.kkt_tolerance),
            ("feasibility_tolerance", self.feasibility_tolerance),
            ("interior_margin", self.interior_margin),
            ("initial_step", self.initial_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "backtracking factor must lie in (0, 1), got {}",
                self.backtracking
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerSolution {
    pub x: Vec<f64>,
    /// `J(l)`; −∞ when infeasible.
    pub value: ExtReal,
    pub feasible: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// A user is priced out and left out of an α ≥ 1 objective.
    pub degenerate: bool,
}

impl InnerSolution {
    fn infeasible(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            value: ExtReal::NegInf,
            feasible: false,
            kkt_residual: f64::INFINITY,
            iterations: 0,
            degenerate: false,
        }
    }
}

/// Per-user bounds `ub_i` with `s_i ≥ 0 ⇔ 0 ≤ x_i ≤ ub_i` at load `l`.
pub fn feasible_box(sc: &Scenario, l: f64) -> Result<Vec<f64>> {
    sc.upper_bounds(l)
}

/// Euclidean projection of `v` onto `{x : Σx = l, 0 ≤ x ≤ ub}`.
pub fn project_box_simplex(v: &[f64], l: f64, ub: &[f64]) -> Result<Vec<f64>> {
    if v.len() != ub.len() {
        return Err(Error::DimensionMismatch { expected: ub.len(), got: v.len() });
    }
    if l < 0.0 || l.is_nan() {
        return Err(Error::Domain(format!("load must be >= 0, got {l}")));
    }
    let capacity: f64 = ub.iter().sum();
    if capacity < l {
        return Err(Error::EmptySet { capacity, load: l });
    }
    let tol = 1e-12 * (1.0 + l);
    let inside = v.iter().zip(ub).all(|(&vi, &ui)| (0.0..=ui).contains(&vi));
    if inside && (v.iter().sum::<f64>() - l).abs() <= tol {
        return Ok(v.to_vec());
    }
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(ub).map(|(&vi, &ui)| (vi - nu).clamp(0.0, ui)).collect() };
    // Σx(ν) is nonincreasing; ν = max v empties every coordinate and
    // ν = min(v − min(ub, l)) − l fills them.
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hi = vmax;
    let mut lo = v.iter().zip(ub).map(|(&vi, &ui)| vi - ui.min(l)).fold(f64::INFINITY, f64::min) - l;
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        let sum: f64 = at(mid).iter().sum();
        if sum == l {
            return Ok(at(mid));
        }
        if sum > l {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    Ok(blend_to_sum(at(hi), at(lo), l))
}

/// Convex combination of `under` (sum ≤ l) and `over` (sum ≥ l) hitting `l`.
fn blend_to_sum(under: Vec<f64>, over: Vec<f64>, l: f64) -> Vec<f64> {
    let su: f64 = under.iter().sum();
    let so: f64 = over.iter().sum();
    if so - su <= 0.0 {
        return under;
    }
    let theta = ((l - su) / (so - su)).clamp(0.0, 1.0);
    under.iter().zip(&over).map(|(&a, &b)| a + theta * (b - a)).collect()
}

/// Marginal objective of one user, `φ'(s)·s'(x)`, at fixed price.
#[derive(Clone, Copy)]
struct Marginal {
    u: QuadraticUtility,
    price: f64,
    f: FairnessParam,
}

impl Marginal {
    #[inline]
    fn slope(&self, x: f64) -> f64 {
        self.u.b - self.price - self.u.q * x
    }

    #[inline]
    fn value(&self, x: f64) -> f64 {
        let d = self.slope(x);
        if self.f.is_social_welfare() {
            return d;
        }
        let s = surplus_unchecked(&self.u, x, self.price);
        if s <= 0.0 {
            return if d >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        self.f.term_derivative(s) * d
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        let d = self.slope(x);
        if self.f.is_social_welfare() {
            return -self.u.q;
        }
        let s = surplus_unchecked(&self.u, x, self.price);
        self.f.term_second_derivative(s) * d * d - self.u.q * self.f.term_derivative(s)
    }

    /// Solves `value(x) = nu` on `[0, cap]`, saturating at the ends.
    fn inverse(&self, nu: f64, cap: f64) -> f64 {
        if cap <= 0.0 {
            return 0.0;
        }
        if self.f.is_social_welfare() {
            if self.u.q > 0.0 {
                return ((self.u.b - self.price - nu) / self.u.q).clamp(0.0, cap);
            }
            return if self.u.b - self.price > nu { cap } else { 0.0 };
        }
        if self.value(cap) >= nu {
            return cap;
        }
        if self.value(0.0) <= nu {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, cap);
        let mut x = 0.5 * cap;
        for _ in 0..BISECTION_CAP {
            let g = self.value(x) - nu;
            if g == 0.0 {
                return x;
            }
            if g > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi.max(1e-300) {
                break;
            }
            let dg = self.derivative(x);
            let newton = x - g / dg;
            x = if dg < 0.0 && newton > lo && newton < hi && (newton - x).abs() < 0.5 * (hi - lo) {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }
}

struct Prepared {
    price: f64,
    ub: Vec<f64>,
    active: Vec<usize>,
    degenerate: bool,
}

fn prepare(sc: &Scenario, f: FairnessParam, l: f64) -> Result<Prepared> {
    let price = sc.price(l)?;
    let ub = feasible_box(sc, l)?;
    let active: Vec<usize> = (0..ub.len()).filter(|&i| ub[i] > 0.0).collect();
    let degenerate = f.requires_positive() && active.len() < ub.len();
    Ok(Prepared { price, ub, active, degenerate })
}

/// Φ over the users that count: priced-out users are dropped when α ≥ 1.
fn objective(f: FairnessParam, s: &[f64], active: &[usize], drop_inactive: bool) -> ExtReal {
    let members: Box<dyn Iterator<Item = f64>> =
        if drop_inactive { Box::new(active.iter().map(|&i| s[i])) } else { Box::new(s.iter().copied()) };
    let v = match f {
        FairnessParam::MaxMin => members.fold(f64::INFINITY, f64::min),
        _ => members.map(|si| f.term(si.max(0.0))).sum(),
    };
    if v == f64::INFINITY {
        // every user priced out
        return ExtReal::NegInf;
    }
    ExtReal::from_f64(v)
}

/// Maximizes Φ(s(x, l)) over allocations with total `l`.
pub fn solve_inner(sc: &Scenario, f: FairnessParam, l: f64, cfg: &SolverConfig) -> Result<InnerSolution> {
    cfg.validate()?;
    if l < 0.0 || !l.is_finite() {
        return Err(Error::Domain(format!("load must be finite and >= 0, got {l}")));
    }
    let n = sc.n_users();
    let prep = prepare(sc, f, l)?;
    let cap: Vec<f64> = prep.ub.iter().map(|&u| u.min(l)).collect();
    let capacity: f64 = cap.iter().sum();
    let slack = cfg.feasibility_tolerance * (1.0 + l);
    if capacity + slack < l {
        return Ok(InnerSolution::infeasible(n));
    }
    let smooth_positive = f.requires_positive() && f != FairnessParam::MaxMin;
    let active_room: f64 = prep.active.iter().map(|&i| prep.ub[i]).sum();
    if smooth_positive && (prep.active.is_empty() || l <= 0.0 || active_room <= l) {
        // no strictly interior point
        return Ok(InnerSolution::infeasible(n));
    }
    let l_eff = l.min(capacity);

    let (x, kkt_residual, iterations) = match f {
        FairnessParam::MaxMin => solve_maxmin(sc, &prep, &cap, l_eff),
        _ => match cfg.method {
            InnerMethod::Kkt => solve_equalized(sc, f, &prep, &cap, l_eff),
            InnerMethod::ProjectedGradient => {
                let (x, res, it, _) = projected_gradient(sc, f, &prep, &cap, l_eff, cfg, false);
                (x, res, it)
            }
        },
    };
    Ok(finish(sc, f, &prep, x, kkt_residual, iterations))
}

fn finish(
    sc: &Scenario,
    f: FairnessParam,
    prep: &Prepared,
    x: Vec<f64>,
    kkt_residual: f64,
    iterations: usize,
) -> InnerSolution {
    let s: Vec<f64> = sc.users().iter().zip(&x).map(|(u, &xi)| surplus_unchecked(u, xi, prep.price)).collect();
    let value = objective(f, &s, &prep.active, f.requires_positive());
    InnerSolution { x, value, feasible: true, kkt_residual, iterations, degenerate: prep.degenerate }
}

/// Dual bisection on the common marginal `ν` with per-user inversion.
fn solve_equalized(sc: &Scenario, f: FairnessParam, prep: &Prepared, cap: &[f64], l: f64) -> (Vec<f64>, f64, usize) {
    let n = sc.n_users();
    let capacity: f64 = cap.iter().sum();
    if prep.active.is_empty() || l <= 0.0 {
        return (vec![0.0; n], 0.0, 0);
    }
    if l >= capacity {
        return (cap.to_vec(), 0.0, 0);
    }
    let marginals: Vec<Marginal> = sc.users().iter().map(|&u| Marginal { u, price: prep.price, f }).collect();
    let at = |nu: f64| -> Vec<f64> {
        (0..n).map(|i| if cap[i] > 0.0 { marginals[i].inverse(nu, cap[i]) } else { 0.0 }).collect()
    };

    // Any point with Σx = l brackets ν: above max_i g_i(x̂_i) every user takes
    // less than x̂_i, below min_i g_i(x̂_i) every user takes more.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &prep.active {
        let xi = l * cap[i] / capacity;
        let g = marginals[i].value(xi);
        lo = lo.min(g);
        hi = hi.max(g);
    }
    let mut iterations = 0;
    while iterations < BISECTION_CAP && hi - lo > 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sum: f64 = at(mid).iter().sum();
        if sum > l {
            lo = mid;
        } else if sum < l {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
        }
    }
    let x = blend_to_sum(at(hi), at(lo), l);
    let residual = kkt_residual(&marginals, &x, cap);
    (x, residual, iterations)
}

/// Relative spread of the marginals over interior users plus sign
/// violations at the bounds, normalized by `1 + |ν|`.
fn kkt_residual(marginals: &[Marginal], x: &[f64], cap: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, m) in marginals.iter().enumerate() {
        if x[i] > 0.0 && x[i] < cap[i] {
            let g = m.value(x[i]);
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    if lo > hi {
        return 0.0;
    }
    let nu = 0.5 * (lo + hi);
    let mut res = 0.5 * (hi - lo);
    for (i, m) in marginals.iter().enumerate() {
        if cap[i] <= 0.0 {
            continue;
        }
        if x[i] <= 0.0 {
            res = res.max(m.value(0.0) - nu);
        } else if x[i] >= cap[i] {
            res = res.max(nu - m.value(cap[i]));
        }
    }
    res / (1.0 + nu.abs())
}

/// Marginal-equalization certificate for an arbitrary allocation.
pub fn kkt_certificate(sc: &Scenario, f: FairnessParam, l: f64, x: &[f64]) -> Result<f64> {
    if f == FairnessParam::MaxMin {
        return Err(Error::Unsupported("max-min has no marginal certificate".into()));
    }
    let prep = prepare(sc, f, l)?;
    let cap: Vec<f64> = prep.ub.iter().map(|&u| u.min(l)).collect();
    let marginals: Vec<Marginal> = sc.users().iter().map(|&u| Marginal { u, price: prep.price, f }).collect();
    Ok(kkt_residual(&marginals, x, &cap))
}

/// Epigraph form: largest `t` with `s_i(x_i) ≥ t` for all active users.
fn solve_maxmin(sc: &Scenario, prep: &Prepared, cap: &[f64], l: f64) -> (Vec<f64>, f64, usize) {
    let n = sc.n_users();
    if prep.active.is_empty() {
        return (vec![0.0; n], 0.0, 0);
    }
    let users = sc.users();
    // Interval of x_i with s_i(x_i) ≥ t, or None when t exceeds the peak.
    let interval = |i: usize, t: f64| -> Option<(f64, f64)> {
        let u = users[i];
        let d = u.b - prep.price;
        if u.q == 0.0 {
            let lo = t / d;
            return (lo <= cap[i]).then_some((lo, cap[i]));
        }
        let disc = d * d - 2.0 * u.q * t;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let lo = 2.0 * t / (d + root);
        let hi = ((d + root) / u.q).min(cap[i]);
        (lo <= hi).then_some((lo, hi))
    };
    let bounds = |t: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        let mut los = vec![0.0; n];
        let mut his = vec![0.0; n];
        for &i in &prep.active {
            let (a, b) = interval(i, t)?;
            los[i] = a;
            his[i] = b;
        }
        let (sl, sh): (f64, f64) = (los.iter().sum(), his.iter().sum());
        (sl <= l && l <= sh).then_some((los, his))
    };

    let mut t_hi = prep
        .active
        .iter()
        .map(|&i| {
            let u = users[i];
            let d = u.b - prep.price;
            if u.q > 0.0 {
                d * d / (2.0 * u.q)
            } else {
                d * l
            }
        })
        .fold(f64::INFINITY, f64::min);
    let mut t_lo = 0.0;
    let mut best = match bounds(0.0) {
        Some(b) => b,
        None => {
            let x = project_box_simplex(&vec![0.0; n], l, cap).unwrap_or_else(|_| cap.to_vec());
            return (x, f64::INFINITY, 0);
        }
    };
    let mut iterations = 0;
    if let Some(b) = bounds(t_hi) {
        best = b;
        t_lo = t_hi;
    }
    while iterations < BISECTION_CAP && t_hi - t_lo > 4.0 * f64::EPSILON * t_hi {
        iterations += 1;
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        match bounds(mid) {
            Some(b) => {
                t_lo = mid;
                best = b;
            }
            None => t_hi = mid,
        }
    }
    let (los, his) = best;
    let x = blend_to_sum(los, his, l);
    (x, (t_hi - t_lo) / (1.0 + t_hi), iterations)
}

/// Projected gradient ascent with the sufficient-ascent backtracking test
/// `Φ(y) ≥ Φ(x) + ∇Φ·(y − x) − ‖y − x‖²/(2t)`; returns the accepted
/// objective values when `record` is set.
fn projected_gradient(
    sc: &Scenario,
    f: FairnessParam,
    prep: &Prepared,
    cap: &[f64],
    l: f64,
    cfg: &SolverConfig,
    record: bool,
) -> (Vec<f64>, f64, usize, Vec<f64>) {
    let n = sc.n_users();
    let capacity: f64 = cap.iter().sum();
    if prep.active.is_empty() || l <= 0.0 || l >= capacity {
        let x = if l >= capacity { cap.to_vec() } else { vec![0.0; n] };
        return (x, 0.0, 0, Vec::new());
    }
    let marginals: Vec<Marginal> = sc.users().iter().map(|&u| Marginal { u, price: prep.price, f }).collect();
    let margin = if f.requires_positive() { cfg.interior_margin } else { f64::NEG_INFINITY };
    let eval = |x: &[f64]| -> Option<f64> {
        let mut total = 0.0;
        for &i in &prep.active {
            let s = surplus_unchecked(&marginals[i].u, x[i], prep.price);
            if s < margin {
                return None;
            }
            total += f.term(s.max(0.0));
        }
        Some(total)
    };
    // proportional start is strictly inside every active box
    let mut x: Vec<f64> = cap.iter().map(|&c| l * c / capacity).collect();
    let mut value = match eval(&x) {
        Some(v) => v,
        None => return (x, f64::INFINITY, 0, Vec::new()),
    };
    let mut trace = Vec::new();
    if record {
        trace.push(value);
    }
    let mut step = cfg.initial_step;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad: Vec<f64> = (0..n).map(|i| if cap[i] > 0.0 { marginals[i].value(x[i]) } else { 0.0 }).collect();
        let gscale = 1.0 + grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + step * gi).collect();
            let y = match project_box_simplex(&trial, l, cap) {
                Ok(y) => y,
                Err(_) => break,
            };
            if let Some(fy) = eval(&y) {
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let d = y[i] - x[i];
                    lin += grad[i] * d;
                    sq += d * d;
                }
                if fy >= value + lin - sq / (2.0 * step) && fy >= value {
                    accepted = Some((y, fy, sq.sqrt()));
                    break;
                }
            }
            step *= cfg.backtracking;
        }
        let Some((y, fy, moved)) = accepted else {
            break;
        };
        // gradient-mapping norm, relative to the gradient scale
        residual = moved / step / gscale;
        x = y;
        value = fy;
        if record {
            trace.push(value);
        }
        if residual <= cfg.kkt_tolerance {
            break;
        }
        step /= cfg.backtracking;
    }
    (x, residual, iterations, trace)
}

/// Projected-gradient solve that also returns Φ after every accepted step.
pub fn projected_gradient_trace(
    sc: &Scenario,
    f: FairnessParam,
    l: f64,
    cfg: &SolverConfig,
) -> Result<(InnerSolution, Vec<f64>)> {
    cfg.validate()?;
    if f == FairnessParam::MaxMin {
        return Err(Error::Unsupported("projected gradient needs a smooth objective".into()));
    }
    let prep = prepare(sc, f, l)?;
    let cap: Vec<f64> = prep.ub.iter().map(|&u| u.min(l)).collect();
    let capacity: f64 = cap.iter().sum();
    let active_room: f64 = prep.active.iter().map(|&i| prep.ub[i]).sum();
    if capacity < l || (f.requires_positive() && (l <= 0.0 || active_room <= l)) {
        return Ok((InnerSolution::infeasible(sc.n_users()), Vec::new()));
    }
    let (x, res, it, trace) = projected_gradient(sc, f, &prep, &cap, l, cfg, true);
    Ok((finish(sc, f, &prep, x, res, it), trace))
}
