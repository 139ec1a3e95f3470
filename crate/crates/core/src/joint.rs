//! Direct solve over `(x, l)` for quadratic utilities with affine price.
//!
//! With `l = Σx` substituted, the social-welfare objective
//! `Σ x_i(b_i − q_i x_i/2) − l·p(l)` and the proportional objective
//! `Σ log x_i + log(b_i − q_i x_i/2 − p(l))` are concave in `x`, so plain
//! projected gradient ascent on `x ≥ 0` reaches the optimum. Max-min is
//! solved in epigraph form: for a surplus level `T` the set of allocations
//! with every `s_i ≥ T` is convex, and its projection onto `l` is an
//! interval found by minimizing a convex function of `l`.

use crate::error::{Error, Result};
use crate::fairness::{ExtReal, FairnessParam};
use crate::inner::SolverConfig;
use crate::model::{surplus_unchecked, AllocationResult, CostModel, Method, QuadraticUtility, Scenario};
use crate::outer::default_l_max;

const ARMIJO: f64 = 1e-4;

/// Solves the joint problem for `α ∈ {0, 1}` or max-min.
pub fn solve_joint_quadratic(sc: &Scenario, f: FairnessParam, solver: &SolverConfig) -> Result<AllocationResult> {
    solver.validate()?;
    let (x, kkt, iterations) = match f {
        FairnessParam::MaxMin => joint_maxmin(sc)?,
        _ if f.is_social_welfare() => joint_welfare(sc, solver),
        _ if f.is_log() => joint_proportional(sc, solver)?,
        _ => return Err(Error::Unsupported(format!("joint solve covers alpha in {{0, 1, inf}}, got {f}"))),
    };
    let l: f64 = x.iter().sum();
    let s = sc.surplus_profile(&x, l)?;
    let objective = match f {
        FairnessParam::MaxMin => ExtReal::Finite(s.min()),
        _ => ExtReal::from_f64(s.0.iter().map(|&v| f.term(v.max(0.0))).sum()),
    };
    Ok(AllocationResult {
        alpha: f,
        x,
        l,
        s,
        objective,
        kkt_residual: kkt,
        iterations,
        method: Method::Joint,
        degenerate: false,
    })
}

fn surpluses(users: &[QuadraticUtility], cost: &CostModel, x: &[f64]) -> (f64, Vec<f64>) {
    let l: f64 = x.iter().sum();
    let p = cost.c2 * l + cost.c1;
    (l, users.iter().zip(x).map(|(u, &xi)| surplus_unchecked(u, xi, p)).collect())
}

fn joint_welfare(sc: &Scenario, solver: &SolverConfig) -> (Vec<f64>, f64, usize) {
    let users = sc.users();
    let cost = *sc.cost();
    // Σ x_i(b_i − q_i x_i/2) − l·p(l); optimum satisfies s ≥ 0 on its own,
    // the line search keeps iterates there as well
    let value = |x: &[f64]| -> Option<f64> {
        let (l, s) = surpluses(users, &cost, x);
        if s.iter().any(|&v| v < 0.0) {
            return None;
        }
        let gross: f64 = users.iter().zip(x).map(|(u, &xi)| xi * (u.b - 0.5 * u.q * xi)).sum();
        Some(gross - l * (cost.c2 * l + cost.c1))
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let l: f64 = x.iter().sum();
        let marginal_cost = 2.0 * cost.c2 * l + cost.c1;
        users.iter().zip(x).map(|(u, &xi)| u.b - u.q * xi - marginal_cost).collect()
    };
    let x0 = vec![0.0; users.len()];
    ascend(value, gradient, x0, solver)
}

fn joint_proportional(sc: &Scenario, solver: &SolverConfig) -> Result<(Vec<f64>, f64, usize)> {
    let users = sc.users();
    let cost = *sc.cost();
    if let Some(i) = users.iter().position(|u| u.b <= cost.c1) {
        return Err(Error::Infeasible(format!("user {i} cannot reach positive surplus at any load")));
    }
    let n = users.len() as f64;
    // equal start with every slack b_i − q_i τ/2 − p(nτ) at half its l = 0 value
    let tau = users.iter().map(|u| 0.5 * (u.b - cost.c1) / (0.5 * u.q + cost.c2 * n)).fold(f64::INFINITY, f64::min);
    let x0 = vec![tau; users.len()];
    let value = |x: &[f64]| -> Option<f64> {
        let l: f64 = x.iter().sum();
        let p = cost.c2 * l + cost.c1;
        let mut total = 0.0;
        for (u, &xi) in users.iter().zip(x) {
            let slack = u.b - 0.5 * u.q * xi - p;
            if xi <= 0.0 || slack <= 0.0 {
                return None;
            }
            total += xi.ln() + slack.ln();
        }
        Some(total)
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let l: f64 = x.iter().sum();
        let p = cost.c2 * l + cost.c1;
        let slack: Vec<f64> = users.iter().zip(x).map(|(u, &xi)| u.b - 0.5 * u.q * xi - p).collect();
        let shared: f64 = cost.c2 * slack.iter().map(|r| 1.0 / r).sum::<f64>();
        users.iter().zip(x).zip(&slack).map(|((u, &xi), &r)| 1.0 / xi - 0.5 * u.q / r - shared).collect()
    };
    Ok(ascend(value, gradient, x0, solver))
}

/// Monotone projected gradient ascent on `x ≥ 0` with Barzilai–Borwein
/// trial steps and Armijo backtracking.
fn ascend(
    value: impl Fn(&[f64]) -> Option<f64>,
    gradient: impl Fn(&[f64]) -> Vec<f64>,
    mut x: Vec<f64>,
    solver: &SolverConfig,
) -> (Vec<f64>, f64, usize) {
    let max_iterations = solver.max_iterations.saturating_mul(20);
    let mut fx = value(&x).expect("start point inside the domain");
    let mut g = gradient(&x);
    let mut step = solver.initial_step;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let gscale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // projected-gradient stationarity at unit step
        residual = x.iter().zip(&g).map(|(&xi, &gi)| ((xi + gi).max(0.0) - xi).abs()).fold(0.0, f64::max) / gscale;
        if residual <= solver.kkt_tolerance {
            break;
        }
        let mut accepted = None;
        for _ in 0..80 {
            let y: Vec<f64> = x.iter().zip(&g).map(|(&xi, &gi)| (xi + step * gi).max(0.0)).collect();
            if let Some(fy) = value(&y) {
                let gain: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
                if fy >= fx + ARMIJO * gain {
                    accepted = Some((y, fy));
                    break;
                }
            }
            step *= solver.backtracking;
        }
        let Some((y, fy)) = accepted else { break };
        let gy = gradient(&y);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..x.len() {
            let s = y[i] - x[i];
            ss += s * s;
            sy += s * (gy[i] - g[i]);
        }
        step = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { (step * 2.0).min(1e12) };
        x = y;
        fx = fy;
        g = gy;
        if ss == 0.0 {
            break;
        }
    }
    (x, residual, iterations)
}

/// Bisection on the common surplus level `T`.
fn joint_maxmin(sc: &Scenario) -> Result<(Vec<f64>, f64, usize)> {
    let users = sc.users();
    let cost = *sc.cost();
    if let Some(i) = users.iter().position(|u| u.b <= cost.c1) {
        return Err(Error::Infeasible(format!("user {i} cannot reach positive surplus at any load")));
    }
    let l_cap = default_l_max(sc)?;
    let n = users.len();

    // Per-user [lo, hi] of x with s ≥ T at load l, or None above the peak.
    let interval = |u: &QuadraticUtility, t: f64, l: f64| -> Option<(f64, f64)> {
        let d = u.b - cost.c2 * l - cost.c1;
        if d <= 0.0 {
            return None;
        }
        if u.q == 0.0 {
            return Some((t / d, f64::INFINITY));
        }
        let disc = d * d - 2.0 * u.q * t;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        Some((2.0 * t / (d + root), (d + root) / u.q))
    };
    // Largest load at which every user can still reach T.
    let load_limit = |t: f64| -> f64 {
        let mut lim = l_cap;
        for u in users {
            let need = (2.0 * u.q * t).sqrt();
            let room = u.b - cost.c1 - need;
            if cost.c2 > 0.0 {
                lim = lim.min(room / cost.c2);
            } else if room < 0.0 {
                return -1.0;
            }
        }
        lim
    };
    // max(Σlo − l, l − Σhi) is convex in l; ≤ 0 exactly where T is reachable.
    let gap = |t: f64, l: f64| -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for u in users {
            let (a, b) = interval(u, t, l)?;
            lo.push(a);
            hi.push(b.min(l.max(a)));
        }
        let sl: f64 = lo.iter().sum();
        let sh: f64 = hi.iter().sum();
        Some(((sl - l).max(l - sh), lo, hi))
    };
    let reachable = |t: f64| -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let lim = load_limit(t);
        if lim < 0.0 {
            return None;
        }
        let eval = |l: f64| gap(t, l).map(|g| g.0).unwrap_or(f64::INFINITY);
        let (mut a, mut b) = (0.0, lim);
        let phi = 0.618_033_988_749_894_8;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (eval(c), eval(d));
        let mut best = if fc <= fd { c } else { d };
        for _ in 0..200 {
            if b - a <= 1e-14 * (1.0 + lim) {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(d);
            }
            best = if fc <= fd { c } else { d };
        }
        let mut candidates = [best, 0.0, lim];
        candidates.sort_by(|p, q| eval(*p).total_cmp(&eval(*q)));
        let l = candidates[0];
        let (g, lo, hi) = gap(t, l)?;
        (g <= 0.0).then_some((l, lo, hi))
    };

    let mut t_hi = users
        .iter()
        .map(|u| {
            let d = u.b - cost.c1;
            if u.q > 0.0 {
                d * d / (2.0 * u.q)
            } else {
                d * l_cap
            }
        })
        .fold(f64::INFINITY, f64::min);
    let mut t_lo = 0.0;
    let mut best = None;
    let mut iterations = 0;
    while iterations < 200 && t_hi - t_lo > 4.0 * f64::EPSILON * t_hi {
        iterations += 1;
        let mid = 0.5 * (t_lo + t_hi);
        match reachable(mid) {
            Some(found) => {
                t_lo = mid;
                best = Some(found);
            }
            None => t_hi = mid,
        }
    }
    let (l, lo, hi) = best.ok_or_else(|| Error::Infeasible("no load gives every user positive surplus".into()))?;
    let sl: f64 = lo.iter().sum();
    let sh: f64 = hi.iter().sum();
    let theta = if sh > sl { ((l - sl) / (sh - sl)).clamp(0.0, 1.0) } else { 0.0 };
    let x = lo.iter().zip(&hi).map(|(&a, &b)| a + theta * (b - a)).collect();
    Ok((x, (t_hi - t_lo) / (1.0 + t_hi), iterations))
}
