//! Users, procurement cost and surplus evaluation.
//!
//! Utilities use the half convention `U(x) = -(1/2)·q·x² + b·x`. Scenario
//! files may also give Theorem-style `-a·x² + b·x` coefficients
//! (`"convention": "plain"`), which are converted with `q = 2a` on load.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{ExtReal, FairnessParam};

/// Concave quadratic utility `U(x) = -(1/2)·q·x² + b·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    pub q: f64,
    pub b: f64,
}

impl QuadraticUtility {
    pub fn new(q: f64, b: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Domain(format!("curvature q must be finite and >= 0, got {q}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!("slope b must be finite and > 0, got {b}")));
        }
        Ok(Self { q, b })
    }

    /// Builds from the `-a·x² + b·x` form.
    pub fn from_plain(a: f64, b: f64) -> Result<Self> {
        Self::new(2.0 * a, b)
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("allocation must be >= 0, got {x}")));
        }
        Ok(self.value_unchecked(x))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        x * (self.b - 0.5 * self.q * x)
    }

    #[inline]
    pub fn marginal(&self, x: f64) -> f64 {
        self.b - self.q * x
    }

    /// Largest allocation with nonnegative surplus at price `p`.
    ///
    /// Zero when the user is priced out (`b <= p`), infinite for a linear
    /// utility that stays profitable.
    pub fn surplus_bound(&self, p: f64) -> f64 {
        let margin = self.b - p;
        if margin <= 0.0 {
            0.0
        } else if self.q == 0.0 {
            f64::INFINITY
        } else {
            2.0 * margin / self.q
        }
    }
}

pub fn utility_value(u: &QuadraticUtility, x: f64) -> Result<f64> {
    u.value(x)
}

pub fn marginal_utility(u: &QuadraticUtility, x: f64) -> f64 {
    u.marginal(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// `C(l) = (1/2)·c2·l² + c1·l`.
    #[default]
    Quadratic,
    /// Only the price law `p(l) = c2·l + c1` is known.
    AffinePrice,
}

/// Procurement cost with affine marginal price `p(l) = c2·l + c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub c2: f64,
    pub c1: f64,
}

impl CostModel {
    pub fn new(kind: CostKind, c2: f64, c1: f64) -> Result<Self> {
        if !(c2.is_finite() && c2 >= 0.0) {
            return Err(Error::Domain(format!("cost c2 must be finite and >= 0, got {c2}")));
        }
        if !(c1.is_finite() && c1 >= 0.0) {
            return Err(Error::Domain(format!("cost c1 must be finite and >= 0, got {c1}")));
        }
        Ok(Self { kind, c2, c1 })
    }

    pub fn quadratic(c2: f64, c1: f64) -> Result<Self> {
        Self::new(CostKind::Quadratic, c2, c1)
    }

    /// `p(l) = l`, the pricing used throughout the experiments.
    pub fn unit_linear() -> Self {
        Self { kind: CostKind::Quadratic, c2: 1.0, c1: 0.0 }
    }

    pub fn price(&self, l: f64) -> Result<f64> {
        if l < 0.0 || l.is_nan() {
            return Err(Error::Domain(format!("load must be >= 0, got {l}")));
        }
        Ok(self.price_unchecked(l))
    }

    #[inline]
    pub(crate) fn price_unchecked(&self, l: f64) -> f64 {
        self.c2 * l + self.c1
    }

    /// Procurement cost `C(l)`; the affine-price variant uses the same integral.
    pub fn cost(&self, l: f64) -> f64 {
        0.5 * self.c2 * l * l + self.c1 * l
    }
}

pub fn price(c: &CostModel, l: f64) -> Result<f64> {
    c.price(l)
}

pub fn total_payment(c: &CostModel, l: f64) -> Result<f64> {
    Ok(l * c.price(l)?)
}

/// Surplus `U(x) - p·x`.
pub fn surplus(u: &QuadraticUtility, x: f64, p: f64) -> Result<f64> {
    Ok(u.value(x)? - p * x)
}

#[inline]
pub(crate) fn surplus_unchecked(u: &QuadraticUtility, x: f64, p: f64) -> f64 {
    x * (u.b - p - 0.5 * u.q * x)
}

/// Per-user surplus vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SurplusProfile(pub Vec<f64>);

impl SurplusProfile {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl From<Vec<f64>> for SurplusProfile {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A user population with a cost model; the unit of solver input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    users: Vec<QuadraticUtility>,
    cost: CostModel,
    labels: Option<Vec<String>>,
}

impl Scenario {
    pub fn new(users: Vec<QuadraticUtility>, cost: CostModel) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Scenario("users: at least one user is required".into()));
        }
        Ok(Self { users, cost, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.users.len() {
            return Err(Error::DimensionMismatch { expected: self.users.len(), got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn users(&self) -> &[QuadraticUtility] {
        &self.users
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn price(&self, l: f64) -> Result<f64> {
        self.cost.price(l)
    }

    /// Per-user upper bounds making `s_i >= 0` equivalent to `0 <= x_i <= ub_i`.
    pub fn upper_bounds(&self, l: f64) -> Result<Vec<f64>> {
        let p = self.cost.price(l)?;
        Ok(self.users.iter().map(|u| u.surplus_bound(p)).collect())
    }

    pub fn surplus_profile(&self, x: &[f64], l: f64) -> Result<SurplusProfile> {
        if x.len() != self.users.len() {
            return Err(Error::DimensionMismatch { expected: self.users.len(), got: x.len() });
        }
        let p = self.cost.price(l)?;
        self.users.iter().zip(x).map(|(u, &xi)| surplus(u, xi, p)).collect::<Result<Vec<_>>>().map(SurplusProfile)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        file.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Half-convention JSON that replays this scenario exactly.
    pub fn to_json_string(&self) -> String {
        let file = ScenarioFile::from(self);
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

pub fn surplus_profile(sc: &Scenario, x: &[f64], l: f64) -> Result<SurplusProfile> {
    sc.surplus_profile(x, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Coefficients are given as `q` in `-(1/2)·q·x² + b·x`.
    #[default]
    Half,
    /// Coefficients are given as `a` in `-a·x² + b·x`.
    Plain,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserEntry {
    q: f64,
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostEntry {
    #[serde(default)]
    kind: CostKind,
    c2: f64,
    c1: f64,
}

/// On-disk scenario format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    users: Vec<UserEntry>,
    cost: CostEntry,
    #[serde(default)]
    convention: Convention,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        if self.users.is_empty() {
            return Err(Error::Scenario("users: at least one user is required".into()));
        }
        let mut users = Vec::with_capacity(self.users.len());
        let mut labels = Vec::with_capacity(self.users.len());
        let any_label = self.users.iter().any(|u| u.class.is_some());
        for (i, entry) in self.users.into_iter().enumerate() {
            if !(entry.q.is_finite() && entry.q >= 0.0) {
                return Err(Error::Scenario(format!("users[{i}].q must be finite and >= 0, got {}", entry.q)));
            }
            if !(entry.b.is_finite() && entry.b > 0.0) {
                return Err(Error::Scenario(format!("users[{i}].b must be finite and > 0, got {}", entry.b)));
            }
            let q = match self.convention {
                Convention::Half => entry.q,
                Convention::Plain => 2.0 * entry.q,
            };
            users.push(QuadraticUtility { q, b: entry.b });
            labels.push(entry.class.unwrap_or_default());
        }
        let c = self.cost;
        if !(c.c2.is_finite() && c.c2 >= 0.0) {
            return Err(Error::Scenario(format!("cost.c2 must be finite and >= 0, got {}", c.c2)));
        }
        if !(c.c1.is_finite() && c.c1 >= 0.0) {
            return Err(Error::Scenario(format!("cost.c1 must be finite and >= 0, got {}", c.c1)));
        }
        let sc = Scenario::new(users, CostModel { kind: c.kind, c2: c.c2, c1: c.c1 })?;
        if any_label {
            sc.with_labels(labels)
        } else {
            Ok(sc)
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        let users = sc
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| UserEntry { q: u.q, b: u.b, class: sc.labels.as_ref().map(|l| l[i].clone()) })
            .collect();
        ScenarioFile {
            users,
            cost: CostEntry { kind: sc.cost.kind, c2: sc.cost.c2, c1: sc.cost.c1 },
            convention: Convention::Half,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "grid+inner")]
    GridInner,
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "oracle")]
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::GridInner => "grid+inner",
            Method::Joint => "joint",
            Method::Oracle => "oracle",
        })
    }
}

/// Optimal `(x, l)` for one fairness parameter, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult {
    pub alpha: FairnessParam,
    pub x: Vec<f64>,
    pub l: f64,
    pub s: SurplusProfile,
    pub objective: ExtReal,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub method: Method,
    /// Some user is priced out and was left out of the objective.
    pub degenerate: bool,
}

impl AllocationResult {
    /// Checks the feasibility invariants at tolerance `tol`.
    pub fn check_feasible(&self, sc: &Scenario, tol: f64) -> Result<()> {
        let sum: f64 = self.x.iter().sum();
        if (sum - self.l).abs() > tol * (1.0 + self.l) {
            return Err(Error::Infeasible(format!("sum(x) = {sum} but l = {}", self.l)));
        }
        if let Some(i) = self.x.iter().position(|&v| v < -tol) {
            return Err(Error::Infeasible(format!("x[{i}] = {} < 0", self.x[i])));
        }
        if let Some(i) = self.s.0.iter().position(|&v| v < -tol) {
            return Err(Error::Infeasible(format!("s[{i}] = {} < 0", self.s.0[i])));
        }
        let p = sc.cost.price_unchecked(self.l.max(0.0));
        for (i, (u, (&xi, &si))) in sc.users.iter().zip(self.x.iter().zip(&self.s.0)).enumerate() {
            let fresh = surplus_unchecked(u, xi.max(0.0), p);
            if (fresh - si).abs() > tol * (1.0 + fresh.abs()) {
                return Err(Error::Infeasible(format!("s[{i}] = {si} but recomputed {fresh}")));
            }
        }
        Ok(())
    }
}
