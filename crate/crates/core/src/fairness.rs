//! The α-fairness family and the price-of-fairness / price-of-efficiency
//! metrics.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::SurplusProfile;

/// Half-width of the window around 1 treated as the logarithmic case.
pub const LOG_WINDOW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FairnessParam {
    Alpha(f64),
    /// The `α = ∞` limit.
    MaxMin,
}

impl FairnessParam {
    pub const SOCIAL_WELFARE: FairnessParam = FairnessParam::Alpha(0.0);
    pub const PROPORTIONAL: FairnessParam = FairnessParam::Alpha(1.0);

    pub fn alpha(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Domain(format!("alpha must be finite and >= 0, got {value}")));
        }
        Ok(FairnessParam::Alpha(value))
    }

    pub fn is_social_welfare(&self) -> bool {
        matches!(self, FairnessParam::Alpha(a) if *a == 0.0)
    }

    pub fn is_log(&self) -> bool {
        matches!(self, FairnessParam::Alpha(a) if (a - 1.0).abs() <= LOG_WINDOW)
    }

    /// True when zero surplus drives the objective to −∞ (α ≥ 1 or max-min
    /// treated as its limit).
    pub fn requires_positive(&self) -> bool {
        match *self {
            FairnessParam::Alpha(a) => a >= 1.0 - LOG_WINDOW,
            FairnessParam::MaxMin => true,
        }
    }

    /// Objective contribution of one user for the smooth members.
    #[inline]
    pub(crate) fn term(&self, s: f64) -> f64 {
        match *self {
            FairnessParam::Alpha(0.0) => s,
            FairnessParam::Alpha(_) if self.is_log() => {
                if s > 0.0 {
                    s.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            FairnessParam::Alpha(a) => {
                if s > 0.0 {
                    s.powf(1.0 - a) / (1.0 - a)
                } else if a > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            FairnessParam::MaxMin => s,
        }
    }

    /// `d term / d s = s^{-α}`.
    #[inline]
    pub(crate) fn term_derivative(&self, s: f64) -> f64 {
        match *self {
            FairnessParam::Alpha(0.0) => 1.0,
            FairnessParam::Alpha(_) if self.is_log() => 1.0 / s,
            FairnessParam::Alpha(a) => s.powf(-a),
            FairnessParam::MaxMin => f64::NAN,
        }
    }

    /// `d² term / d s² = -α·s^{-α-1}`.
    #[inline]
    pub(crate) fn term_second_derivative(&self, s: f64) -> f64 {
        match *self {
            FairnessParam::Alpha(0.0) => 0.0,
            FairnessParam::Alpha(_) if self.is_log() => -1.0 / (s * s),
            FairnessParam::Alpha(a) => -a * s.powf(-a - 1.0),
            FairnessParam::MaxMin => f64::NAN,
        }
    }
}

impl fmt::Display for FairnessParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FairnessParam::Alpha(a) => write!(f, "{a}"),
            FairnessParam::MaxMin => f.write_str("inf"),
        }
    }
}

impl FromStr for FairnessParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("maxmin") {
            return Ok(FairnessParam::MaxMin);
        }
        let v: f64 = t.parse().map_err(|_| Error::Domain(format!("cannot parse alpha {t:?}")))?;
        FairnessParam::alpha(v)
    }
}

/// Parses a comma-separated list such as `0,0.5,1,2,inf`.
pub fn parse_alpha_list(s: &str) -> Result<Vec<FairnessParam>> {
    let list = s.split(',').map(str::parse).collect::<Result<Vec<FairnessParam>>>()?;
    if list.is_empty() {
        return Err(Error::Domain("empty alpha list".into()));
    }
    Ok(list)
}

impl Serialize for FairnessParam {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FairnessParam::Alpha(a) => ser.serialize_f64(*a),
            FairnessParam::MaxMin => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for FairnessParam {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(a) => FairnessParam::alpha(a).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A real number or −∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
}

impl ExtReal {
    pub fn from_f64(v: f64) -> Self {
        if v == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => ser.serialize_str("-inf"),
            ExtReal::Finite(v) => ser.serialize_f64(*v),
        }
    }
}

fn check_nonnegative(s: &SurplusProfile) -> Result<()> {
    if let Some((i, v)) = s.0.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("surplus s[{i}] = {v} is negative")));
    }
    Ok(())
}

/// α-fair objective of a nonnegative surplus profile.
pub fn phi(s: &SurplusProfile, f: FairnessParam) -> Result<ExtReal> {
    check_nonnegative(s)?;
    let v = match f {
        FairnessParam::MaxMin => s.min(),
        _ => s.0.iter().map(|&si| f.term(si)).sum(),
    };
    Ok(ExtReal::from_f64(v))
}

/// Gradient of [`phi`]: component `i` is `s_i^{-α}`.
pub fn phi_gradient(s: &SurplusProfile, f: FairnessParam) -> Result<Vec<f64>> {
    if f == FairnessParam::MaxMin {
        return Err(Error::Unsupported("max-min objective has no gradient".into()));
    }
    check_nonnegative(s)?;
    let positive_required = f.requires_positive();
    s.0.iter()
        .enumerate()
        .map(|(i, &si)| {
            if si == 0.0 && !f.is_social_welfare() {
                if positive_required {
                    return Err(Error::Domain(format!("zero surplus s[{i}] with alpha >= 1")));
                }
                return Ok(f64::INFINITY);
            }
            Ok(f.term_derivative(si))
        })
        .collect()
}

/// Relative loss of total surplus against the social-welfare optimum.
pub fn price_of_fairness(system_value: f64, fair_total: f64) -> Result<f64> {
    if !(system_value > 0.0) {
        return Err(Error::Domain(format!("system value must be > 0, got {system_value}")));
    }
    Ok((system_value - fair_total) / system_value)
}

/// Relative loss of the minimum surplus against the max-min optimum.
pub fn price_of_efficiency(maxmin_value: f64, min_surplus_at_alpha: f64) -> Result<f64> {
    if !(maxmin_value > 0.0) {
        return Err(Error::Domain(format!("max-min value must be > 0, got {maxmin_value}")));
    }
    Ok((maxmin_value - min_surplus_at_alpha) / maxmin_value)
}
