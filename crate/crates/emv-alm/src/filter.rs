//! Hidden-regime estimation and the moment sets that feed every policy formula.
//!
//! The filter `p̂_t = P(ε_t = 1 | F_t^{x,l})` follows an affine recursion that
//! does not depend on observed returns, so its whole path is a function of
//! `(p̂_0, P, t)`. The learning-free alternative is `p̃_t = E[ε_t] ∈ [1, 2]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Row-stochastic 2×2 transition matrix, `m[i][j] = P(ε_{t+1} = j+1 | ε_t = i+1)`.
pub type Matrix2 = [[f64; 2]; 2];

/// One step of the filter: `P21 + p̂ (P11 − P21)`.
pub fn update_filter(p_hat: f64, p: &Matrix2) -> f64 {
    p[1][0] + p_hat * (p[0][0] - p[1][0])
}

/// `p̂_1, …, p̂_T` by iterating [`update_filter`] from `p0`.
pub fn filter_path(p0: f64, p: &Matrix2, horizon: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    let mut cur = p0;
    for _ in 0..horizon {
        cur = update_filter(cur, p);
        out.push(cur);
    }
    out
}

/// Closed form of `p̂_{t+1}`: `P21 Σ_{k=0}^{t} r^k + p̂_0 r^{t+1}` with `r = P11 − P21`.
pub fn filter_closed_form(p0: f64, p: &Matrix2, t: usize) -> f64 {
    let r = p[0][0] - p[1][0];
    let n = (t + 1) as i32;
    let rn = r.powi(n);
    let geometric = if (1.0 - r).abs() < 1e-300 {
        n as f64
    } else {
        (1.0 - rn) / (1.0 - r)
    };
    p[1][0] * geometric + p0 * rn
}

/// Fixed point `P21 / (1 − P11 + P21)` of the filter recursion.
pub fn stationary_probability(p: &Matrix2) -> f64 {
    p[1][0] / (1.0 - p[0][0] + p[1][0])
}

pub fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `P^t` by repeated squaring.
pub fn mat_pow(p: &Matrix2, mut t: u64) -> Matrix2 {
    let mut result = [[1.0, 0.0], [0.0, 1.0]];
    let mut base = *p;
    while t > 0 {
        if t & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        base = mat_mul(&base, &base);
        t >>= 1;
    }
    result
}

/// `p̃_t = E[ε_t] = (P^t_11 + 2P^t_12) p̂_0 + (P^t_21 + 2P^t_22)(1 − p̂_0)`.
pub fn expected_regime_signal(p0: f64, p: &Matrix2, t: u64) -> f64 {
    let pt = mat_pow(p, t);
    (pt[0][0] + 2.0 * pt[0][1]) * p0 + (pt[1][0] + 2.0 * pt[1][1]) * (1.0 - p0)
}

/// `P(ε_t = 1) = P^t_11 p̂_0 + P^t_21 (1 − p̂_0)`.
pub fn unconditional_probability(p0: f64, p: &Matrix2, t: u64) -> f64 {
    let pt = mat_pow(p, t);
    pt[0][0] * p0 + pt[1][0] * (1.0 - p0)
}

/// Filter state with the `[1e-12, 1 − 1e-12]` clamp applied for logging only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub t: usize,
    pub p_hat: f64,
}

impl FilterState {
    pub fn logged(&self) -> f64 {
        self.p_hat.clamp(1e-12, 1.0 - 1e-12)
    }
}

/// Precomputed signal paths over `t = 0..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalPaths {
    pub p_hat: Vec<f64>,
    pub p_tilde: Vec<f64>,
    pub p_uncond: Vec<f64>,
}

impl SignalPaths {
    pub fn new(p0: f64, p: &Matrix2, horizon: usize) -> Self {
        let mut p_hat = Vec::with_capacity(horizon + 1);
        p_hat.push(p0);
        p_hat.extend(filter_path(p0, p, horizon));
        let p_tilde = (0..=horizon as u64)
            .map(|t| expected_regime_signal(p0, p, t))
            .collect();
        let p_uncond = (0..=horizon as u64)
            .map(|t| unconditional_probability(p0, p, t))
            .collect();
        SignalPaths { p_hat, p_tilde, p_uncond }
    }
}

/// First and second moments of `e⁰`, the excess `e¹ − e⁰`, and `q` over one period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
}

/// A variance that came out negative, e.g. from mixture weights outside `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentViolation {
    pub pair: String,
    pub variance: f64,
}

impl MomentSet {
    /// Moments from independent `e⁰ ~ (m0, v0)`, `e¹ ~ (m1, v1)`, `q ~ (m2, v2)`.
    pub fn from_mean_var(m0: f64, v0: f64, m1: f64, v1: f64, m2: f64, v2: f64) -> Self {
        Self::from_raw(m0, v0 + m0 * m0, m1, v1 + m1 * m1, m2, v2 + m2 * m2)
    }

    /// Moments from raw `E[e⁰], E[(e⁰)²], E[e¹], E[(e¹)²], E[q], E[q²]`, treating
    /// `e⁰` and `e¹` as independent.
    pub fn from_raw(e0: f64, e0_sq: f64, e1: f64, e1_sq: f64, q: f64, q_sq: f64) -> Self {
        MomentSet {
            a0: e0,
            b0: e0_sq,
            a1: e1 - e0,
            b1: e1_sq - 2.0 * e1 * e0 + e0_sq,
            a2: q,
            b2: q_sq,
        }
    }

    /// `E[e¹]`.
    pub fn e1_mean(&self) -> f64 {
        self.a1 + self.a0
    }

    /// `E[(e¹)²]`, inverting `B1 = E[(e¹)²] − 2 A0 E[e¹] + B0`.
    pub fn e1_second(&self) -> f64 {
        self.b1 + 2.0 * self.a0 * self.e1_mean() - self.b0
    }

    /// `E[e⁰ (e¹ − e⁰)] = A0 A1 − (B0 − A0²)`.
    pub fn cross(&self) -> f64 {
        self.a0 * self.a1 - (self.b0 - self.a0 * self.a0)
    }

    pub fn violations(&self) -> Vec<MomentViolation> {
        let mut out = Vec::new();
        for (name, a, b) in [
            ("e0", self.a0, self.b0),
            ("excess", self.a1, self.b1),
            ("q", self.a2, self.b2),
        ] {
            let var = b - a * a;
            if var < 0.0 {
                out.push(MomentViolation { pair: name.to_string(), variance: var });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.a0, self.b0, self.a1, self.b1, self.a2, self.b2];
        if fields.iter().any(|v| !v.is_finite()) {
            return invalid(format!("non-finite moment in {self:?}"));
        }
        if self.b1 <= 0.0 {
            return invalid(format!("B1 = {} must be positive", self.b1));
        }
        if let Some(v) = self.violations().first() {
            return invalid(format!("negative variance {} for {}", v.variance, v.pair));
        }
        Ok(())
    }
}

/// Moments under the signal-weighted mixture: raw moments are mixed with
/// weights `(signal, 1 − signal)` and `B̂1 = Ê[(e¹)²] − 2 ê¹ ê⁰ + B̂0`.
///
/// `signal` may lie outside `[0, 1]` (the expectation signal lives in `[1, 2]`);
/// the result is only rejected when `B̂1 ≤ 0`. Other negative variances are
/// reported by [`MomentSet::violations`].
pub fn filtered_moments(signal: f64, r1: &MomentSet, r2: &MomentSet) -> Result<MomentSet> {
    if !signal.is_finite() {
        return invalid("signal must be finite");
    }
    let out = if signal == 1.0 {
        *r1
    } else if signal == 0.0 {
        *r2
    } else {
        let mix = |a: f64, b: f64| signal * a + (1.0 - signal) * b;
        MomentSet::from_raw(
            mix(r1.a0, r2.a0),
            mix(r1.b0, r2.b0),
            mix(r1.e1_mean(), r2.e1_mean()),
            mix(r1.e1_second(), r2.e1_second()),
            mix(r1.a2, r2.a2),
            mix(r1.b2, r2.b2),
        )
    };
    if !(out.b1 > 0.0) {
        return invalid(format!("filtered B1 = {} at signal {signal} is not positive", out.b1));
    }
    Ok(out)
}

/// How the moments of a schedule were formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    RegimeConditioned,
    Filtered,
    ExpectationBased,
}

/// Per-period moments for `t = 0..T−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSchedule {
    pub sets: Vec<MomentSet>,
    pub flavor: Flavor,
}

impl MomentSchedule {
    pub fn new(sets: Vec<MomentSet>, flavor: Flavor) -> Result<Self> {
        if sets.is_empty() {
            return invalid("schedule must cover at least one period");
        }
        for (t, m) in sets.iter().enumerate() {
            if !(m.b1 > 0.0) || [m.a0, m.b0, m.a1, m.b1, m.a2, m.b2].iter().any(|v| !v.is_finite()) {
                return invalid(format!("invalid moments at t={t}: {m:?}"));
            }
        }
        Ok(MomentSchedule { sets, flavor })
    }

    /// The same moment set for every period.
    pub fn constant(m: MomentSet, horizon: usize, flavor: Flavor) -> Result<Self> {
        Self::new(vec![m; horizon], flavor)
    }

    pub fn horizon(&self) -> usize {
        self.sets.len()
    }
}
