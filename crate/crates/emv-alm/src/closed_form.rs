//! Analytic value functions and optimal Gaussian feedback policies.
//!
//! All formulas take a [`MomentSchedule`]; regime-conditioned, filtered and
//! expectation-based moments share one code path.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};
use crate::filter::{filtered_moments, Flavor, MomentSchedule, MomentSet};
use crate::market::{MarketModel, Regime};
use crate::policy::{GaussianPolicy, PolicyKind, SignalKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Horizon in periods.
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: f64,
    pub w: f64,
    pub lambda: f64,
    pub x0: f64,
    pub l0: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return invalid("T must be at least 1");
        }
        if !(self.lambda > 0.0) {
            return invalid("lambda must be positive");
        }
        Ok(())
    }
}

/// `F1 = B0 B1 − (A0 A1 − (B0 − A0²))²`, `F2 = A0 (B1 − A1²) + A1 (B0 − A0²)`.
pub fn f_terms(m: &MomentSet) -> (f64, f64) {
    let c = m.cross();
    let f1 = m.b0 * m.b1 - c * c;
    let f2 = m.a0 * (m.b1 - m.a1 * m.a1) + m.a1 * (m.b0 - m.a0 * m.a0);
    (f1, f2)
}

/// A product kept as `sign · exp(log_abs)` so long horizons neither overflow
/// nor underflow before the final combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogProduct {
    pub log_abs: f64,
    pub sign: f64,
}

impl LogProduct {
    pub const ONE: LogProduct = LogProduct { log_abs: 0.0, sign: 1.0 };

    pub fn times(self, v: f64) -> LogProduct {
        if v == 0.0 {
            return LogProduct { log_abs: f64::NEG_INFINITY, sign: 0.0 };
        }
        LogProduct { log_abs: self.log_abs + v.abs().ln(), sign: self.sign * v.signum() }
    }

    /// `v^n` for an integer power.
    pub fn power(v: f64, n: usize) -> LogProduct {
        if n == 0 {
            return LogProduct::ONE;
        }
        if v == 0.0 {
            return LogProduct { log_abs: f64::NEG_INFINITY, sign: 0.0 };
        }
        let sign = if v < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
        LogProduct { log_abs: n as f64 * v.abs().ln(), sign }
    }

    pub fn mul(self, o: LogProduct) -> LogProduct {
        LogProduct { log_abs: self.log_abs + o.log_abs, sign: self.sign * o.sign }
    }

    /// `self · k` as a plain number.
    pub fn scale(self, k: f64) -> f64 {
        if self.sign == 0.0 || k == 0.0 {
            return 0.0;
        }
        self.sign * k.signum() * (self.log_abs + k.abs().ln()).exp()
    }

    pub fn value(self) -> f64 {
        self.scale(1.0)
    }
}

/// Optimal policy at one date as an affine rule:
/// `mean = kx·x + kw·(w + hl·l)`, with constant `variance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoefficients {
    pub kx: f64,
    pub kw: f64,
    pub hl: f64,
    pub variance: f64,
}

impl PolicyCoefficients {
    pub fn mean(&self, x: f64, l: f64, w: f64) -> f64 {
        self.kx * x + self.kw * (w + self.hl * l)
    }

    fn assemble(m: &MomentSet, g: LogProduct, h: LogProduct, v: LogProduct, lambda: f64) -> Self {
        PolicyCoefficients {
            kx: -m.cross() / m.b1,
            kw: g.scale(m.a1 / m.b1),
            hl: h.value(),
            variance: v.scale(lambda / (2.0 * m.b1)),
        }
    }
}

fn check_f1(k: usize, m: &MomentSet) -> Result<(f64, f64)> {
    let (f1, f2) = f_terms(m);
    if !(f1 > 0.0) {
        return numerical(format!("F1 = {f1} is not positive at k={k}"));
    }
    Ok((f1, f2))
}

/// Coefficients of the optimal policy at `t` for a general schedule.
pub fn policy_coefficients(t: usize, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<PolicyCoefficients> {
    let horizon = schedule.horizon();
    if t >= horizon {
        return invalid(format!("t={t} outside 0..{horizon}"));
    }
    let mut g = LogProduct::ONE;
    let mut v = LogProduct::ONE;
    for k in t + 1..horizon {
        let m = &schedule.sets[k];
        let (f1, f2) = check_f1(k, m)?;
        g = g.times(f2 / f1);
        v = v.times(m.b1 / f1);
    }
    let mut h = LogProduct::ONE;
    for k in t..horizon {
        h = h.times(schedule.sets[k].a2);
    }
    Ok(PolicyCoefficients::assemble(&schedule.sets[t], g, h, v, spec.lambda))
}

/// Optimal policy with the same moments `m` over the `remaining` periods;
/// products reduce to powers.
pub fn frozen_coefficients(m: &MomentSet, remaining: usize, lambda: f64) -> Result<PolicyCoefficients> {
    if remaining == 0 {
        return invalid("remaining horizon must be positive");
    }
    let (f1, f2) = check_f1(0, m)?;
    let n = remaining - 1;
    let g = LogProduct::power(f2 / f1, n);
    let v = LogProduct::power(m.b1 / f1, n);
    let h = LogProduct::power(m.a2, remaining);
    Ok(PolicyCoefficients::assemble(m, g, h, v, lambda))
}

/// Mean and variance of the optimal Gaussian policy at `(t, x, l)`.
pub fn optimal_policy(t: usize, x: f64, l: f64, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let c = policy_coefficients(t, schedule, spec)?;
    Ok((c.mean(x, l, spec.w), c.variance))
}

/// The suboptimal policy: the optimal formula on an expectation-based schedule.
pub fn suboptimal_policy(t: usize, x: f64, l: f64, tilde: &MomentSchedule, spec: &ProblemSpec) -> Result<(f64, f64)> {
    optimal_policy(t, x, l, tilde, spec)
}

/// Coefficients of the value function at `t`:
///
/// `V = log_term + a x² − 2b(w + c l)x − s(w + c l)² + 2c w l + (e + corr) l² − d² + 2wd`.
///
/// `corr` accounts for the liability variance: it solves
/// `corr_t = B2_t corr_{t+1} − s_{t+1} c_{t+1}² (B2_t − A2_t²)`, `corr_T = 0`,
/// and vanishes when `q` is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueCoefficients {
    pub log_term: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
    pub e: f64,
    pub corr: f64,
}

impl ValueCoefficients {
    pub const TERMINAL: ValueCoefficients =
        ValueCoefficients { log_term: 0.0, a: 1.0, b: 1.0, c: 1.0, s: 0.0, e: 1.0, corr: 0.0 };

    pub fn eval(&self, x: f64, l: f64, w: f64, d: f64) -> f64 {
        let wl = w + self.c * l;
        self.log_term + self.a * x * x - 2.0 * self.b * wl * x - self.s * wl * wl
            + 2.0 * self.c * w * l
            + (self.e + self.corr) * l * l
            - d * d
            + 2.0 * w * d
    }

    pub fn to_quadratic(&self, w: f64, d: f64) -> Quadratic {
        let (a, b, c, s) = (self.a, self.b, self.c, self.s);
        Quadratic {
            xx: a,
            xl: -b * c,
            ll: -s * c * c + self.e + self.corr,
            x1: -b * w,
            l1: c * w * (1.0 - s),
            c11: -s * w * w + self.log_term - d * d + 2.0 * w * d,
        }
    }
}

/// Backward recursion of the value-function coefficients down to `t`.
pub fn value_coefficients(t: usize, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<ValueCoefficients> {
    let horizon = schedule.horizon();
    if t > horizon {
        return invalid(format!("t={t} beyond horizon {horizon}"));
    }
    let mut v = ValueCoefficients::TERMINAL;
    for k in (t..horizon).rev() {
        let m = &schedule.sets[k];
        let (f1, f2) = check_f1(k, m)?;
        let arg = m.b1 * v.a / (PI * spec.lambda);
        if !(arg > 0.0) {
            return numerical(format!("nonpositive log argument {arg} at k={k}"));
        }
        let var_q = m.b2 - m.a2 * m.a2;
        v = ValueCoefficients {
            log_term: v.log_term + 0.5 * spec.lambda * arg.ln(),
            a: v.a * f1 / m.b1,
            b: v.b * f2 / m.b1,
            c: v.c * m.a2,
            s: v.s + (m.a1 * m.a1 / m.b1) * (v.b * v.b / v.a),
            e: v.e * m.b2,
            corr: m.b2 * v.corr - v.s * v.c * v.c * var_q,
        };
    }
    Ok(v)
}

/// Value function at `(t, x, l)`; `t = T` gives `(x − l − w)² − (w − d)²`.
pub fn value_function(t: usize, x: f64, l: f64, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<f64> {
    Ok(value_coefficients(t, schedule, spec)?.eval(x, l, spec.w, spec.d))
}

/// The value function as printed, i.e. without the liability-variance term.
/// Agrees with [`value_function`] when `q` is deterministic or `l = 0`.
pub fn value_function_printed(t: usize, x: f64, l: f64, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<f64> {
    let mut v = value_coefficients(t, schedule, spec)?;
    v.corr = 0.0;
    Ok(v.eval(x, l, spec.w, spec.d))
}

/// `zᵀ M z` for `z = (x, l, 1)` with a symmetric `M`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic {
    pub xx: f64,
    pub xl: f64,
    pub ll: f64,
    pub x1: f64,
    pub l1: f64,
    pub c11: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64, l: f64) -> f64 {
        self.xx * x * x + 2.0 * self.xl * x * l + self.ll * l * l + 2.0 * self.x1 * x + 2.0 * self.l1 * l + self.c11
    }

    /// `(x − l − w)² − (w − d)²`.
    pub fn terminal(w: f64, d: f64) -> Quadratic {
        Quadratic { xx: 1.0, xl: -1.0, ll: 1.0, x1: -w, l1: w, c11: w * w - (w - d) * (w - d) }
    }

    /// `E[Q(e⁰x + (e¹ − e⁰)u, q l)]` with independent `q`.
    pub fn expect_next(&self, m: &MomentSet, x: f64, l: f64, u: f64) -> f64 {
        let ex2 = m.b0 * x * x + 2.0 * m.cross() * x * u + m.b1 * u * u;
        let ex = m.a0 * x + m.a1 * u;
        self.xx * ex2 + 2.0 * self.xl * ex * m.a2 * l + self.ll * m.b2 * l * l + 2.0 * self.x1 * ex
            + 2.0 * self.l1 * m.a2 * l
            + self.c11
    }
}

/// Gauss–Hermite rule with the normalisation folded in: `E[f(U)]` for
/// `U ~ N(mean, var)` is `Σ wᵢ f(mean + √(2 var) zᵢ)`.
pub struct NormalQuadrature {
    nodes: Vec<(f64, f64)>,
}

impl NormalQuadrature {
    pub fn new(order: usize) -> Result<Self> {
        let deg = NonZeroUsize::new(order).ok_or_else(|| crate::Error::Invalid("order must be positive".into()))?;
        let rule = GaussHermite::new(deg);
        let norm = PI.sqrt();
        let nodes = rule.iter().map(|(z, w)| (*z, *w / norm)).collect();
        Ok(NormalQuadrature { nodes })
    }

    pub fn expect(&self, mean: f64, var: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = (2.0 * var).sqrt();
        self.nodes.iter().map(|(z, w)| w * f(mean + scale * z)).sum()
    }
}

/// `E_π[E[V_{t+1}(x', l')] + λ ln π(u)]` for `π = N(mean, var)`, by quadrature over `u`.
#[allow(clippy::too_many_arguments)]
pub fn one_step_objective(
    t: usize,
    x: f64,
    l: f64,
    mean: f64,
    var: f64,
    schedule: &MomentSchedule,
    spec: &ProblemSpec,
    quad: &NormalQuadrature,
) -> Result<f64> {
    if !(var > 0.0) {
        return invalid("policy variance must be positive");
    }
    let next = value_coefficients(t + 1, schedule, spec)?.to_quadratic(spec.w, spec.d);
    let m = &schedule.sets[t];
    let log_norm = -0.5 * (2.0 * PI * var).ln();
    Ok(quad.expect(mean, var, |u| {
        let log_pi = log_norm - (u - mean) * (u - mean) / (2.0 * var);
        next.expect_next(m, x, l, u) + spec.lambda * log_pi
    }))
}

/// `|RHS − V_t|` of the Bellman equation at the optimal action density.
pub fn bellman_residual(
    t: usize,
    x: f64,
    l: f64,
    schedule: &MomentSchedule,
    spec: &ProblemSpec,
    quad_order: usize,
) -> Result<f64> {
    if quad_order < 5 {
        return invalid(format!("quadrature order {quad_order} is below 5"));
    }
    let quad = NormalQuadrature::new(quad_order)?;
    let (mean, var) = optimal_policy(t, x, l, schedule, spec)?;
    let rhs = one_step_objective(t, x, l, mean, var, schedule, spec, &quad)?;
    Ok((rhs - value_function(t, x, l, schedule, spec)?).abs())
}

/// Closed-form policy with frozen moments, tabulated over the horizon.
///
/// Future moments are those of the current regime (complete information) or
/// the current signal (filter or expectation), as in the product formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenPolicy {
    pub kind: PolicyKind,
    pub signal: SignalKind,
    pub w: f64,
    /// `table[t][i]`: regime `i+1` for complete information; index 0 otherwise.
    pub table: Vec<[PolicyCoefficients; 2]>,
    /// Negative-variance reports from mixture weights outside `[0, 1]`.
    pub violations: usize,
}

impl FrozenPolicy {
    pub fn new(kind: PolicyKind, signal: SignalKind, model: &MarketModel, spec: &ProblemSpec) -> Result<Self> {
        let horizon = spec.horizon;
        let (r1, r2) = model.moments_pair();
        let paths = crate::filter::SignalPaths::new(model.chain.p0, &model.chain.p, horizon);
        let mut table = Vec::with_capacity(horizon);
        let mut violations = 0;
        for t in 0..horizon {
            let rem = horizon - t;
            let row = match signal {
                SignalKind::Regime => [
                    frozen_coefficients(&r1, rem, spec.lambda)?,
                    frozen_coefficients(&r2, rem, spec.lambda)?,
                ],
                other => {
                    let s = match other {
                        SignalKind::Filter => paths.p_hat[t],
                        SignalKind::Expectation => paths.p_tilde[t],
                        _ => paths.p_uncond[t],
                    };
                    let m = filtered_moments(s, &r1, &r2)?;
                    violations += m.violations().len();
                    let c = frozen_coefficients(&m, rem, spec.lambda)?;
                    [c, c]
                }
            };
            table.push(row);
        }
        Ok(FrozenPolicy { kind, signal, w: spec.w, table, violations })
    }

    /// Complete-information optimum (regime observed).
    pub fn coemv(model: &MarketModel, spec: &ProblemSpec) -> Result<Self> {
        Self::new(PolicyKind::CoemvOpt, SignalKind::Regime, model, spec)
    }

    /// Partial-information optimum on the filter.
    pub fn poemv(model: &MarketModel, spec: &ProblemSpec) -> Result<Self> {
        Self::new(PolicyKind::PoemvOpt, SignalKind::Filter, model, spec)
    }

    /// Suboptimal policy on the expectation signal.
    pub fn suboptimal(model: &MarketModel, spec: &ProblemSpec) -> Result<Self> {
        Self::new(PolicyKind::PoemvSub, SignalKind::Expectation, model, spec)
    }

    pub fn with_w(&self, w: f64) -> Self {
        FrozenPolicy { w, ..self.clone() }
    }
}

impl GaussianPolicy for FrozenPolicy {
    fn signal_kind(&self) -> SignalKind {
        self.signal
    }
    fn kind(&self) -> PolicyKind {
        self.kind
    }
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64) {
        let i = if self.signal == SignalKind::Regime && signal > 1.5 { 1 } else { 0 };
        let c = &self.table[t][i];
        (c.mean(x, l, self.w), c.variance)
    }
}

/// Frozen schedule for one regime (complete information).
pub fn regime_schedule(model: &MarketModel, regime: Regime, horizon: usize) -> Result<MomentSchedule> {
    MomentSchedule::constant(model.regime_moments(regime), horizon, Flavor::RegimeConditioned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(horizon: usize) -> ProblemSpec {
        ProblemSpec { horizon, d: 1.5, w: 1.7, lambda: 0.8, x0: 1.0, l0: 0.1 }
    }

    fn sample_set() -> MomentSet {
        MomentSet::from_mean_var(1.01, 0.0004, 1.05, 0.02, 1.02, 0.01)
    }

    #[test]
    fn f_terms_cases() {
        let (a, s2) = (0.06, 0.04);
        let m = MomentSet { a0: 1.0, b0: 1.0, a1: a, b1: a * a + s2, a2: 1.0, b2: 1.0 };
        let (f1, f2) = f_terms(&m);
        assert!((f1 - s2).abs() < 1e-15 && (f2 - s2).abs() < 1e-15);
        let rf: f64 = 1.03;
        let m = MomentSet { a0: rf, b0: rf * rf, a1: a, b1: a * a + s2, a2: 1.0, b2: 1.0 };
        let (f1, f2) = f_terms(&m);
        assert!((f1 - rf * rf * s2).abs() < 1e-15 && (f2 - rf * s2).abs() < 1e-15);
        let m = MomentSet { a0: 1.01, b0: 1.03, a1: 0.0, b1: 0.05, a2: 1.0, b2: 1.0 };
        let (f1, f2) = f_terms(&m);
        assert!((f2 - 1.01 * 0.05).abs() < 1e-15);
        assert!((f1 - (1.03 * 0.05 - (1.03f64 - 1.01 * 1.01).powi(2))).abs() < 1e-15);
    }

    #[test]
    fn last_period_policy() {
        let m = sample_set();
        let s = spec(3);
        let sched = MomentSchedule::constant(m, 3, Flavor::RegimeConditioned).unwrap();
        let (x, l) = (1.3, 0.2);
        let (mean, var) = optimal_policy(2, x, l, &sched, &s).unwrap();
        let expect = -(m.cross() * x - m.a1 * (s.w + l * m.a2)) / m.b1;
        assert!((mean - expect).abs() < 1e-14);
        assert!((var - s.lambda / (2.0 * m.b1)).abs() < 1e-14);
    }

    #[test]
    fn lambda_scales_variance_only() {
        let sched = MomentSchedule::constant(sample_set(), 5, Flavor::RegimeConditioned).unwrap();
        let s1 = spec(5);
        let s2 = ProblemSpec { lambda: 2.0 * s1.lambda, ..s1 };
        for t in 0..5 {
            let (m1, v1) = optimal_policy(t, 1.1, 0.3, &sched, &s1).unwrap();
            let (m2, v2) = optimal_policy(t, 1.1, 0.3, &sched, &s2).unwrap();
            assert_eq!(m1, m2);
            assert!((v2 - 2.0 * v1).abs() < 1e-14 * v2);
        }
    }

    #[test]
    fn frozen_powers_match_general_products() {
        let m = sample_set();
        let s = spec(40);
        let sched = MomentSchedule::constant(m, 40, Flavor::Filtered).unwrap();
        for t in 0..40 {
            let a = policy_coefficients(t, &sched, &s).unwrap();
            let b = frozen_coefficients(&m, 40 - t, s.lambda).unwrap();
            for (u, v) in [(a.kx, b.kx), (a.kw, b.kw), (a.hl, b.hl), (a.variance, b.variance)] {
                assert!((u - v).abs() <= 1e-12 * v.abs().max(1e-300), "t={t}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn terminal_value() {
        let sched = MomentSchedule::constant(sample_set(), 2, Flavor::RegimeConditioned).unwrap();
        let s = ProblemSpec { w: 1.0, d: 1.0, ..spec(2) };
        assert!((value_function(2, 2.0, 0.5, &sched, &s).unwrap() - 0.25).abs() < 1e-15);
        let s = ProblemSpec { w: 1.4, d: 1.0, ..spec(2) };
        let v = value_function(2, 0.3 + 1.4, 0.3, &sched, &s).unwrap();
        assert!((v + 0.16).abs() < 1e-14, "{v}");
    }

    /// One-step case written out from the direct minimisation of
    /// `E[(x' − l' − w)²] − (w − d)² + λ∫π ln π`.
    #[test]
    fn last_step_value_by_hand() {
        let m = sample_set();
        let s = spec(1);
        let sched = MomentSchedule::constant(m, 1, Flavor::RegimeConditioned).unwrap();
        let (x, l) = (1.2, 0.25);
        // E[(x' - l' - w)^2] = B1 u^2 + 2 u (C x - A1 (A2 l + w)) + rest
        let bu = m.b1;
        let mu = m.cross() * x - m.a1 * (m.a2 * l + s.w);
        let rest = m.b0 * x * x - 2.0 * m.a0 * x * (m.a2 * l + s.w) + m.b2 * l * l + 2.0 * m.a2 * l * s.w + s.w * s.w;
        let expect = rest - mu * mu / bu + 0.5 * s.lambda * (bu / (PI * s.lambda)).ln() - (s.w - s.d).powi(2);
        let got = value_function(0, x, l, &sched, &s).unwrap();
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn printed_form_agrees_without_liability_noise() {
        let mut m = sample_set();
        let s = spec(4);
        let sched = MomentSchedule::constant(m, 4, Flavor::RegimeConditioned).unwrap();
        let a = value_function(0, 1.1, 0.0, &sched, &s).unwrap();
        let b = value_function_printed(0, 1.1, 0.0, &sched, &s).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(value_function(0, 1.1, 0.4, &sched, &s).unwrap() != value_function_printed(0, 1.1, 0.4, &sched, &s).unwrap());
        m.b2 = m.a2 * m.a2;
        let sched = MomentSchedule::constant(m, 4, Flavor::RegimeConditioned).unwrap();
        let a = value_function(0, 1.1, 0.4, &sched, &s).unwrap();
        let b = value_function_printed(0, 1.1, 0.4, &sched, &s).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn quadratic_matches_coefficients() {
        let sched = MomentSchedule::constant(sample_set(), 3, Flavor::RegimeConditioned).unwrap();
        let s = spec(3);
        let v = value_coefficients(1, &sched, &s).unwrap();
        let q = v.to_quadratic(s.w, s.d);
        for (x, l) in [(0.5, 0.1), (2.0, -0.3), (1.0, 1.0)] {
            assert!((q.eval(x, l) - v.eval(x, l, s.w, s.d)).abs() < 1e-13);
        }
        let t = Quadratic::terminal(s.w, s.d);
        let (x, l) = (1.9, 0.4);
        assert!((t.eval(x, l) - ((x - l - s.w).powi(2) - (s.w - s.d).powi(2))).abs() < 1e-14);
    }

    #[test]
    fn bellman_residual_small_instance() {
        let s = spec(3);
        let sets = vec![
            MomentSet::from_mean_var(1.01, 0.0004, 1.05, 0.02, 1.02, 0.01),
            MomentSet::from_mean_var(1.0, 0.0, 1.03, 0.03, 1.01, 0.02),
            MomentSet::from_mean_var(1.02, 0.001, 1.08, 0.05, 1.0, 0.005),
        ];
        let sched = MomentSchedule::new(sets, Flavor::RegimeConditioned).unwrap();
        for t in 0..3 {
            let r = bellman_residual(t, 1.2, 0.3, &sched, &s, 40).unwrap();
            assert!(r < if t == 2 { 1e-10 } else { 1e-8 }, "t={t}: {r}");
        }
        let big = ProblemSpec { lambda: 8.0, ..s };
        assert!(bellman_residual(0, 1.2, 0.3, &sched, &big, 40).unwrap() < 1e-8);
        assert!(bellman_residual(0, 1.2, 0.3, &sched, &s, 4).is_err());
    }

    #[test]
    fn optimum_beats_perturbations() {
        let s = spec(3);
        let sched = MomentSchedule::constant(sample_set(), 3, Flavor::RegimeConditioned).unwrap();
        let quad = NormalQuadrature::new(40).unwrap();
        for t in 0..3 {
            let (x, l) = (1.1, 0.2);
            let (m, v) = optimal_policy(t, x, l, &sched, &s).unwrap();
            let best = one_step_objective(t, x, l, m, v, &sched, &s, &quad).unwrap();
            for (dm, dv) in [(1.1, 1.0), (0.9, 1.0), (1.0, 1.1), (1.0, 0.9), (1.1, 0.9)] {
                let other = one_step_objective(t, x, l, m * dm, v * dv, &sched, &s, &quad).unwrap();
                assert!(best <= other + 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn nonpositive_f1_is_reported() {
        let m = MomentSet { a0: 1.0, b0: 1.0, a1: 0.1, b1: 0.01, a2: 1.0, b2: 1.0 };
        let sched = MomentSchedule::constant(m, 3, Flavor::RegimeConditioned).unwrap();
        let err = optimal_policy(0, 1.0, 0.0, &sched, &spec(3)).unwrap_err();
        assert!(err.to_string().contains("k=1"), "{err}");
    }
}
