//! Out-of-sample evaluation and comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::closed_form::ProblemSpec;
use crate::error::{invalid, numerical, Result};
use crate::market::{Dynamics, MarketModel, Simulator};
use crate::policy::{GaussianPolicy, PolicyKind};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algo: String,
    pub policy_kind: PolicyKind,
    pub mean: f64,
    pub variance: f64,
    pub sharpe: f64,
    pub n_paths: usize,
    /// Paths dropped for a non-finite terminal surplus.
    pub excluded: usize,
    pub seed: u64,
    pub digest: Option<String>,
}

/// `(mean − 1)/√variance`; zero when the mean is exactly 1.
pub fn sharpe(mean: f64, variance: f64) -> f64 {
    if mean == 1.0 {
        return 0.0;
    }
    (mean - 1.0) / variance.sqrt()
}

/// Pairwise sum, so the reduction order is fixed by the slice alone.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and unbiased variance.
pub fn mean_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

/// Terminal surpluses of `n_paths` episodes; path `i` uses stream `i` of `seed`.
pub fn terminal_surpluses(
    policy: &dyn GaussianPolicy,
    model: &MarketModel,
    dynamics: Dynamics,
    n_paths: usize,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let sim = Simulator::new(model, dynamics, spec.horizon)?;
    let mut out = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let mut rng = stream(seed, i as u64);
        let s = match sim.run(policy, spec.x0, spec.l0, &mut rng) {
            Ok(ep) => ep.terminal_surplus(),
            Err(crate::Error::Numerical(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        out.push(s);
    }
    Ok(out)
}

/// Simulate the frozen policy and summarise the terminal surplus `x_T − l_T`.
pub fn out_of_sample(
    algo: &str,
    policy: &dyn GaussianPolicy,
    model: &MarketModel,
    dynamics: Dynamics,
    n_paths: usize,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<EvalReport> {
    if n_paths < 2 {
        return invalid("need at least two paths");
    }
    let all = terminal_surpluses(policy, model, dynamics, n_paths, spec, seed)?;
    let kept: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded = n_paths - kept.len();
    if excluded * 100 > n_paths || kept.len() < 2 {
        return numerical(format!("{excluded} of {n_paths} paths ended non-finite"));
    }
    let (mean, variance) = mean_variance(&kept);
    Ok(EvalReport {
        algo: algo.to_string(),
        policy_kind: policy.kind(),
        mean,
        variance,
        sharpe: sharpe(mean, variance),
        n_paths: kept.len(),
        excluded,
        seed,
        digest: None,
    })
}

/// Solve `E[S_T](w) = d` for a family whose terminal mean is affine in `w`
/// (true for every affine feedback rule under common random numbers).
pub fn calibrate_multiplier<P: GaussianPolicy>(
    build: impl Fn(f64) -> P,
    model: &MarketModel,
    dynamics: Dynamics,
    n_paths: usize,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<f64> {
    let mean_at = |w: f64| -> Result<f64> {
        let v = terminal_surpluses(&build(w), model, dynamics, n_paths, spec, seed)?;
        Ok(pairwise_sum(&v) / v.len() as f64)
    };
    let (m0, m1) = (mean_at(0.0)?, mean_at(1.0)?);
    let slope = m1 - m0;
    if !(slope.abs() > 1e-300) || !slope.is_finite() {
        return numerical(format!("terminal mean does not respond to w (slope {slope})"));
    }
    Ok((spec.d - m0) / slope)
}

/// Aligned text and CSV (`algo,mean,variance,sharpe,n_paths,seed`).
pub fn compare_table(reports: &[EvalReport]) -> (String, String) {
    let mut csv = String::from("algo,mean,variance,sharpe,n_paths,seed\n");
    let mut text = String::new();
    if reports.is_empty() {
        return (text, csv);
    }
    let width = reports.iter().map(|r| r.algo.len()).max().unwrap_or(0).max(4);
    let _ = writeln!(text, "{:<width$}  {:>12}  {:>12}  {:>12}", "Algo", "Mean", "Variance", "Sharpe");
    for r in reports {
        let _ = writeln!(text, "{:<width$}  {:>12.4}  {:>12.4}  {:>12.4}", r.algo, r.mean, r.variance, r.sharpe);
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.algo, r.mean, r.variance, r.sharpe, r.n_paths, r.seed);
    }
    (text, csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::FrozenPolicy;
    use crate::policy::{FnPolicy, MeanOnly, SignalKind};

    #[test]
    fn sharpe_cases() {
        let s = sharpe(7.9985, 0.0094);
        assert!((s - 72.0167).abs() / 72.0167 < 0.01, "{s}");
        assert_eq!(sharpe(1.0, 0.3), 0.0);
    }

    #[test]
    fn moments_and_sum() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        let (m, var) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((var - 5.0 / 3.0).abs() < 1e-15);
    }

    fn spec() -> ProblemSpec {
        ProblemSpec { horizon: 252, d: 2.0, w: 3.0, lambda: 2.0, x0: 1.0, l0: 0.1 }
    }

    #[test]
    fn report_fields_and_errors() {
        let model = MarketModel::study_default();
        let s = spec();
        let pol = FrozenPolicy::coemv(&model, &s).unwrap();
        let r = out_of_sample("opt", &pol, &model, Dynamics::Market, 200, &s, 3).unwrap();
        assert_eq!(r.n_paths, 200);
        assert!(r.variance >= 0.0);
        assert_eq!(r.sharpe, (r.mean - 1.0) / r.variance.sqrt());
        assert!(out_of_sample("opt", &pol, &model, Dynamics::Market, 1, &s, 3).is_err());
    }

    #[test]
    fn nonfinite_paths_fail_the_report() {
        let model = MarketModel::study_default();
        let s = spec();
        let bad = FnPolicy { signal: SignalKind::Regime, mean: |_, _, _, _| f64::NAN, var: |_, _| 0.0 };
        assert!(out_of_sample("bad", &bad, &model, Dynamics::Market, 10, &s, 0).is_err());
    }

    #[test]
    fn disjoint_seeds_agree_within_mc_error() {
        let model = MarketModel::study_default();
        let s = spec();
        let pol = FrozenPolicy::coemv(&model, &s).unwrap();
        let exec = MeanOnly(&pol);
        let a = out_of_sample("a", &exec, &model, Dynamics::Market, 400, &s, 1).unwrap();
        let b = out_of_sample("b", &exec, &model, Dynamics::Market, 400, &s, 2).unwrap();
        let se = ((a.variance + b.variance) / 400.0).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * se);
    }

    #[test]
    fn calibration_hits_target() {
        let model = MarketModel::study_default();
        let s = spec();
        let base = FrozenPolicy::poemv(&model, &s).unwrap();
        let dyn_ = Dynamics::Filtered(SignalKind::Filter);
        let w = calibrate_multiplier(|w| base.with_w(w), &model, dyn_, 50, &s, 5).unwrap();
        let r = out_of_sample("p", &base.with_w(w), &model, dyn_, 50, &s, 5).unwrap();
        assert!((r.mean - s.d).abs() < 1e-8, "{}", r.mean);
    }

    #[test]
    fn table_layout() {
        let (t, c) = compare_table(&[]);
        assert!(t.is_empty());
        assert_eq!(c, "algo,mean,variance,sharpe,n_paths,seed\n");
        let r = EvalReport {
            algo: "PoEMV-1".into(),
            policy_kind: PolicyKind::Learned,
            mean: 8.0,
            variance: 0.01,
            sharpe: 70.0,
            n_paths: 1000,
            excluded: 0,
            seed: 1,
            digest: None,
        };
        let (t, c) = compare_table(&[r]);
        assert_eq!(t.lines().count(), 2);
        assert_eq!(c.lines().nth(1).unwrap(), "PoEMV-1,8,0.01,70,1000,1");
    }
}
