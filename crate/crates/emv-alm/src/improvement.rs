//! Policy improvement inside the affine Gaussian family.
//!
//! Objectives are quadratic forms in `z = (x, l, w, 1)`; carrying `w` as a
//! frozen state keeps every coefficient valid for all multipliers at once.
//! Iteration `n + 1` is greedy with respect to the objective of iteration `n`
//! one period later, so after `T − t` steps the policy at `t` is optimal.

use std::f64::consts::{E, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::{f_terms, policy_coefficients, ProblemSpec};
use crate::error::{invalid, numerical, Result};
use crate::filter::{MomentSchedule, MomentSet};
use crate::rng::Stream;

const X: usize = 0;
const L: usize = 1;
const W: usize = 2;
const ONE: usize = 3;

type Mat4 = [[f64; 4]; 4];

/// Minimiser of `∫(B u² + 2 μ u) π(u) du + λ ∫ π ln π` over densities: `N(−μ/B, λ/(2B))`.
pub fn gaussian_entropy_min(b: f64, mu: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(b > 0.0) {
        return invalid(format!("quadratic coefficient B = {b} must be positive"));
    }
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    Ok((-mu / b, lambda / (2.0 * b)))
}

/// Value of the functional above at `N(mean, var)`.
pub fn entropy_functional(b: f64, mu: f64, lambda: f64, mean: f64, var: f64) -> f64 {
    b * (mean * mean + var) + 2.0 * mu * mean - 0.5 * lambda * (2.0 * PI * E * var).ln()
}

/// `N(k · (x, l, w, 1), var)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineGaussian {
    pub k: [f64; 4],
    pub var: f64,
}

impl AffineGaussian {
    pub fn mean(&self, x: f64, l: f64, w: f64) -> f64 {
        self.k[X] * x + self.k[L] * l + self.k[W] * w + self.k[ONE]
    }

    /// Largest parameter change, relative to the parameter size.
    pub fn distance(&self, o: &AffineGaussian) -> f64 {
        self.k
            .iter()
            .chain(std::iter::once(&self.var))
            .zip(o.k.iter().chain(std::iter::once(&o.var)))
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Symmetric quadratic form `zᵀ M z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub m: Mat4,
}

impl QuadraticForm {
    /// `(x − l − w)² − (w − d)²`.
    pub fn terminal(d: f64) -> Self {
        let mut m = [[0.0; 4]; 4];
        m[X][X] = 1.0;
        m[L][L] = 1.0;
        set_sym(&mut m, X, L, -1.0);
        set_sym(&mut m, X, W, -1.0);
        set_sym(&mut m, L, W, 1.0);
        set_sym(&mut m, W, ONE, d);
        m[ONE][ONE] = -d * d;
        QuadraticForm { m }
    }

    pub fn eval(&self, x: f64, l: f64, w: f64) -> f64 {
        let z = [x, l, w, 1.0];
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += self.m[i][j] * z[i] * z[j];
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Coefficients `(B, μ)` of `E[Q(x', l', w)] = B u² + 2 μ(z) u + …`.
    fn action_coefficients(&self, m: &MomentSet) -> (f64, [f64; 4]) {
        let q = &self.m;
        let means = next_means(m, &[0.0; 4]);
        let mut mu = [0.0; 4];
        mu[X] += q[X][X] * m.cross();
        for (j, a) in means.iter().enumerate().skip(1) {
            for i in 0..4 {
                mu[i] += m.a1 * q[X][j] * a[i];
            }
        }
        (q[X][X] * m.b1, mu)
    }

    /// Greedy entropy-regularised policy one period before this objective.
    pub fn greedy(&self, m: &MomentSet, lambda: f64) -> Result<AffineGaussian> {
        let (b, mu) = self.action_coefficients(m);
        let (_, var) = gaussian_entropy_min(b, 0.0, lambda)?;
        Ok(AffineGaussian { k: mu.map(|v| -v / b), var })
    }

    /// `E_π[E[Q(x', l', w)]] + λ ∫ π ln π` as a form in `(x, l, w, 1)`.
    pub fn step_back(&self, m: &MomentSet, pi: &AffineGaussian, lambda: f64) -> Result<QuadraticForm> {
        if !(pi.var > 0.0) {
            return invalid("policy variance must be positive");
        }
        let q = &self.m;
        let a = next_means(m, &pi.k);
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if q[i][j] == 0.0 {
                    continue;
                }
                for r in 0..4 {
                    for c in 0..4 {
                        out[r][c] += q[i][j] * a[i][r] * a[j][c];
                    }
                }
            }
        }
        // Conditional variances of x' and l' on top of the products of means.
        let k = pi.k;
        let mut ex = [0.0; 4];
        ex[X] = 1.0;
        for r in 0..4 {
            for c in 0..4 {
                out[r][c] += q[X][X]
                    * ((m.b0 - m.a0 * m.a0) * ex[r] * ex[c]
                        + (m.cross() - m.a0 * m.a1) * (ex[r] * k[c] + k[r] * ex[c])
                        + (m.b1 - m.a1 * m.a1) * k[r] * k[c]);
            }
        }
        out[L][L] += q[L][L] * (m.b2 - m.a2 * m.a2);
        out[ONE][ONE] += q[X][X] * m.b1 * pi.var - 0.5 * lambda * (2.0 * PI * E * pi.var).ln();
        let f = QuadraticForm { m: out };
        if !f.is_finite() {
            return numerical("objective coefficients are not finite");
        }
        Ok(f)
    }
}

fn set_sym(m: &mut Mat4, i: usize, j: usize, v: f64) {
    m[i][j] = v;
    m[j][i] = v;
}

/// Rows `a_i` with `E[s'_i] = a_i · z` for `s' = (x', l', w, 1)`.
fn next_means(m: &MomentSet, k: &[f64; 4]) -> [[f64; 4]; 4] {
    let mut ax = k.map(|v| m.a1 * v);
    ax[X] += m.a0;
    let mut al = [0.0; 4];
    al[L] = m.a2;
    [ax, al, [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Exact objective of a policy sequence from every date, `J_T` terminal.
pub fn evaluate(policies: &[AffineGaussian], schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<Vec<QuadraticForm>> {
    let horizon = schedule.horizon();
    if policies.len() != horizon {
        return invalid(format!("{} policies for horizon {horizon}", policies.len()));
    }
    let mut out = vec![QuadraticForm::terminal(spec.d); horizon + 1];
    for t in (0..horizon).rev() {
        out[t] = out[t + 1].step_back(&schedule.sets[t], &policies[t], spec.lambda)?;
    }
    Ok(out)
}

/// The initial family
/// `N((g1/g2)(g0 x − h1[T−t−1](w + l f1[T−t])), λ h2[T−t−1] / (2 g2))`.
///
/// `g*` are indexed by date, `h*`/`f*` by remaining horizon. `h3` and `f2`
/// only enter the additive constant of the initial objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialPolicyFamily {
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl InitialPolicyFamily {
    pub fn horizon(&self) -> usize {
        self.g0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        if self.g1.len() != horizon || self.g2.len() != horizon {
            return invalid("g0, g1, g2 must have one entry per period");
        }
        for (name, v) in [("h1", &self.h1), ("h2", &self.h2), ("h3", &self.h3), ("f1", &self.f1), ("f2", &self.f2)] {
            if v.len() != horizon + 1 {
                return invalid(format!("{name} must have T+1 entries"));
            }
        }
        if let Some(t) = self.g2.iter().position(|v| !(*v > 0.0)) {
            return invalid(format!("g2 must be positive, t={t}"));
        }
        if let Some(k) = self.h2[..horizon].iter().position(|v| !(*v > 0.0)) {
            return invalid(format!("h2 must be positive, k={k}"));
        }
        let all = [&self.g0, &self.g1, &self.h1, &self.f1];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return invalid("family parameters must be finite");
        }
        Ok(())
    }

    pub fn policy(&self, t: usize, lambda: f64) -> AffineGaussian {
        let horizon = self.horizon();
        let r = self.g1[t] / self.g2[t];
        let h1 = self.h1[horizon - t - 1];
        AffineGaussian {
            k: [r * self.g0[t], -r * h1 * self.f1[horizon - t], -r * h1, 0.0],
            var: lambda * self.h2[horizon - t - 1] / (2.0 * self.g2[t]),
        }
    }

    pub fn policies(&self, lambda: f64) -> Vec<AffineGaussian> {
        (0..self.horizon()).map(|t| self.policy(t, lambda)).collect()
    }

    /// Random member with the terminal normalisation `h1[0] = h2[0] = f1[0] = f2[0] = 1`.
    pub fn random(horizon: usize, rng: &mut Stream) -> Self {
        let mut draw = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(lo..hi)).collect() };
        let g0 = draw(horizon, 0.5, 1.5);
        let g1 = draw(horizon, -1.0, 1.0);
        let g2 = draw(horizon, 0.5, 2.0);
        let mut h1 = draw(horizon + 1, -2.0, 2.0);
        let mut h2 = draw(horizon + 1, 0.5, 2.0);
        let mut f1 = draw(horizon + 1, 0.5, 1.5);
        h1[0] = 1.0;
        h2[0] = 1.0;
        f1[0] = 1.0;
        let mut f2 = vec![1.0; horizon + 1];
        f2[0] = 1.0;
        InitialPolicyFamily { g0, g1, g2, h1, h2, h3: vec![0.0; horizon + 1], f1, f2 }
    }

    /// Family whose `h`, `f` are the ones its own objective exhibits: with
    /// `f1[k] = ∏ A2` over the last `k` periods, the exact objective at
    /// remaining horizon `k` has `x²` coefficient `1/h2[k]`, `x w` coefficient
    /// `−2 h1[k]/h2[k]`, `w²` coefficient `−Σ` and `l²` coefficient `f2[k] − Σ f1[k]²`.
    pub fn consistent(g0: Vec<f64>, g1: Vec<f64>, g2: Vec<f64>, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<Self> {
        let horizon = schedule.horizon();
        let mut fam = InitialPolicyFamily {
            g0,
            g1,
            g2,
            h1: vec![1.0; horizon + 1],
            h2: vec![1.0; horizon + 1],
            h3: vec![0.0; horizon + 1],
            f1: vec![1.0; horizon + 1],
            f2: vec![1.0; horizon + 1],
        };
        fam.validate()?;
        let mut j = QuadraticForm::terminal(spec.d);
        for t in (0..horizon).rev() {
            let k = horizon - t;
            fam.f1[k] = fam.f1[k - 1] * schedule.sets[t].a2;
            j = j.step_back(&schedule.sets[t], &fam.policy(t, spec.lambda), spec.lambda)?;
            if !(j.m[X][X] > 0.0) {
                return numerical(format!("x² coefficient not positive at t={t}"));
            }
            fam.h2[k] = 1.0 / j.m[X][X];
            fam.h1[k] = -j.m[X][W] * fam.h2[k];
            fam.f2[k] = j.m[L][L] - fam.f1[k] * fam.f1[k] * j.m[W][W];
        }
        Ok(fam)
    }
}

/// Policies and objectives after `n` improvement steps. `objectives[t]` is
/// the objective of following `π_n(t), π_{n−1}(t+1), …` and the initial
/// family afterwards; `objectives[T]` is terminal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedPolicy {
    pub n: usize,
    pub policies: Vec<AffineGaussian>,
    pub objectives: Vec<QuadraticForm>,
}

impl IteratedPolicy {
    /// Iteration zero: the initial family and its exact objective.
    pub fn initial(family: &InitialPolicyFamily, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<Self> {
        family.validate()?;
        if family.horizon() != schedule.horizon() {
            return invalid("family and schedule horizons differ");
        }
        let policies = family.policies(spec.lambda);
        let objectives = evaluate(&policies, schedule, spec)?;
        Ok(IteratedPolicy { n: 0, policies, objectives })
    }

    /// Start from explicit policies, evaluated exactly.
    pub fn from_policies(policies: Vec<AffineGaussian>, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<Self> {
        let objectives = evaluate(&policies, schedule, spec)?;
        Ok(IteratedPolicy { n: 0, policies, objectives })
    }

    pub fn objective(&self, t: usize, x: f64, l: f64, w: f64) -> f64 {
        self.objectives[t].eval(x, l, w)
    }
}

/// One improvement step applied at every date.
pub fn improve_once(current: &IteratedPolicy, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<IteratedPolicy> {
    let horizon = schedule.horizon();
    if current.objectives.len() != horizon + 1 {
        return invalid("objective bundle does not match the schedule");
    }
    if let Some(t) = current.objectives.iter().position(|q| !q.is_finite()) {
        return invalid(format!("objective coefficients not finite at t={t}"));
    }
    let mut policies = Vec::with_capacity(horizon);
    let mut objectives = vec![QuadraticForm::terminal(spec.d); horizon + 1];
    for t in 0..horizon {
        let next = &current.objectives[t + 1];
        let m = &schedule.sets[t];
        let pi = next.greedy(m, spec.lambda).map_err(|e| crate::Error::Numerical(format!("t={t}: {e}")))?;
        objectives[t] = next.step_back(m, &pi, spec.lambda)?;
        policies.push(pi);
    }
    Ok(IteratedPolicy { n: current.n + 1, policies, objectives })
}

/// The optimal policy at `t` as an [`AffineGaussian`].
pub fn optimal_affine(t: usize, schedule: &MomentSchedule, spec: &ProblemSpec) -> Result<AffineGaussian> {
    let c = policy_coefficients(t, schedule, spec)?;
    Ok(AffineGaussian { k: [c.kx, c.kw * c.hl, c.kw, 0.0], var: c.variance })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub policy: AffineGaussian,
    pub n_used: usize,
    /// Policy at `t` after each iteration, starting with the initial one.
    pub trace: Vec<IteratedPolicy>,
}

/// Improve until the policy at `t` moves by less than `1e-12` or `T − t`
/// steps are spent, then check it against the closed form.
pub fn iterate_to_convergence(
    initial: &InitialPolicyFamily,
    schedule: &MomentSchedule,
    spec: &ProblemSpec,
    t: usize,
) -> Result<Convergence> {
    let start = IteratedPolicy::initial(initial, schedule, spec)?;
    iterate_from(start, schedule, spec, t)
}

pub fn iterate_from(start: IteratedPolicy, schedule: &MomentSchedule, spec: &ProblemSpec, t: usize) -> Result<Convergence> {
    let horizon = schedule.horizon();
    if t >= horizon {
        return invalid(format!("t={t} must be below T={horizon}"));
    }
    let mut trace = vec![start];
    loop {
        let cur = trace.last().expect("trace is nonempty");
        let next = improve_once(cur, schedule, spec)?;
        let change = next.policies[t].distance(&cur.policies[t]);
        let n = next.n;
        trace.push(next);
        if change < 1e-12 || n >= horizon - t {
            break;
        }
    }
    let last = trace.last().expect("trace is nonempty");
    let policy = last.policies[t];
    let target = optimal_affine(t, schedule, spec)?;
    let err = policy.distance(&target);
    if err > 1e-10 {
        return numerical(format!(
            "no convergence at t={t} after {} iterations: relative error {err:e}, got {:?}, closed form {:?}",
            last.n, policy, target
        ));
    }
    Ok(Convergence { policy, n_used: last.n, trace })
}

/// The `n`-fold iterated policy at `t` written out in closed form from the
/// family constants at remaining horizon `T − t − n`; requires `1 ≤ n ≤ T − t`.
pub fn iterated_policy_formula(
    n: usize,
    t: usize,
    family: &InitialPolicyFamily,
    schedule: &MomentSchedule,
    spec: &ProblemSpec,
) -> Result<AffineGaussian> {
    let horizon = schedule.horizon();
    if n == 0 || t + n > horizon {
        return invalid(format!("need 1 <= n <= T - t, got n={n}, t={t}"));
    }
    let r = horizon - t - n;
    let m = &schedule.sets[t];
    let mut g = 1.0;
    let mut v = 1.0;
    for s in &schedule.sets[t + 1..t + n] {
        let (f1, f2) = f_terms(s);
        g *= f2 / f1;
        v *= s.b1 / f1;
    }
    let a2: f64 = schedule.sets[t..t + n].iter().map(|s| s.a2).product();
    let kw = m.a1 * family.h1[r] * g / m.b1;
    Ok(AffineGaussian {
        k: [-m.cross() / m.b1, kw * family.f1[r] * a2, kw, 0.0],
        var: spec.lambda * family.h2[r] * v / (2.0 * m.b1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{value_function, optimal_policy};
    use crate::filter::Flavor;
    use crate::rng::stream;

    fn spec(horizon: usize) -> ProblemSpec {
        ProblemSpec { horizon, d: 1.4, w: 1.6, lambda: 0.7, x0: 1.0, l0: 0.2 }
    }

    fn schedule(horizon: usize) -> MomentSchedule {
        let sets = (0..horizon)
            .map(|k| {
                let s = k as f64 * 0.01;
                MomentSet::from_mean_var(1.01 + s, 0.0004, 1.05 - s, 0.02 + s, 1.02, 0.01)
            })
            .collect();
        MomentSchedule::new(sets, Flavor::RegimeConditioned).unwrap()
    }

    #[test]
    fn entropy_min_examples() {
        assert_eq!(gaussian_entropy_min(2.0, 1.0, 2.0).unwrap(), (-0.5, 0.5));
        assert_eq!(gaussian_entropy_min(3.7, 0.0, 1.0).unwrap().0, 0.0);
        assert!(gaussian_entropy_min(0.0, 1.0, 1.0).is_err());
        assert!(gaussian_entropy_min(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn entropy_min_beats_grid() {
        let (b, mu, lambda) = (1.3, -0.4, 0.9);
        let (m, v) = gaussian_entropy_min(b, mu, lambda).unwrap();
        let best = entropy_functional(b, mu, lambda, m, v);
        for i in 0..100 {
            for j in 0..100 {
                let mm = -2.0 + 4.0 * i as f64 / 99.0;
                let vv = 0.01 + 2.0 * j as f64 / 99.0;
                assert!(best <= entropy_functional(b, mu, lambda, mm, vv) + 1e-15);
            }
        }
    }

    #[test]
    fn terminal_form() {
        let q = QuadraticForm::terminal(1.3);
        let (x, l, w) = (2.0, 0.4, 1.1);
        assert!((q.eval(x, l, w) - ((x - l - w).powi(2) - (w - 1.3f64).powi(2))).abs() < 1e-14);
    }

    #[test]
    fn evaluation_of_optimum_is_the_value_function() {
        let s = spec(4);
        let sched = schedule(4);
        let pols: Vec<_> = (0..4).map(|t| optimal_affine(t, &sched, &s).unwrap()).collect();
        let j = evaluate(&pols, &sched, &s).unwrap();
        for t in 0..=4 {
            for (x, l) in [(1.0, 0.2), (-0.5, 1.3)] {
                let v = value_function(t, x, l, &sched, &s).unwrap();
                assert!((j[t].eval(x, l, s.w) - v).abs() < 1e-11 * v.abs().max(1.0), "t={t}");
            }
        }
    }

    #[test]
    fn affine_optimum_matches_closed_form_mean() {
        let s = spec(3);
        let sched = schedule(3);
        let p = optimal_affine(1, &sched, &s).unwrap();
        let (m, v) = optimal_policy(1, 0.8, 0.3, &sched, &s).unwrap();
        assert!((p.mean(0.8, 0.3, s.w) - m).abs() < 1e-14 && p.var == v);
    }

    #[test]
    fn last_period_converges_in_one_step() {
        let s = spec(5);
        let sched = schedule(5);
        let fam = InitialPolicyFamily::random(5, &mut stream(1, 0));
        let c = iterate_to_convergence(&fam, &sched, &s, 4).unwrap();
        assert_eq!(c.n_used, 1);
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let s = spec(4);
        let sched = schedule(4);
        let pols: Vec<_> = (0..4).map(|t| optimal_affine(t, &sched, &s).unwrap()).collect();
        let start = IteratedPolicy::from_policies(pols.clone(), &sched, &s).unwrap();
        let next = improve_once(&start, &sched, &s).unwrap();
        for t in 0..4 {
            assert!(next.policies[t].distance(&pols[t]) < 1e-12);
        }
        let c = iterate_from(start, &sched, &s, 0).unwrap();
        assert_eq!(c.n_used, 1);
    }

    #[test]
    fn random_families_converge_monotonically() {
        let s = spec(4);
        let sched = schedule(4);
        for seed in 0..10 {
            let fam = InitialPolicyFamily::random(4, &mut stream(seed, 0));
            let c = iterate_to_convergence(&fam, &sched, &s, 0).unwrap();
            assert!(c.n_used <= 4);
            let mut rng = stream(seed, 1);
            for _ in 0..100 {
                let (x, l): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
                for pair in c.trace.windows(2) {
                    let (a, b) = (pair[0].objective(0, x, l, s.w), pair[1].objective(0, x, l, s.w));
                    assert!(b <= a + 1e-10 * a.abs().max(1.0), "seed {seed}: {b} > {a}");
                }
            }
        }
    }

    #[test]
    fn consistent_family_follows_iterated_formula() {
        let horizon = 5;
        let s = spec(horizon);
        let sched = schedule(horizon);
        let mut rng = stream(9, 0);
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..horizon).map(|_| rng.gen_range(lo..hi)).collect() };
        let fam = InitialPolicyFamily::consistent(draw(0.5, 1.5), draw(-1.0, 1.0), draw(0.5, 2.0), &sched, &s).unwrap();
        let mut it = IteratedPolicy::initial(&fam, &sched, &s).unwrap();
        for n in 1..=horizon {
            it = improve_once(&it, &sched, &s).unwrap();
            for t in 0..=horizon - n {
                let formula = iterated_policy_formula(n, t, &fam, &sched, &s).unwrap();
                assert!(it.policies[t].distance(&formula) < 1e-11, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn consistent_family_reproduces_its_policy() {
        let horizon = 3;
        let s = spec(horizon);
        let sched = schedule(horizon);
        let fam = InitialPolicyFamily::consistent(vec![1.0; 3], vec![0.3; 3], vec![1.2; 3], &sched, &s).unwrap();
        let j = IteratedPolicy::initial(&fam, &sched, &s).unwrap();
        for t in 0..=horizon {
            let k = horizon - t;
            let q = &j.objectives[t].m;
            assert!((q[X][X] - 1.0 / fam.h2[k]).abs() < 1e-12);
            assert!((q[X][L] - q[X][W] * fam.f1[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn filtered_iteration_reduces_to_regime_one() {
        let r1 = MomentSet::from_mean_var(1.01, 0.0004, 1.05, 0.02, 1.02, 0.01);
        let r2 = MomentSet::from_mean_var(1.0, 0.001, 0.98, 0.05, 1.0, 0.02);
        let m = crate::filter::filtered_moments(1.0, &r1, &r2).unwrap();
        assert_eq!(m, r1);
    }

    #[test]
    fn invalid_family_rejected() {
        let mut fam = InitialPolicyFamily::random(3, &mut stream(2, 0));
        fam.g2[1] = 0.0;
        assert!(fam.validate().is_err());
    }
}
