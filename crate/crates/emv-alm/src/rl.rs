//! Actor-critic learners with a martingale-loss critic, a score-function
//! actor and the self-correcting Lagrange multiplier.
//!
//! Every scalar coefficient is a polynomial in the signal `s` and the time
//! to go `τ`: `Σ c[i][j] s^i τ^j` over `0 ≤ i ≤ m`, `1 ≤ j ≤ m`. The critic is
//!
//! `J = θ1 x² + ϑ1 (w + θ2 l) x + ϑ2 (w + θ2 l)² + θ2 w l + θ3 l² + ψ`
//!
//! with `θk = exp(·)`, `ϑk = −exp(·)`, and the actor is
//! `N(φ1 x − (ϑ1/θ1) e^{φ2} (w + θ2 l), e^{φ3} / (2 θ1))`.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closed_form::ProblemSpec;
use crate::error::{invalid, numerical, Error, Result};
use crate::market::{Dynamics, Episode, MarketModel, Simulator};
use crate::policy::{GaussianPolicy, PolicyKind, SignalKind};
use crate::rng::{stream, Stream};

/// Largest exponent accepted before a coefficient is reported as overflowing.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `τ = (T − t) dt`, i.e. years to go.
    Years,
    /// `τ = T − t` in periods.
    Periods,
}

/// Coefficients of one polynomial, row-major over `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m: usize,
    pub c: Vec<f64>,
}

impl Grid {
    pub fn zeros(m: usize) -> Self {
        Grid { m, c: vec![0.0; (m + 1) * m] }
    }

    pub fn dot(&self, basis: &[f64]) -> f64 {
        self.c.iter().zip(basis).map(|(a, b)| a * b).sum()
    }

    fn axpy(&mut self, k: f64, g: &[f64]) {
        for (c, v) in self.c.iter_mut().zip(g) {
            *c += k * v;
        }
    }

    fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
}

/// `s^i τ^j` for `0 ≤ i ≤ m`, `1 ≤ j ≤ m`, in grid order.
pub fn basis(m: usize, signal: f64, tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity((m + 1) * m);
    let mut si = 1.0;
    for _ in 0..=m {
        let mut tj = 1.0;
        for _ in 1..=m {
            tj *= tau;
            out.push(si * tj);
        }
        si *= signal;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub m: usize,
    pub theta: [Grid; 3],
    pub vartheta: [Grid; 2],
    pub psi: Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorParams {
    pub m: usize,
    pub phi: [Grid; 3],
}

impl CriticParams {
    pub fn zeros(m: usize) -> Self {
        CriticParams {
            m,
            theta: [Grid::zeros(m), Grid::zeros(m), Grid::zeros(m)],
            vartheta: [Grid::zeros(m), Grid::zeros(m)],
            psi: Grid::zeros(m),
        }
    }

    /// Coefficients at one `(signal, τ)` point.
    pub fn eval(&self, basis: &[f64]) -> Result<CriticPoint> {
        let names = ["theta1", "theta2", "theta3"];
        let mut th = [0.0; 3];
        for k in 0..3 {
            th[k] = checked_exp(self.theta[k].dot(basis), names[k])?;
        }
        let v1 = -checked_exp(self.vartheta[0].dot(basis), "vartheta1")?;
        let v2 = -checked_exp(self.vartheta[1].dot(basis), "vartheta2")?;
        Ok(CriticPoint { theta: th, vartheta: [v1, v2], psi: self.psi.dot(basis) })
    }

    fn grids(&self) -> [(&'static str, &Grid); 6] {
        [
            ("theta1", &self.theta[0]),
            ("theta2", &self.theta[1]),
            ("theta3", &self.theta[2]),
            ("vartheta1", &self.vartheta[0]),
            ("vartheta2", &self.vartheta[1]),
            ("psi", &self.psi),
        ]
    }
}

impl ActorParams {
    pub fn zeros(m: usize) -> Self {
        ActorParams { m, phi: [Grid::zeros(m), Grid::zeros(m), Grid::zeros(m)] }
    }

    pub fn eval(&self, basis: &[f64]) -> [f64; 3] {
        [self.phi[0].dot(basis), self.phi[1].dot(basis), self.phi[2].dot(basis)]
    }
}

fn checked_exp(v: f64, name: &str) -> Result<f64> {
    if !(v < MAX_EXPONENT) {
        return numerical(format!("exponent {v} of {name} overflows"));
    }
    Ok(v.exp())
}

/// Derived critic coefficients at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticPoint {
    pub theta: [f64; 3],
    pub vartheta: [f64; 2],
    pub psi: f64,
}

impl CriticPoint {
    pub fn value(&self, x: f64, l: f64, w: f64) -> f64 {
        let [t1, t2, t3] = self.theta;
        let [v1, v2] = self.vartheta;
        let wl = w + t2 * l;
        t1 * x * x + v1 * wl * x + v2 * wl * wl + t2 * w * l + t3 * l * l + self.psi
    }

    /// Factors multiplying the basis in `∂J/∂grid` for the six grids
    /// `θ1, θ2, θ3, ϑ1, ϑ2, ψ`.
    pub fn partial_factors(&self, x: f64, l: f64, w: f64) -> [f64; 6] {
        let [t1, t2, t3] = self.theta;
        let [v1, v2] = self.vartheta;
        let wl = w + t2 * l;
        [
            x * x * t1,
            (v1 * l * x + 2.0 * wl * v2 * l + w * l) * t2,
            l * l * t3,
            wl * x * v1,
            wl * wl * v2,
            1.0,
        ]
    }

    /// Actor mean and variance given actor coefficients `φ`.
    pub fn action(&self, phi: &[f64; 3], x: f64, l: f64, w: f64) -> (f64, f64) {
        let [t1, t2, _] = self.theta;
        let mean = phi[0] * x - self.vartheta[0] / t1 * phi[1].exp() * (w + t2 * l);
        (mean, phi[2].exp() / (2.0 * t1))
    }

    /// Factors of `∂ ln π(u)/∂φk` multiplying the basis.
    pub fn score_factors(&self, phi: &[f64; 3], u: f64, x: f64, l: f64, w: f64) -> [f64; 3] {
        let [t1, t2, _] = self.theta;
        let (mean, _) = self.action(phi, x, l, w);
        let r = u - mean;
        let k = t1 * (-phi[2]).exp();
        let drift = self.vartheta[0] / t1 * phi[1].exp() * (w + t2 * l);
        [2.0 * k * r * x, -2.0 * k * r * drift, k * r * r - 0.5]
    }
}

/// `H = −½ ln(θ1/π) + ½(φ3 + 1)`.
pub fn policy_entropy(theta1: f64, phi3: f64) -> f64 {
    -0.5 * (theta1 / PI).ln() + 0.5 * (phi3 + 1.0)
}

/// `ln N(u | mean, var)`.
pub fn log_density(u: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (u - mean) * (u - mean) / (2.0 * var)
}

/// Terminal objective `(x − l − w)² − (w − d)²`.
pub fn terminal_value(x: f64, l: f64, w: f64, d: f64) -> f64 {
    (x - l - w).powi(2) - (w - d).powi(2)
}

/// Shape of the time feature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clock {
    pub horizon: usize,
    pub tau_scale: f64,
}

impl Clock {
    pub fn new(horizon: usize, dt: f64, unit: TimeUnit) -> Self {
        let tau_scale = match unit {
            TimeUnit::Years => dt,
            TimeUnit::Periods => 1.0,
        };
        Clock { horizon, tau_scale }
    }

    pub fn tau(&self, t: usize) -> f64 {
        (self.horizon - t) as f64 * self.tau_scale
    }
}

/// Sample `u ~ π_φ` at one state.
#[allow(clippy::too_many_arguments)]
pub fn actor_sample(
    t: usize,
    x: f64,
    l: f64,
    signal: f64,
    critic: &CriticParams,
    actor: &ActorParams,
    w: f64,
    clock: &Clock,
    rng: &mut crate::rng::Stream,
) -> Result<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let b = basis(critic.m, signal, clock.tau(t));
    let (mean, var) = critic.eval(&b)?.action(&actor.eval(&b), x, l, w);
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + var.sqrt() * z)
}

/// `J_t^{(θ,ϑ,ψ)}(x, l, signal; w)`.
pub fn critic_value(t: usize, x: f64, l: f64, signal: f64, critic: &CriticParams, w: f64, clock: &Clock) -> Result<f64> {
    if t > clock.horizon {
        return invalid(format!("t={t} beyond horizon {}", clock.horizon));
    }
    Ok(critic.eval(&basis(critic.m, signal, clock.tau(t)))?.value(x, l, w))
}

/// Learner settings; defaults are the simulation-study values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub eta_theta: f64,
    pub eta_vartheta: f64,
    pub eta_psi: f64,
    pub eta_phi: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Window of terminal surpluses averaged in each multiplier update.
    #[serde(rename = "N")]
    pub n_window: usize,
    pub n_iter: usize,
    pub dt: f64,
    pub seed: u64,
    pub m: usize,
    /// Per-entry gradient clip; `None` disables it.
    pub clip: Option<f64>,
    pub time_unit: TimeUnit,
    /// Episodes averaged per gradient step.
    pub batch: usize,
    /// Initial multiplier; `None` starts from `d`.
    pub w0: Option<f64>,
    /// Signal of the no-regime-learning learner: the literal expectation
    /// `p̃ ∈ [1, 2]` or the unconditional probability of regime 1.
    pub poemv2_signal: SignalKind,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta_theta: 1e-12,
            eta_vartheta: 1e-12,
            eta_psi: 1e-9,
            eta_phi: 1e-9,
            alpha: 1e-2,
            lambda: 2.0,
            n_window: 10,
            n_iter: 10_000,
            dt: 1.0 / 252.0,
            seed: 0,
            m: 2,
            clip: Some(1e6),
            time_unit: TimeUnit::Years,
            batch: 1,
            w0: None,
            poemv2_signal: SignalKind::Expectation,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.eta_theta, self.eta_vartheta, self.eta_psi, self.eta_phi, self.alpha];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return invalid("learning rates must be positive");
        }
        if !(self.lambda >= 0.0) {
            return invalid("lambda must be nonnegative");
        }
        if self.n_window < 1 || self.batch < 1 || self.m < 1 {
            return invalid("N, batch and m must be at least 1");
        }
        if !(self.dt > 0.0) {
            return invalid("dt must be positive");
        }
        if !matches!(self.poemv2_signal, SignalKind::Expectation | SignalKind::Unconditional) {
            return invalid("poemv2_signal must be expectation or unconditional");
        }
        Ok(())
    }
}

/// Per-step quantities of one episode under given parameters.
struct Pass {
    bases: Vec<Vec<f64>>,
    points: Vec<CriticPoint>,
    phis: Vec<[f64; 3]>,
    values: Vec<f64>,
    entropies: Vec<f64>,
}

fn pass(episode: &Episode, critic: &CriticParams, actor: &ActorParams, w: f64, d: f64, clock: &Clock) -> Result<Pass> {
    let horizon = episode.horizon();
    if horizon != clock.horizon {
        return invalid(format!("episode has {horizon} periods, expected {}", clock.horizon));
    }
    let mut p = Pass {
        bases: Vec::with_capacity(horizon),
        points: Vec::with_capacity(horizon),
        phis: Vec::with_capacity(horizon),
        values: Vec::with_capacity(horizon + 1),
        entropies: Vec::with_capacity(horizon),
    };
    for s in &episode.steps[..horizon] {
        let b = basis(critic.m, s.signal, clock.tau(s.t));
        let c = critic.eval(&b).map_err(|e| Error::Numerical(format!("t={}: {e}", s.t)))?;
        let phi = actor.eval(&b);
        p.values.push(c.value(s.x, s.l, w));
        p.entropies.push(policy_entropy(c.theta[0], phi[2]));
        p.bases.push(b);
        p.points.push(c);
        p.phis.push(phi);
    }
    let last = episode.terminal();
    p.values.push(terminal_value(last.x, last.l, w, d));
    Ok(p)
}

/// `R_t = J_T − J_t − λ Σ_{k≥t} H_k dt`.
fn residuals(values: &[f64], entropies: &[f64], lambda: f64, dt: f64) -> Vec<f64> {
    let horizon = entropies.len();
    let jt = values[horizon];
    let mut out = vec![0.0; horizon];
    let mut tail = 0.0;
    for t in (0..horizon).rev() {
        tail += entropies[t];
        out[t] = jt - values[t] - lambda * tail * dt;
    }
    out
}

/// Single-episode martingale loss `½ Σ_t R_t² dt`.
pub fn martingale_loss(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<f64> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let p = pass(episode, critic, actor, w, spec.d, &clock)?;
    Ok(loss_from(&p.values, &p.entropies, hyper.lambda, hyper.dt))
}

/// The loss with the entropies supplied instead of derived from the critic.
pub fn martingale_loss_fixed_entropy(
    episode: &Episode,
    critic: &CriticParams,
    entropies: &[f64],
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<f64> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let actor = ActorParams::zeros(critic.m);
    let p = pass(episode, critic, &actor, w, spec.d, &clock)?;
    Ok(loss_from(&p.values, entropies, hyper.lambda, hyper.dt))
}

fn loss_from(values: &[f64], entropies: &[f64], lambda: f64, dt: f64) -> f64 {
    residuals(values, entropies, lambda, dt).iter().map(|r| 0.5 * r * r * dt).sum()
}

/// Entropies `H(π_t)` along an episode.
pub fn episode_entropies(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    Ok(pass(episode, critic, actor, 0.0, spec.d, &clock)?.entropies)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticGrads {
    pub theta: [Vec<f64>; 3],
    pub vartheta: [Vec<f64>; 2],
    pub psi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorGrads {
    pub phi: [Vec<f64>; 3],
}

impl CriticGrads {
    fn zeros(k: usize) -> Self {
        CriticGrads { theta: [vec![0.0; k], vec![0.0; k], vec![0.0; k]], vartheta: [vec![0.0; k], vec![0.0; k]], psi: vec![0.0; k] }
    }

    fn slots(&mut self) -> [&mut Vec<f64>; 6] {
        let [a, b, c] = &mut self.theta;
        let [d, e] = &mut self.vartheta;
        [a, b, c, d, e, &mut self.psi]
    }

    /// Gradients in the order `θ1, θ2, θ3, ϑ1, ϑ2, ψ`.
    pub fn grids(&self) -> [&[f64]; 6] {
        [&self.theta[0], &self.theta[1], &self.theta[2], &self.vartheta[0], &self.vartheta[1], &self.psi]
    }
}

impl ActorGrads {
    fn zeros(k: usize) -> Self {
        ActorGrads { phi: [vec![0.0; k], vec![0.0; k], vec![0.0; k]] }
    }
}

fn critic_grads_from(p: &Pass, episode: &Episode, w: f64, lambda: f64, dt: f64) -> CriticGrads {
    let k = p.bases.first().map_or(0, |b| b.len());
    let mut g = CriticGrads::zeros(k);
    let res = residuals(&p.values, &p.entropies, lambda, dt);
    for (t, s) in episode.steps[..p.points.len()].iter().enumerate() {
        let f = p.points[t].partial_factors(s.x, s.l, w);
        let scale = -res[t] * dt;
        for (slot, fk) in g.slots().into_iter().zip(f) {
            for (gi, bi) in slot.iter_mut().zip(&p.bases[t]) {
                *gi += scale * fk * bi;
            }
        }
    }
    g
}

fn actor_grads_from(p: &Pass, episode: &Episode, w: f64, lambda: f64, dt: f64) -> Result<ActorGrads> {
    let k = p.bases.first().map_or(0, |b| b.len());
    let mut g = ActorGrads::zeros(k);
    for (t, s) in episode.steps[..p.points.len()].iter().enumerate() {
        let u = s.action.ok_or_else(|| Error::Invalid(format!("missing action at t={t}")))?;
        let td = p.values[t + 1] - p.values[t] - lambda * p.entropies[t] * dt;
        let sc = p.points[t].score_factors(&p.phis[t], u, s.x, s.l, w);
        let dh = [0.0, 0.0, 0.5];
        for j in 0..3 {
            let f = sc[j] * td - lambda * dh[j] * dt;
            for (gi, bi) in g.phi[j].iter_mut().zip(&p.bases[t]) {
                *gi += f * bi;
            }
        }
    }
    Ok(g)
}

/// Gradients of the martingale loss with the entropy terms held fixed.
pub fn ml_gradients(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<CriticGrads> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let p = pass(episode, critic, actor, w, spec.d, &clock)?;
    Ok(critic_grads_from(&p, episode, w, hyper.lambda, hyper.dt))
}

/// `G(φ)`: score times one-step temporal difference minus the entropy gradient.
/// The difference at `t = T − 1` uses the terminal objective.
pub fn policy_gradient(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<ActorGrads> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let p = pass(episode, critic, actor, w, spec.d, &clock)?;
    actor_grads_from(&p, episode, w, hyper.lambda, hyper.dt)
}

/// `Σ_t ln π_φ(u_t) TD_t − λ Σ_t H_t dt` with the temporal differences
/// `TD` frozen; its gradient in `φ` is [`policy_gradient`].
pub fn policy_surrogate(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    frozen_td: &[f64],
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<f64> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let p = pass(episode, critic, actor, w, spec.d, &clock)?;
    let mut s = 0.0;
    for (t, st) in episode.steps[..p.points.len()].iter().enumerate() {
        let (mean, var) = p.points[t].action(&p.phis[t], st.x, st.l, w);
        let u = st.action.unwrap_or(mean);
        s += log_density(u, mean, var) * frozen_td[t] - hyper.lambda * p.entropies[t] * hyper.dt;
    }
    Ok(s)
}

/// Temporal differences `J_{t+1} − J_t − λ H_t dt` along an episode.
pub fn temporal_differences(
    episode: &Episode,
    critic: &CriticParams,
    actor: &ActorParams,
    w: f64,
    spec: &ProblemSpec,
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    let clock = Clock::new(spec.horizon, hyper.dt, hyper.time_unit);
    let p = pass(episode, critic, actor, w, spec.d, &clock)?;
    Ok((0..p.points.len()).map(|t| p.values[t + 1] - p.values[t] - hyper.lambda * p.entropies[t] * hyper.dt).collect())
}

/// `w − α (mean(window) − d)`.
pub fn update_lagrange(w: f64, recent_terminals: &[f64], d: f64, alpha: f64) -> Result<f64> {
    if recent_terminals.is_empty() {
        return invalid("terminal window is empty");
    }
    let mean = recent_terminals.iter().sum::<f64>() / recent_terminals.len() as f64;
    Ok(w - alpha * (mean - d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Coemv,
    Poemv1,
    Poemv2,
}

impl Algo {
    /// The signal with the no-regime-learning variant resolved from `hyper`.
    pub fn signal_with(self, hyper: &Hyperparams) -> SignalKind {
        match self {
            Algo::Poemv2 => hyper.poemv2_signal,
            _ => self.signal_kind(),
        }
    }

    pub fn train_dynamics_with(self, hyper: &Hyperparams) -> Dynamics {
        match self {
            Algo::Coemv => Dynamics::Market,
            _ => Dynamics::Filtered(self.signal_with(hyper)),
        }
    }

    pub fn signal_kind(self) -> SignalKind {
        match self {
            Algo::Coemv => SignalKind::Regime,
            Algo::Poemv1 => SignalKind::Filter,
            Algo::Poemv2 => SignalKind::Expectation,
        }
    }

    /// Environment the learner interacts with during training. The
    /// partial-information learners see the filtered model built on their
    /// own signal.
    pub fn train_dynamics(self) -> Dynamics {
        match self {
            Algo::Coemv => Dynamics::Market,
            Algo::Poemv1 => Dynamics::Filtered(SignalKind::Filter),
            Algo::Poemv2 => Dynamics::Filtered(SignalKind::Expectation),
        }
    }

    /// Environment used for out-of-sample evaluation.
    pub fn eval_dynamics(self) -> Dynamics {
        match self {
            Algo::Coemv => Dynamics::Market,
            Algo::Poemv1 | Algo::Poemv2 => Dynamics::Filtered(SignalKind::Filter),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algo::Coemv => "CoEMV",
            Algo::Poemv1 => "PoEMV-1",
            Algo::Poemv2 => "PoEMV-2",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "coemv" => Ok(Algo::Coemv),
            "poemv1" => Ok(Algo::Poemv1),
            "poemv2" => Ok(Algo::Poemv2),
            _ => invalid(format!("unknown algorithm {s:?}")),
        }
    }
}

/// A trained (or training) actor together with the critic it reads `θ`, `ϑ` from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedPolicy {
    pub signal: SignalKind,
    pub critic: CriticParams,
    pub actor: ActorParams,
    pub w: f64,
    pub horizon: usize,
    pub tau_scale: f64,
}

impl LearnedPolicy {
    fn clock(&self) -> Clock {
        Clock { horizon: self.horizon, tau_scale: self.tau_scale }
    }
}

impl GaussianPolicy for LearnedPolicy {
    fn signal_kind(&self) -> SignalKind {
        self.signal
    }
    fn kind(&self) -> PolicyKind {
        PolicyKind::Learned
    }
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64) {
        let b = basis(self.critic.m, signal, self.clock().tau(t));
        match self.critic.eval(&b) {
            Ok(c) => c.action(&self.actor.eval(&b), x, l, self.w),
            Err(_) => (f64::NAN, f64::NAN),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub terminal_surplus: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub algo: Algo,
    pub dynamics: Dynamics,
    pub critic: CriticParams,
    pub actor: ActorParams,
    pub w: f64,
    /// Completed iterations.
    pub iteration: usize,
    pub history: Vec<HistoryRecord>,
    pub recent_terminals: VecDeque<f64>,
    pub hyper: Hyperparams,
    pub spec: ProblemSpec,
}

impl TrainState {
    pub fn new(algo: Algo, dynamics: Dynamics, hyper: Hyperparams, spec: ProblemSpec) -> Result<Self> {
        hyper.validate()?;
        spec.validate()?;
        Ok(TrainState {
            algo,
            dynamics,
            critic: CriticParams::zeros(hyper.m),
            actor: ActorParams::zeros(hyper.m),
            w: hyper.w0.unwrap_or(spec.d),
            iteration: 0,
            history: Vec::new(),
            recent_terminals: VecDeque::with_capacity(hyper.n_window),
            hyper,
            spec,
        })
    }

    pub fn policy(&self) -> LearnedPolicy {
        let clock = Clock::new(self.spec.horizon, self.hyper.dt, self.hyper.time_unit);
        LearnedPolicy {
            signal: self.algo.signal_with(&self.hyper),
            critic: self.critic.clone(),
            actor: self.actor.clone(),
            w: self.w,
            horizon: self.spec.horizon,
            tau_scale: clock.tau_scale,
        }
    }

    /// Run iterations until `target` are complete.
    pub fn train_until(&mut self, model: &MarketModel, target: usize) -> Result<()> {
        let sim = Simulator::new(model, self.dynamics, self.spec.horizon)?;
        let (x0, l0) = (self.spec.x0, self.spec.l0);
        while self.iteration < target {
            self.step_with(|policy, rng| sim.run(policy, x0, l0, rng))?;
        }
        Ok(())
    }

    /// One iteration on episodes produced by `run`, which receives the
    /// current policy and the iteration's stream.
    pub fn step_with(&mut self, mut run: impl FnMut(&LearnedPolicy, &mut Stream) -> Result<Episode>) -> Result<()> {
        let clock = &Clock::new(self.spec.horizon, self.hyper.dt, self.hyper.time_unit);
        let k = self.iteration;
        let h = self.hyper.clone();
        let (lambda, dt, d) = (h.lambda, h.dt, self.spec.d);
        let policy = self.policy();
        let mut episodes = Vec::with_capacity(h.batch);
        for b in 0..h.batch {
            let mut rng = stream(h.seed, (k * h.batch + b) as u64);
            let ep = run(&policy, &mut rng).map_err(|e| Error::Numerical(format!("iteration {k}: {e}")))?;
            episodes.push(ep);
        }
        let scale = 1.0 / h.batch as f64;

        // Critic first, then the actor against the updated critic.
        let kdim = (h.m + 1) * h.m;
        let mut cg = CriticGrads::zeros(kdim);
        for ep in &episodes {
            let p = pass(ep, &self.critic, &self.actor, self.w, d, clock).map_err(|e| Error::Numerical(format!("iteration {k}: {e}")))?;
            let g = critic_grads_from(&p, ep, self.w, lambda, dt);
            add_critic(&mut cg, &g, scale);
        }
        let rates = [h.eta_theta, h.eta_theta, h.eta_theta, h.eta_vartheta, h.eta_vartheta, h.eta_psi];
        for ((slot, rate), grid) in cg.slots().into_iter().zip(rates).zip(critic_grids_mut(&mut self.critic)) {
            clip(slot, h.clip);
            grid.axpy(-rate, slot);
        }
        let mut ag = ActorGrads::zeros(kdim);
        for ep in &episodes {
            let p = pass(ep, &self.critic, &self.actor, self.w, d, clock).map_err(|e| Error::Numerical(format!("iteration {k}: {e}")))?;
            let g = actor_grads_from(&p, ep, self.w, lambda, dt)?;
            for j in 0..3 {
                for (a, b) in ag.phi[j].iter_mut().zip(&g.phi[j]) {
                    *a += scale * b;
                }
            }
        }
        for j in 0..3 {
            clip(&mut ag.phi[j], h.clip);
            self.actor.phi[j].axpy(-h.eta_phi, &ag.phi[j]);
        }
        self.check_finite(k)?;

        for ep in &episodes {
            let s = ep.terminal_surplus();
            if self.recent_terminals.len() == h.n_window {
                self.recent_terminals.pop_front();
            }
            self.recent_terminals.push_back(s);
        }
        self.iteration += 1;
        if self.iteration.is_multiple_of(h.n_window) {
            let window: Vec<f64> = self.recent_terminals.iter().copied().collect();
            self.w = update_lagrange(self.w, &window, d, h.alpha)?;
        }
        let s = episodes.iter().map(|e| e.terminal_surplus()).sum::<f64>() * scale;
        self.history.push(HistoryRecord { iter: self.iteration, terminal_surplus: s, w: self.w });
        Ok(())
    }

    fn check_finite(&self, k: usize) -> Result<()> {
        for (name, g) in self.critic.grids() {
            if !g.is_finite() {
                return numerical(format!("iteration {k}: parameter {name} is not finite"));
            }
        }
        for (j, g) in self.actor.phi.iter().enumerate() {
            if !g.is_finite() {
                return numerical(format!("iteration {k}: parameter phi{} is not finite", j + 1));
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Mean of the terminal surplus over the last `n` iterations.
    pub fn trailing_mean(&self, n: usize) -> f64 {
        let tail = &self.history[self.history.len().saturating_sub(n)..];
        tail.iter().map(|r| r.terminal_surplus).sum::<f64>() / tail.len().max(1) as f64
    }

    /// History averaged over blocks of `every` iterations:
    /// `iter,avg_terminal_net_wealth,var_terminal_net_wealth,w`.
    pub fn write_history_csv<W: Write>(&self, out: W, every: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "avg_terminal_net_wealth", "var_terminal_net_wealth", "w"])?;
        for chunk in self.history.chunks(every.max(1)) {
            let n = chunk.len() as f64;
            let mean = chunk.iter().map(|r| r.terminal_surplus).sum::<f64>() / n;
            let var = if chunk.len() > 1 {
                chunk.iter().map(|r| (r.terminal_surplus - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let last = chunk.last().expect("chunk is nonempty");
            wtr.write_record([last.iter.to_string(), mean.to_string(), var.to_string(), last.w.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn add_critic(acc: &mut CriticGrads, g: &CriticGrads, scale: f64) {
    let mut g = g.clone();
    for (a, b) in acc.slots().into_iter().zip(g.slots()) {
        for (x, y) in a.iter_mut().zip(b.iter()) {
            *x += scale * y;
        }
    }
}

/// Grids in the order `θ1, θ2, θ3, ϑ1, ϑ2, ψ`.
pub fn critic_grids_mut(c: &mut CriticParams) -> [&mut Grid; 6] {
    let [a, b, cc] = &mut c.theta;
    let [d, e] = &mut c.vartheta;
    [a, b, cc, d, e, &mut c.psi]
}

fn clip(g: &mut [f64], limit: Option<f64>) {
    if let Some(c) = limit {
        for v in g {
            *v = v.clamp(-c, c);
        }
    }
}

/// Train `algo` in its default environment.
pub fn train(algo: Algo, model: &MarketModel, hyper: Hyperparams, spec: ProblemSpec) -> Result<TrainState> {
    train_in(algo, algo.train_dynamics_with(&hyper), model, hyper, spec)
}

/// Train `algo` in an explicit environment.
pub fn train_in(algo: Algo, dynamics: Dynamics, model: &MarketModel, hyper: Hyperparams, spec: ProblemSpec) -> Result<TrainState> {
    let n = hyper.n_iter;
    let mut state = TrainState::new(algo, dynamics, hyper, spec)?;
    state.train_until(model, n)?;
    Ok(state)
}

/// The simulation-study problem: ten years of daily steps, `d = 8`.
pub fn study_spec(model: &MarketModel) -> ProblemSpec {
    ProblemSpec { horizon: model.periods(10.0), d: 8.0, w: 8.0, lambda: 2.0, x0: 1.0, l0: 0.1 }
}
