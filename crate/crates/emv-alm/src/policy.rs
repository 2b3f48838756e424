//! The shared Gaussian feedback-policy interface.

use serde::{Deserialize, Serialize};

/// What a policy is allowed to observe about the market state.
///
/// The simulator computes the signal; a policy declaring `Filter` or
/// `Expectation` never receives the hidden regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// The true regime `ε_t ∈ {1, 2}` (complete information).
    Regime,
    /// The filter `p̂_t`.
    Filter,
    /// `p̃_t = E[ε_t]`, literally substituted for `p̂_t`.
    Expectation,
    /// The unconditional probability `P(ε_t = 1)`, offered as an in-range
    /// alternative to `Expectation`.
    Unconditional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CoemvOpt,
    PoemvOpt,
    PoemvSub,
    Learned,
    Custom,
}

/// A feedback rule `(t, x, l, signal) ↦ N(mean, variance)`.
pub trait GaussianPolicy {
    fn signal_kind(&self) -> SignalKind;
    fn kind(&self) -> PolicyKind;
    /// Mean and variance of the action density.
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64);
}

/// Executes the mean of another policy (zero exploration noise).
pub struct MeanOnly<P>(pub P);

impl<P: GaussianPolicy + ?Sized> GaussianPolicy for &P {
    fn signal_kind(&self) -> SignalKind {
        (**self).signal_kind()
    }
    fn kind(&self) -> PolicyKind {
        (**self).kind()
    }
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64) {
        (**self).distribution(t, x, l, signal)
    }
}

impl<P: GaussianPolicy> GaussianPolicy for MeanOnly<P> {
    fn signal_kind(&self) -> SignalKind {
        self.0.signal_kind()
    }
    fn kind(&self) -> PolicyKind {
        self.0.kind()
    }
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64) {
        (self.0.distribution(t, x, l, signal).0, 0.0)
    }
}

/// A policy given by two closures.
pub struct FnPolicy<M, V> {
    pub signal: SignalKind,
    pub mean: M,
    pub var: V,
}

impl<M, V> GaussianPolicy for FnPolicy<M, V>
where
    M: Fn(usize, f64, f64, f64) -> f64,
    V: Fn(usize, f64) -> f64,
{
    fn signal_kind(&self) -> SignalKind {
        self.signal
    }
    fn kind(&self) -> PolicyKind {
        PolicyKind::Custom
    }
    fn distribution(&self, t: usize, x: f64, l: f64, signal: f64) -> (f64, f64) {
        ((self.mean)(t, x, l, signal), (self.var)(t, signal))
    }
}
