//! Generalized Armijo (GA) nonmonotone backtracking.
//!
//! A trial step `tau = rho^h a` is accepted against the largest of the last
//! `m(k) + 1` accepted merit values, with slope coefficient
//! `gamma_k = min(delta, c1 forcing(gamma^k) + psi(||g||))` and an additive
//! slack `eps_k` that absorbs the inexactness of the merit function.

use std::collections::VecDeque;

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// Forcing functions: `t -> 0` whenever `forcing(t) -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    #[default]
    Identity,
    /// `min(t, t^2)`
    MinSquare,
    Square,
}

impl Forcing {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Forcing::Identity => t,
            Forcing::MinSquare => t.min(t * t),
            Forcing::Square => t * t,
        }
    }
}

/// Positive, nonincreasing maps into `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Psi {
    /// `scale / (1 + t)`
    Rational { scale: f64 },
    /// `scale * exp(-t)`
    Exponential { scale: f64 },
}

impl Default for Psi {
    fn default() -> Self {
        Psi::Rational { scale: 0.4 }
    }
}

impl Psi {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Psi::Rational { scale } => scale / (1.0 + t),
            Psi::Exponential { scale } => scale * (-t).exp(),
        }
    }

    fn scale(self) -> f64 {
        match self {
            Psi::Rational { scale } | Psi::Exponential { scale } => scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    /// Initial trial step.
    pub a: f64,
    pub delta: f64,
    pub rho: f64,
    pub c1: f64,
    /// Window cap `M`.
    pub window: usize,
    pub forcing: Forcing,
    pub psi: Psi,
    pub max_backtracks: u32,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            a: 1.0,
            delta: 0.45,
            rho: 0.5,
            c1: 0.1,
            window: 5,
            forcing: Forcing::Identity,
            psi: Psi::default(),
            max_backtracks: 60,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad("a must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return bad("c1 must be positive");
        }
        let s = self.psi.scale();
        if !(s > 0.0 && s < 1.0) {
            return bad("psi scale must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks must be at least 1");
        }
        if self.delta >= 0.5 {
            warn!(
                "delta = {} >= 1/2: unit steps are not guaranteed near the solution",
                self.delta
            );
        }
        Ok(())
    }
}

/// `(gamma^k, gamma_k)` for direction `d` at gradient estimate `g`.
pub fn gamma_terms(g: &DVector<f64>, d: &DVector<f64>, cfg: &GaConfig) -> Result<(f64, f64)> {
    let dn = d.norm();
    let slope = g.dot(d);
    if !(dn > 0.0) || !slope.is_finite() || slope >= 0.0 {
        return Err(SolverError::InvalidDirection { slope });
    }
    let gamma_sup = -slope / dn;
    let gamma_k = cfg
        .delta
        .min(cfg.c1 * cfg.forcing.eval(gamma_sup) + cfg.psi.eval(g.norm()));
    Ok((gamma_sup, gamma_k))
}

/// The last `m + 1` accepted merit values.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    values: VecDeque<f64>,
    m: usize,
}

impl WindowState {
    /// `m(0) = 0`, holding only the starting merit value.
    pub fn new(initial: f64) -> Self {
        WindowState {
            values: VecDeque::from([initial]),
            m: 0,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `m <- min(m + 1, cap)`, then keeps the newest `m + 1` values.
    pub fn update(&mut self, accepted: f64, cap: usize) {
        self.m = (self.m + 1).min(cap);
        self.values.push_back(accepted);
        while self.values.len() > self.m + 1 {
            self.values.pop_front();
        }
    }
}

/// `rho^h a`.
pub fn step_length(cfg: &GaConfig, h: u32) -> f64 {
    cfg.a * cfg.rho.powi(h as i32)
}

/// Right-hand side of the acceptance test.
pub fn acceptance_bound(reference: f64, gamma_k: f64, tau: f64, slope: f64, eps_k: f64) -> f64 {
    reference + gamma_k * tau * slope + eps_k
}

#[derive(Debug, Clone)]
pub struct GaStep<T> {
    pub tau: f64,
    pub h: u32,
    pub value: f64,
    /// Whatever the merit evaluation produced alongside the value.
    pub payload: T,
}

/// Backtracks from `a` until
/// `merit(tau) <= max(window) + gamma_k tau slope + eps_k`, where
/// `slope = g . d < 0`.
pub fn ga_search<T, F>(
    mut merit: F,
    slope: f64,
    window: &WindowState,
    gamma_k: f64,
    eps_k: f64,
    cfg: &GaConfig,
) -> Result<GaStep<T>>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    if !(slope < 0.0) {
        return Err(SolverError::InvalidDirection { slope });
    }
    let reference = window.max();
    let mut best = (f64::NAN, f64::INFINITY);
    for h in 0..=cfg.max_backtracks {
        let tau = step_length(cfg, h);
        let (value, payload) = merit(tau)?;
        if value < best.1 {
            best = (tau, value);
        }
        if value <= acceptance_bound(reference, gamma_k, tau, slope, eps_k) {
            return Ok(GaStep { tau, h, value, payload });
        }
    }
    Err(SolverError::LineSearchFailure {
        best_tau: best.0,
        best_value: best.1,
        backtracks: cfg.max_backtracks,
    })
}
