//! Runtime Lyapunov-certificate monitors.
//!
//! Both adaptive laws come with proved per-step upper bounds on the increment
//! of their Lyapunov functions. Since the bounds are theorems, a measured
//! violation (beyond floating-point slack) indicates an implementation bug;
//! the monitor records it, or fails fast when asked to. Monitors need the
//! true parameters and therefore only exist in simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::laws::{hot_alpha, LawKind};
use crate::plant::ParamEstimate;

/// Relative slack granted to the certificate inequality:
/// `dV <= bound + CERT_SLACK_TOL * (1 + V)`.
pub const CERT_SLACK_TOL: f64 = 1e-9;

/// Gradient-descent Lyapunov function `V = ||Theta_hat - Theta_star||_F^2`.
pub fn gd_lyapunov(theta: &ParamEstimate, theta_star: &ParamEstimate) -> f64 {
    (theta.matrix() - theta_star.matrix()).norm_squared()
}

/// High-order tuner Lyapunov function
/// `V = ||Xi_hat - Theta_star||_F^2 + ||Theta_hat - Xi_hat||_F^2`.
pub fn hot_lyapunov(
    theta: &ParamEstimate,
    xi: &DMatrix<f64>,
    theta_star: &ParamEstimate,
) -> f64 {
    (xi - theta_star.matrix()).norm_squared() + (theta.matrix() - xi).norm_squared()
}

/// Proved gradient-descent increment bound
/// `-gamma (2 - gamma) ||eps||^2 / N`.
pub fn gd_increment_bound(gamma: f64, eps: &DVector<f64>, n: f64) -> f64 {
    -gamma * (2.0 - gamma) * eps.norm_squared() / n
}

/// Proved high-order tuner increment bound
/// `-gamma alpha (1 - gamma beta)^2 (1 - alpha/(2 + alpha)) ||eps||^2 / N`,
/// failing when the gains fall outside the closed-form admissible set.
pub fn hot_increment_bound(gamma: f64, beta: f64, eps: &DVector<f64>, n: f64) -> Result<f64> {
    let alpha = hot_alpha(gamma, beta)?;
    if alpha <= 0.0 {
        return Err(Error::GainCondition(format!(
            "alpha = {alpha:.6} must be positive"
        )));
    }
    let shrink = 1.0 - alpha / (2.0 + alpha);
    Ok(-gamma * alpha * (1.0 - gamma * beta).powi(2) * shrink * eps.norm_squared() / n)
}

/// One monitored step: Lyapunov value before the update, its measured
/// increment, the proved bound and the slack `bound - dV` (expected <= 0 up
/// to floating-point tolerance... i.e. `dV <= bound`, slack nonnegative).
#[derive(Debug, Clone, Copy)]
pub struct CertificateRecord {
    pub v: f64,
    pub dv: f64,
    pub bound: f64,
    /// `bound - dv`; negative beyond tolerance means a breach.
    pub slack: f64,
    pub law_tag: LawKind,
    pub violated: bool,
}

/// Which proved bound the monitor applies.
#[derive(Debug, Clone, Copy)]
enum BoundKind {
    Gd { gamma: f64 },
    HotProposition { gamma: f64, beta: f64 },
    /// Extended-region gains: the certified increment is
    /// `-d(gamma, beta) ||eps||^2 / N` with the precomputed minimum `d`.
    HotExtended { d_min: f64 },
}

/// Per-trajectory certificate monitor. Owns the true parameters, tracks the
/// running Lyapunov value and checks every increment against the proved
/// bound.
#[derive(Debug, Clone)]
pub struct CertMonitor {
    theta_star: ParamEstimate,
    kind: LawKind,
    bound: BoundKind,
    fail_fast: bool,
    prev_v: f64,
    violations: Vec<usize>,
}

impl CertMonitor {
    pub fn new_gd(theta_star: ParamEstimate, gamma: f64, fail_fast: bool) -> Self {
        CertMonitor {
            theta_star,
            kind: LawKind::Gd,
            bound: BoundKind::Gd { gamma },
            fail_fast,
            prev_v: 0.0,
            violations: Vec::new(),
        }
    }

    pub fn new_hot(theta_star: ParamEstimate, gamma: f64, beta: f64, fail_fast: bool) -> Self {
        CertMonitor {
            theta_star,
            kind: LawKind::Hot,
            bound: BoundKind::HotProposition { gamma, beta },
            fail_fast,
            prev_v: 0.0,
            violations: Vec::new(),
        }
    }

    /// Monitor for extended-region gains, checking against the gain-region
    /// bound `-d_min ||eps||^2 / N`. `d_min` must be the minimized
    /// `d(gamma, beta)` for the gains in use.
    pub fn new_hot_extended(
        theta_star: ParamEstimate,
        d_min: f64,
        fail_fast: bool,
    ) -> Self {
        CertMonitor {
            theta_star,
            kind: LawKind::Hot,
            bound: BoundKind::HotExtended { d_min },
            fail_fast,
            prev_v: 0.0,
            violations: Vec::new(),
        }
    }

    pub fn theta_star(&self) -> &ParamEstimate {
        &self.theta_star
    }

    fn value(&self, theta: &ParamEstimate, xi: Option<&DMatrix<f64>>) -> f64 {
        match self.kind {
            LawKind::Gd => gd_lyapunov(theta, &self.theta_star),
            LawKind::Hot => hot_lyapunov(
                theta,
                xi.expect("high-order tuner monitor needs the auxiliary estimate"),
                &self.theta_star,
            ),
        }
    }

    /// Initializes the running value from the pre-run estimates.
    pub fn begin(&mut self, theta0: &ParamEstimate, xi0: Option<&DMatrix<f64>>) {
        self.prev_v = self.value(theta0, xi0);
        self.violations.clear();
    }

    /// Checks one completed update. `theta_next`/`xi_next` are the estimates
    /// after the law ran on `(phi, eps)` with normalizer `n`.
    pub fn step(
        &mut self,
        step: usize,
        theta_next: &ParamEstimate,
        xi_next: Option<&DMatrix<f64>>,
        eps: &DVector<f64>,
        n: f64,
    ) -> Result<CertificateRecord> {
        let v = self.prev_v;
        let v_next = self.value(theta_next, xi_next);
        let dv = v_next - v;
        let bound = match self.bound {
            BoundKind::Gd { gamma } => gd_increment_bound(gamma, eps, n),
            BoundKind::HotProposition { gamma, beta } => {
                hot_increment_bound(gamma, beta, eps, n)?
            }
            BoundKind::HotExtended { d_min } => -d_min * eps.norm_squared() / n,
        };
        let violated = dv > bound + CERT_SLACK_TOL * (1.0 + v);
        if violated {
            self.violations.push(step);
            if self.fail_fast {
                return Err(Error::CertificateBreach { step, dv, bound });
            }
        }
        self.prev_v = v_next;
        Ok(CertificateRecord {
            v,
            dv,
            bound,
            slack: bound - dv,
            law_tag: self.kind,
            violated,
        })
    }

    /// Steps at which the certificate was breached.
    pub fn violations(&self) -> &[usize] {
        &self.violations
    }
}
