//! The two adaptive laws pluggable into the closed-loop update slot:
//! normalized gradient descent and the projected high-order tuner, plus the
//! constant-regressor Nesterov recursion used as an equivalence oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::error_model::{a_posteriori_gradient, normalized_gradient, normalizer};
use crate::gain_region;
use crate::plant::ParamEstimate;

/// Which admissibility conditions a high-order tuner instance must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Closed-form conditions: `mu > 0`, `0 < beta < 2`,
    /// `0 < gamma < sqrt((2-beta)/beta)`, `alpha > 0`.
    Proposition,
    /// The larger region certified by `c(gamma, beta) > 0` and
    /// `d(gamma, beta) > 0` from the gain-region scan, with
    /// `gamma * beta < 1` additionally required.
    ExtendedRegion,
}

/// Law discriminator carried by records and monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Gd,
    Hot,
}

impl LawKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LawKind::Gd => "gd",
            LawKind::Hot => "hot",
        }
    }
}

/// Gain set to validate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSpec {
    Gd { gamma: f64, mu: f64 },
    Hot { gamma: f64, beta: f64, mu: f64, mode: GainMode },
}

/// Outcome of a gain-admissibility check. Violations are data, not errors:
/// callers decide whether to refuse to run.
#[derive(Debug, Clone, PartialEq)]
pub enum GainCheck {
    /// Conditions hold; for the high-order tuner in proposition mode the
    /// stability margin `alpha` is reported.
    Ok { alpha: Option<f64> },
    /// First violated condition, by name.
    Violation { condition: &'static str },
}

impl GainCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, GainCheck::Ok { .. })
    }

    fn violation(condition: &'static str) -> Self {
        GainCheck::Violation { condition }
    }
}

/// Stability margin `alpha = 2(1-gamma) - gamma(2-3beta)^2 /
/// (beta(2 - (1+gamma^2)beta))` of the high-order tuner.
///
/// Fails when the denominator is not positive, i.e. when
/// `gamma >= sqrt((2-beta)/beta)` or `beta` is out of range.
pub fn hot_alpha(gamma: f64, beta: f64) -> Result<f64> {
    let denom = beta * (2.0 - (1.0 + gamma * gamma) * beta);
    if denom <= 0.0 {
        return Err(Error::GainCondition(format!(
            "beta(2 - (1 + gamma^2) beta) = {denom:.6} must be positive"
        )));
    }
    let num = gamma * (2.0 - 3.0 * beta).powi(2);
    Ok(2.0 * (1.0 - gamma) - num / denom)
}

/// Checks the mode-appropriate admissibility conditions, reporting the first
/// violation by name.
pub fn validate_gains(spec: &GainSpec) -> GainCheck {
    match *spec {
        GainSpec::Gd { gamma, mu } => {
            if !(mu > 0.0) {
                return GainCheck::violation("mu > 0");
            }
            if !(gamma > 0.0 && gamma < 2.0) {
                return GainCheck::violation("0 < gamma < 2");
            }
            GainCheck::Ok { alpha: None }
        }
        GainSpec::Hot { gamma, beta, mu, mode } => {
            if !(mu > 0.0) {
                return GainCheck::violation("mu > 0");
            }
            if !(beta > 0.0 && beta < 2.0) {
                return GainCheck::violation("0 < beta < 2");
            }
            if !(gamma > 0.0) {
                return GainCheck::violation("gamma > 0");
            }
            match mode {
                GainMode::Proposition => {
                    if gamma >= ((2.0 - beta) / beta).sqrt() {
                        return GainCheck::violation("gamma < sqrt((2 - beta)/beta)");
                    }
                    match hot_alpha(gamma, beta) {
                        Ok(alpha) if alpha > 0.0 => GainCheck::Ok { alpha: Some(alpha) },
                        _ => GainCheck::violation("alpha > 0"),
                    }
                }
                GainMode::ExtendedRegion => {
                    if gamma * beta >= 1.0 {
                        return GainCheck::violation("gamma * beta < 1");
                    }
                    let point = gain_region::check_point(
                        gamma,
                        beta,
                        gain_region::DEFAULT_LAMBDA_RESOLUTION,
                    );
                    if !(point.c_min > 0.0) {
                        return GainCheck::violation("c_min(gamma, beta) > 0");
                    }
                    if !(point.d_min > 0.0) {
                        return GainCheck::violation("d_min(gamma, beta) > 0");
                    }
                    GainCheck::Ok { alpha: hot_alpha(gamma, beta).ok().filter(|a| *a > 0.0) }
                }
            }
        }
    }
}

/// A law that maps `(Theta_hat_k, phi_k, eps_{k+1})` to `Theta_hat_{k+1}`,
/// possibly carrying internal state across steps.
pub trait AdaptiveLaw {
    fn update(
        &mut self,
        theta: &ParamEstimate,
        phi: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> Result<ParamEstimate>;

    fn kind(&self) -> LawKind;

    /// Normalizer floor used by the law.
    fn mu(&self) -> f64;

    /// Auxiliary estimate, for laws that carry one.
    fn auxiliary(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

/// Normalized gradient descent `Theta' = Theta - (gamma/N) eps phi'`.
#[derive(Debug, Clone, Copy)]
pub struct GdLaw {
    gamma: f64,
    mu: f64,
}

impl GdLaw {
    pub fn new(gamma: f64, mu: f64) -> Result<Self> {
        match validate_gains(&GainSpec::Gd { gamma, mu }) {
            GainCheck::Ok { .. } => Ok(GdLaw { gamma, mu }),
            GainCheck::Violation { condition } => {
                Err(Error::GainCondition(condition.to_string()))
            }
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// One gradient-descent update.
pub fn gd_update(
    law: &GdLaw,
    theta: &ParamEstimate,
    phi: &DVector<f64>,
    eps: &DVector<f64>,
) -> Result<ParamEstimate> {
    check_update_dims(theta, phi, eps)?;
    let n_k = normalizer(phi, law.mu)?;
    let grad = normalized_gradient(eps, phi, n_k)?;
    ParamEstimate::new(theta.matrix() - grad * law.gamma)
}

impl AdaptiveLaw for GdLaw {
    fn update(
        &mut self,
        theta: &ParamEstimate,
        phi: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> Result<ParamEstimate> {
        gd_update(self, theta, phi, eps)
    }

    fn kind(&self) -> LawKind {
        LawKind::Gd
    }

    fn mu(&self) -> f64 {
        self.mu
    }
}

/// The projected high-order tuner: parameter estimate plus auxiliary
/// estimate `Xi_hat`, updated through an intermediate `Theta_bar` and the
/// a-posteriori gradient. One instance per trajectory.
#[derive(Debug, Clone)]
pub struct HotLaw {
    gamma: f64,
    beta: f64,
    mu: f64,
    mode: GainMode,
    xi: DMatrix<f64>,
}

impl HotLaw {
    /// Validates the gains under `mode` and initializes the auxiliary
    /// estimate to `theta0`.
    pub fn new(
        gamma: f64,
        beta: f64,
        mu: f64,
        mode: GainMode,
        theta0: &ParamEstimate,
    ) -> Result<Self> {
        match validate_gains(&GainSpec::Hot { gamma, beta, mu, mode }) {
            GainCheck::Ok { .. } => Ok(HotLaw {
                gamma,
                beta,
                mu,
                mode,
                xi: theta0.matrix().clone(),
            }),
            GainCheck::Violation { condition } => {
                Err(Error::GainCondition(condition.to_string()))
            }
        }
    }

    /// Restarts the auxiliary estimate for a fresh trajectory.
    pub fn reset(&mut self, theta0: &ParamEstimate) {
        self.xi = theta0.matrix().clone();
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mode(&self) -> GainMode {
        self.mode
    }
}

/// One high-order tuner update. Returns the new parameter estimate and
/// stores the advanced auxiliary estimate inside `law`.
pub fn hot_update(
    law: &mut HotLaw,
    theta: &ParamEstimate,
    phi: &DVector<f64>,
    eps: &DVector<f64>,
) -> Result<ParamEstimate> {
    check_update_dims(theta, phi, eps)?;
    if law.xi.shape() != theta.matrix().shape() {
        return Err(Error::dimension(
            "auxiliary estimate shape does not match the parameter estimate",
        ));
    }
    let n_k = normalizer(phi, law.mu)?;
    let grad = normalized_gradient(eps, phi, n_k)?;
    let theta_bar = theta.matrix() - grad * (law.gamma * law.beta);
    let theta_next = ParamEstimate::new(&theta_bar - (&theta_bar - &law.xi) * law.beta)?;
    let grad_next = a_posteriori_gradient(&theta_next, theta, eps, phi, n_k)?;
    law.xi -= grad_next * law.gamma;
    Ok(theta_next)
}

impl AdaptiveLaw for HotLaw {
    fn update(
        &mut self,
        theta: &ParamEstimate,
        phi: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> Result<ParamEstimate> {
        hot_update(self, theta, phi, eps)
    }

    fn kind(&self) -> LawKind {
        LawKind::Hot
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn auxiliary(&self) -> Option<&DMatrix<f64>> {
        Some(&self.xi)
    }
}

/// Constant-regressor Nesterov step with momentum `1 - beta` and step size
/// `gamma * beta`. Oracle only: it needs the true parameters, which no
/// controller has.
pub fn nesterov_update(
    theta: &ParamEstimate,
    theta_prev: &ParamEstimate,
    phi: &DVector<f64>,
    theta_star: &ParamEstimate,
    gamma: f64,
    beta: f64,
    mu: f64,
) -> Result<ParamEstimate> {
    if theta.matrix().shape() != theta_prev.matrix().shape()
        || theta.matrix().shape() != theta_star.matrix().shape()
    {
        return Err(Error::dimension("estimates must have identical shape"));
    }
    let n = normalizer(phi, mu)?;
    let beta_bar = 1.0 - beta;
    let gamma_bar = gamma * beta;
    let extrapolated = theta.matrix() + (theta.matrix() - theta_prev.matrix()) * beta_bar;
    let grad = ((&extrapolated - theta_star.matrix()) * phi) * phi.transpose() / n;
    ParamEstimate::new(extrapolated - grad * gamma_bar)
}

fn check_update_dims(
    theta: &ParamEstimate,
    phi: &DVector<f64>,
    eps: &DVector<f64>,
) -> Result<()> {
    if theta.cols() != phi.len() {
        return Err(Error::dimension(format!(
            "estimate has {} columns, regressor has {} entries",
            theta.cols(),
            phi.len()
        )));
    }
    if theta.rows() != eps.len() {
        return Err(Error::dimension(format!(
            "estimate has {} rows, prediction error has {} entries",
            theta.rows(),
            eps.len()
        )));
    }
    Ok(())
}
