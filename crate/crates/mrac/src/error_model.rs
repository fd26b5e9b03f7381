//! Conversion of the dynamical error model into its algebraic form, plus the
//! normalized loss machinery the adaptive laws are built on.
//!
//! The state error obeys `e_{k+1} = A_m e_k + B Theta_tilde_k phi_k`; the
//! prediction error `eps_{k+1} = (B'B)^{-1} B' (e_{k+1} - A_m e_k)` recovers
//! `Theta_tilde_k phi_k` from measured states only, so the controller never
//! needs the true parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::{left_pseudo_inverse, ParamEstimate};

/// One step of error-model data: state error `e_k`, prediction error
/// `eps_{k+1}`, regressor `phi_k` and normalizer `N_k`.
#[derive(Debug, Clone)]
pub struct ErrorSample {
    pub e: DVector<f64>,
    pub eps: DVector<f64>,
    pub phi: DVector<f64>,
    pub n: f64,
}

impl ErrorSample {
    /// Bundles one step, enforcing `N >= mu` and `N >= ||phi||^2`.
    pub fn new(
        e: DVector<f64>,
        eps: DVector<f64>,
        phi: DVector<f64>,
        n: f64,
        mu: f64,
    ) -> Result<Self> {
        if n < mu || n < phi.norm_squared() - 1e-12 * (1.0 + n) {
            return Err(Error::argument(format!(
                "normalizer {n} below max(mu = {mu}, ||phi||^2 = {})",
                phi.norm_squared()
            )));
        }
        Ok(ErrorSample { e, eps, phi, n })
    }
}

/// Precomputed `(A_m, (B'B)^{-1} B')` pair for repeated prediction-error
/// evaluation along a trajectory. `B` is constant per run, so the
/// pseudo-inverse is formed once.
#[derive(Debug, Clone)]
pub struct ErrorConverter {
    a_m: DMatrix<f64>,
    b_pinv: DMatrix<f64>,
}

impl ErrorConverter {
    pub fn new(a_m: DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a_m.nrows() != a_m.ncols() {
            return Err(Error::dimension("A_m must be square"));
        }
        if b.nrows() != a_m.nrows() {
            return Err(Error::dimension("B must have as many rows as A_m"));
        }
        let b_pinv = left_pseudo_inverse(b)?;
        Ok(ErrorConverter { a_m, b_pinv })
    }

    /// `eps_{k+1} = (B'B)^{-1} B' (e_{k+1} - A_m e_k)`.
    pub fn prediction_error(&self, e_next: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
        &self.b_pinv * (e_next - &self.a_m * e)
    }
}

/// One-off prediction error; prefer [`ErrorConverter`] inside loops.
pub fn prediction_error(
    b: &DMatrix<f64>,
    e_next: &DVector<f64>,
    e: &DVector<f64>,
    a_m: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let conv = ErrorConverter::new(a_m.clone(), b)?;
    Ok(conv.prediction_error(e_next, e))
}

/// Normalizer `N = max(mu, ||phi||^2)` with floor `mu > 0`.
pub fn normalizer(phi: &DVector<f64>, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::argument(format!("mu must be positive, got {mu}")));
    }
    Ok(mu.max(phi.norm_squared()))
}

/// Instantaneous loss `L = ||eps||^2 / 2`.
pub fn loss(eps: &DVector<f64>) -> f64 {
    0.5 * eps.norm_squared()
}

/// Gradient of the normalized loss at the current estimate:
/// `(1/N) eps phi'`.
pub fn normalized_gradient(
    eps: &DVector<f64>,
    phi: &DVector<f64>,
    n: f64,
) -> Result<DMatrix<f64>> {
    if !(n > 0.0) {
        return Err(Error::argument(format!("normalizer must be positive, got {n}")));
    }
    Ok(eps * phi.transpose() / n)
}

/// Gradient of the same step's loss at the *updated* estimate, computed
/// without re-measuring the plant:
/// `(1/N) ((Theta_next - Theta) phi + eps) phi'`.
pub fn a_posteriori_gradient(
    theta_next: &ParamEstimate,
    theta: &ParamEstimate,
    eps: &DVector<f64>,
    phi: &DVector<f64>,
    n: f64,
) -> Result<DMatrix<f64>> {
    if theta_next.rows() != theta.rows() || theta_next.cols() != theta.cols() {
        return Err(Error::dimension("estimates must have identical shape"));
    }
    if theta.cols() != phi.len() || theta.rows() != eps.len() {
        return Err(Error::dimension(
            "estimate shape does not match regressor/error dimensions",
        ));
    }
    if !(n > 0.0) {
        return Err(Error::argument(format!("normalizer must be positive, got {n}")));
    }
    let shifted = (theta_next.matrix() - theta.matrix()) * phi + eps;
    Ok(shifted * phi.transpose() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn prediction_error_zero_when_error_follows_reference() {
        let a_m = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let e = DVector::from_vec(vec![0.3, -0.2]);
        let e_next = &a_m * &e;
        let eps = prediction_error(&b, &e_next, &e, &a_m).unwrap();
        assert_relative_eq!(eps.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn prediction_error_identity_b() {
        let a_m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let b = DMatrix::<f64>::identity(2, 2);
        let e = DVector::from_vec(vec![1.0, 1.0]);
        let e_next = DVector::from_vec(vec![2.0, 0.25]);
        let eps = prediction_error(&b, &e_next, &e, &a_m).unwrap();
        assert_relative_eq!(eps, &e_next - &a_m * &e, epsilon = 1e-14);
    }

    #[test]
    fn prediction_error_recovers_parameter_error_action() {
        // e_{k+1} built from the error model must reproduce Theta_tilde phi.
        let a_m = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.6, 0.1, 0.0, 0.0, 0.7]);
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, -1.0]);
        let theta_tilde = DMatrix::from_row_slice(2, 4, &[0.2, -0.1, 0.3, 0.0, 0.1, 0.4, -0.2, 0.5]);
        let phi = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.3]);
        let e = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let e_next = &a_m * &e + &b * (&theta_tilde * &phi);
        let eps = prediction_error(&b, &e_next, &e, &a_m).unwrap();
        assert_relative_eq!(eps, &theta_tilde * &phi, epsilon = 1e-12);
    }

    #[test]
    fn error_sample_enforces_normalizer_floor() {
        let phi = DVector::from_vec(vec![2.0]);
        let e = DVector::zeros(1);
        let eps = DVector::zeros(1);
        let n = normalizer(&phi, 1.0).unwrap();
        assert!(ErrorSample::new(e.clone(), eps.clone(), phi.clone(), n, 1.0).is_ok());
        assert!(ErrorSample::new(e.clone(), eps.clone(), phi.clone(), 0.5, 1.0).is_err());
        assert!(ErrorSample::new(e, eps, phi, 2.0, 1.0).is_err());
    }

    #[test]
    fn normalizer_examples() {
        assert_relative_eq!(normalizer(&DVector::zeros(3), 1.0).unwrap(), 1.0);
        assert_relative_eq!(normalizer(&DVector::from_vec(vec![2.0]), 1.0).unwrap(), 4.0);
        let small = DVector::from_vec(vec![0.5, 0.5]);
        assert_relative_eq!(normalizer(&small, 1.0).unwrap(), 1.0);
        assert!(matches!(
            normalizer(&small, 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(loss(&DVector::zeros(2)), 0.0);
        assert_relative_eq!(loss(&DVector::from_vec(vec![3.0, 4.0])), 12.5);
        assert_relative_eq!(loss(&DVector::from_vec(vec![1.0])), 0.5);
    }

    #[test]
    fn normalized_gradient_examples() {
        let zero = normalized_gradient(
            &DVector::zeros(2),
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
            2.0,
        )
        .unwrap();
        assert_relative_eq!(zero.norm(), 0.0);

        let g = normalized_gradient(
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![2.0]),
            4.0,
        )
        .unwrap();
        assert_relative_eq!(g[(0, 0)], 0.5);

        assert!(matches!(
            normalized_gradient(&DVector::zeros(1), &DVector::zeros(1), 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn a_posteriori_gradient_reduces_when_estimate_unchanged() {
        let theta = ParamEstimate::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0])).unwrap();
        let eps = DVector::from_vec(vec![0.7]);
        let phi = DVector::from_vec(vec![1.0, 2.0]);
        let n = 5.0;
        let a = a_posteriori_gradient(&theta, &theta, &eps, &phi, n).unwrap();
        let b = normalized_gradient(&eps, &phi, n).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn a_posteriori_gradient_scalar_worked_value() {
        let theta = ParamEstimate::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let theta_next = ParamEstimate::new(DMatrix::from_element(1, 1, 1.875)).unwrap();
        let g = a_posteriori_gradient(
            &theta_next,
            &theta,
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![1.0]),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(g[(0, 0)], 0.875);
    }

    #[test]
    fn a_posteriori_gradient_equals_updated_parameter_error_form() {
        // With Theta_star known, the shifted gradient is Theta_tilde_next phi phi' / N.
        let theta_star = DMatrix::from_row_slice(1, 2, &[0.5, -0.5]);
        let theta = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let theta_next = DMatrix::from_row_slice(1, 2, &[0.8, 0.4]);
        let phi = DVector::from_vec(vec![0.3, -1.2]);
        let n = 2.5;
        let eps = (&theta - &theta_star) * &phi;

        let g = a_posteriori_gradient(
            &ParamEstimate::new(theta_next.clone()).unwrap(),
            &ParamEstimate::new(theta).unwrap(),
            &eps,
            &phi,
            n,
        )
        .unwrap();
        let direct = (&theta_next - &theta_star) * &phi * phi.transpose() / n;
        assert_relative_eq!(g, direct, epsilon = 1e-14);
    }
}
