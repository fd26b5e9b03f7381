//! Plant, reference model, regressor and certainty-equivalence controller.
//!
//! The plant is `x_{k+1} = A_p x_k + B (sum_i a_i f_i(x_k) + u_k)` with
//! unknown `A_p` and coefficients `a_i`, known input map `B` and known
//! scalar-valued basis functions `f_i`. The reference model is
//! `x_{k+1} = A_m x_k + B r_k` with Schur-stable `A_m`. Parameter estimates
//! are stored as the block matrix `[K_hat, a_hat_1, ..., a_hat_p]` acting on
//! the regressor `[x', -f_1(x), ..., -f_p(x)]'`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::{self, RANK_TOL};

/// Residual tolerance (relative to `1 + ||A_m||_F`) below which a
/// least-squares matching gain counts as an exact matching-condition solution.
pub const MATCHING_TOL: f64 = 1e-8;

/// One basis function from the fixed catalog of named forms. All forms
/// vanish at the origin; each carries a natural Lipschitz constant except the
/// product form, whose constant holds only on bounded sets and must be
/// supplied by the configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisFn {
    /// `f(x) = x[index]`
    Component { index: usize },
    /// `f(x) = amplitude * sin(frequency * x[index])`
    Sine {
        index: usize,
        amplitude: f64,
        frequency: f64,
    },
    /// `f(x) = tanh(scale * x[index])`
    Tanh { index: usize, scale: f64 },
    /// `f(x) = x[index]^2 / (1 + |x[index]|)`, a saturated quadratic with
    /// slope bounded by 1.
    SatQuad { index: usize },
    /// `f(x) = sin(x[i] * x[j])`
    SineProduct { i: usize, j: usize },
}

impl BasisFn {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match *self {
            BasisFn::Component { index } => x[index],
            BasisFn::Sine {
                index,
                amplitude,
                frequency,
            } => amplitude * (frequency * x[index]).sin(),
            BasisFn::Tanh { index, scale } => (scale * x[index]).tanh(),
            BasisFn::SatQuad { index } => {
                let v = x[index];
                v * v / (1.0 + v.abs())
            }
            BasisFn::SineProduct { i, j } => (x[i] * x[j]).sin(),
        }
    }

    /// Global Lipschitz constant of the form, when one exists.
    pub fn natural_lipschitz(&self) -> Option<f64> {
        match *self {
            BasisFn::Component { .. } => Some(1.0),
            BasisFn::Sine {
                amplitude,
                frequency,
                ..
            } => Some((amplitude * frequency).abs()),
            BasisFn::Tanh { scale, .. } => Some(scale.abs()),
            BasisFn::SatQuad { .. } => Some(1.0),
            BasisFn::SineProduct { .. } => None,
        }
    }

    /// Largest state index the function reads.
    pub fn max_index(&self) -> usize {
        match *self {
            BasisFn::Component { index }
            | BasisFn::Sine { index, .. }
            | BasisFn::Tanh { index, .. }
            | BasisFn::SatQuad { index } => index,
            BasisFn::SineProduct { i, j } => i.max(j),
        }
    }
}

/// The known nonlinear part of the plant: functions `f_1..f_p` with their
/// Lipschitz constants `M_1..M_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearBasis {
    entries: Vec<(BasisFn, f64)>,
}

impl NonlinearBasis {
    /// Builds the basis, checking `M_i >= 0` and `f_i(0) = 0` by direct
    /// evaluation.
    pub fn new(entries: Vec<(BasisFn, f64)>) -> Result<Self> {
        for (f, lip) in &entries {
            if !(*lip >= 0.0) {
                return Err(Error::argument(format!(
                    "Lipschitz constant must be >= 0, got {lip}"
                )));
            }
            let dim = f.max_index() + 1;
            let at_zero = f.eval(&DVector::zeros(dim));
            if at_zero != 0.0 {
                return Err(Error::argument(format!(
                    "basis function does not vanish at the origin (f(0) = {at_zero})"
                )));
            }
        }
        Ok(NonlinearBasis { entries })
    }

    pub fn empty() -> Self {
        NonlinearBasis { entries: Vec::new() }
    }

    /// Number of basis functions p.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn functions(&self) -> impl Iterator<Item = &BasisFn> {
        self.entries.iter().map(|(f, _)| f)
    }

    pub fn lipschitz_constants(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, m)| *m)
    }

    /// Evaluates every basis function at `x`.
    pub fn eval_all(&self, x: &DVector<f64>) -> Vec<f64> {
        self.entries.iter().map(|(f, _)| f.eval(x)).collect()
    }

    /// Largest state index any function reads, or None for an empty basis.
    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|(f, _)| f.max_index()).max()
    }
}

/// The unknown-parameter plant.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a_p: DMatrix<f64>,
    b: DMatrix<f64>,
    basis: NonlinearBasis,
    coeffs: Vec<DVector<f64>>,
}

impl PlantModel {
    /// Builds the plant and validates its structural assumptions:
    /// controllable `(A_p, B)`, full-column-rank `B`, coefficient vectors of
    /// input dimension, basis indices within the state dimension.
    pub fn new(
        a_p: DMatrix<f64>,
        b: DMatrix<f64>,
        basis: NonlinearBasis,
        coeffs: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = a_p.nrows();
        if a_p.ncols() != n {
            return Err(Error::dimension("A_p must be square"));
        }
        if b.nrows() != n {
            return Err(Error::dimension(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::dimension("state and input dimensions must be >= 1"));
        }
        if lti::matrix_rank(&b) < m {
            return Err(Error::argument(
                "columns of B must be linearly independent",
            ));
        }
        if !lti::is_controllable(&a_p, &b)? {
            return Err(Error::argument("(A_p, B) must be controllable"));
        }
        if coeffs.len() != basis.len() {
            return Err(Error::dimension(format!(
                "expected {} coefficient vectors, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        for a in &coeffs {
            if a.len() != m {
                return Err(Error::dimension(format!(
                    "coefficient vectors must have length {m}, got {}",
                    a.len()
                )));
            }
        }
        if let Some(max_idx) = basis.max_index() {
            if max_idx >= n {
                return Err(Error::argument(format!(
                    "basis function reads state index {max_idx}, state dimension is {n}"
                )));
            }
        }
        Ok(PlantModel {
            a_p,
            b,
            basis,
            coeffs,
        })
    }

    pub fn a_p(&self) -> &DMatrix<f64> {
        &self.a_p
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn basis(&self) -> &NonlinearBasis {
        &self.basis
    }

    /// True coefficient vectors `a_1..a_p` (unknown to the controller).
    pub fn coeffs(&self) -> &[DVector<f64>] {
        &self.coeffs
    }

    pub fn state_dim(&self) -> usize {
        self.a_p.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }
}

/// The designer-chosen reference model `x_{k+1} = A_m x_k + B r_k`.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    a_m: DMatrix<f64>,
    b: DMatrix<f64>,
    r_max: f64,
}

impl ReferenceModel {
    /// Builds the model; `A_m` must be Schur-stable.
    pub fn new(a_m: DMatrix<f64>, b: DMatrix<f64>, r_max: f64) -> Result<Self> {
        let n = a_m.nrows();
        if a_m.ncols() != n {
            return Err(Error::dimension("A_m must be square"));
        }
        if b.nrows() != n {
            return Err(Error::dimension(format!(
                "reference B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        let rho = lti::spectral_radius(&a_m)?;
        if rho >= 1.0 {
            return Err(Error::NotSchurStable { rho });
        }
        if !(r_max >= 0.0) {
            return Err(Error::argument(format!(
                "r_max must be >= 0, got {r_max}"
            )));
        }
        Ok(ReferenceModel { a_m, b, r_max })
    }

    pub fn a_m(&self) -> &DMatrix<f64> {
        &self.a_m
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }
}

/// Parameter estimate `[K_hat, a_hat_1, ..., a_hat_p]`, an `m x (n+p)`
/// matrix acting on the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    mat: DMatrix<f64>,
}

impl ParamEstimate {
    /// Wraps a matrix, requiring every entry to be finite.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("parameter estimate has non-finite entries"));
        }
        Ok(ParamEstimate { mat })
    }

    pub fn zeros(m: usize, cols: usize) -> Self {
        ParamEstimate {
            mat: DMatrix::zeros(m, cols),
        }
    }

    /// Concatenates a gain block and coefficient vectors into the estimate
    /// layout.
    pub fn from_parts(k: &DMatrix<f64>, a: &[DVector<f64>]) -> Result<Self> {
        let m = k.nrows();
        let mut mat = DMatrix::zeros(m, k.ncols() + a.len());
        mat.view_mut((0, 0), (m, k.ncols())).copy_from(k);
        for (i, ai) in a.iter().enumerate() {
            if ai.len() != m {
                return Err(Error::dimension(format!(
                    "coefficient vector {i} must have length {m}, got {}",
                    ai.len()
                )));
            }
            mat.set_column(k.ncols() + i, ai);
        }
        ParamEstimate::new(mat)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Output dimension m.
    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    /// Regressor dimension n + p.
    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    /// The gain block `K_hat` (first n columns).
    pub fn gain_block(&self, n: usize) -> DMatrix<f64> {
        self.mat.view((0, 0), (self.mat.nrows(), n)).into_owned()
    }
}

/// Regressor `phi = [x', -f_1(x), ..., -f_p(x)]'`.
pub fn build_regressor(x_p: &DVector<f64>, basis: &NonlinearBasis) -> DVector<f64> {
    let n = x_p.len();
    let p = basis.len();
    let mut phi = DVector::zeros(n + p);
    phi.rows_mut(0, n).copy_from(x_p);
    for (i, value) in basis.eval_all(x_p).into_iter().enumerate() {
        phi[n + i] = -value;
    }
    phi
}

/// Certainty-equivalence control `u = Theta_hat * phi + r`.
pub fn control_input(
    est: &ParamEstimate,
    phi: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DVector<f64>> {
    if est.cols() != phi.len() {
        return Err(Error::dimension(format!(
            "estimate has {} columns, regressor has {} entries",
            est.cols(),
            phi.len()
        )));
    }
    if est.rows() != r.len() {
        return Err(Error::dimension(format!(
            "estimate has {} rows, reference input has {} entries",
            est.rows(),
            r.len()
        )));
    }
    Ok(est.matrix() * phi + r)
}

/// One plant step `x_{k+1} = A_p x + B (sum_i a_i f_i(x) + u)`.
pub fn step_plant(plant: &PlantModel, x_p: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if x_p.len() != plant.state_dim() {
        return Err(Error::dimension("state dimension mismatch"));
    }
    if u.len() != plant.input_dim() {
        return Err(Error::dimension("input dimension mismatch"));
    }
    let mut effective = u.clone();
    for (a_i, f_val) in plant.coeffs.iter().zip(plant.basis.eval_all(x_p)) {
        effective += a_i * f_val;
    }
    Ok(&plant.a_p * x_p + &plant.b * effective)
}

/// One reference-model step `x_{k+1} = A_m x_m + B r`, flagging references
/// that exceed the declared bound.
pub fn step_reference(
    reference: &ReferenceModel,
    x_m: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x_m.len() != reference.a_m.nrows() {
        return Err(Error::dimension("reference state dimension mismatch"));
    }
    if r.len() != reference.b.ncols() {
        return Err(Error::dimension("reference input dimension mismatch"));
    }
    if r.norm() > reference.r_max {
        return Err(Error::argument(format!(
            "reference input norm {:.6} exceeds r_max {:.6}",
            r.norm(),
            reference.r_max
        )));
    }
    Ok(&reference.a_m * x_m + &reference.b * r)
}

/// Least-squares matching gain `K* = (B'B)^{-1} B' (A_m - A_p)`.
///
/// Returns `Some(K*)` only when the residual `||A_m - A_p - B K*||_F` is
/// below `MATCHING_TOL * (1 + ||A_m||_F)`, i.e. when the matching condition
/// `A_m = A_p + B K*` actually holds; `None` otherwise.
pub fn matching_gain(plant: &PlantModel, a_m: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let n = plant.state_dim();
    if a_m.nrows() != n || a_m.ncols() != n {
        return Err(Error::dimension(format!("A_m must be {n}x{n}")));
    }
    let pinv = left_pseudo_inverse(plant.b())?;
    let diff = a_m - plant.a_p();
    let k = &pinv * &diff;
    let residual = (&diff - plant.b() * &k).norm();
    if residual <= MATCHING_TOL * (1.0 + a_m.norm()) {
        Ok(Some(k))
    } else {
        Ok(None)
    }
}

/// `(B'B)^{-1} B'` via QR, failing on rank-deficient input.
pub fn left_pseudo_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() < b.ncols() {
        return Err(Error::argument(
            "left pseudo-inverse needs at least as many rows as columns",
        ));
    }
    let qr = b.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let diag_max = (0..r.ncols()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..r.ncols()).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max) || diag_max == 0.0 {
        return Err(Error::argument("B is rank-deficient"));
    }
    r.solve_upper_triangular(&q.transpose())
        .ok_or_else(|| Error::argument("B is rank-deficient"))
}

/// Regressor growth constant `C = 1 + sum_i M_i^2`, so that
/// `||phi||^2 <= C ||x||^2` for any Lipschitz basis vanishing at the origin.
pub fn lipschitz_envelope_constant(basis: &NonlinearBasis) -> f64 {
    1.0 + basis.lipschitz_constants().map(|m| m * m).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_plant() -> PlantModel {
        let basis = NonlinearBasis::new(vec![(BasisFn::Component { index: 0 }, 1.0)]).unwrap();
        PlantModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            basis,
            vec![DVector::from_vec(vec![2.0])],
        )
        .unwrap()
    }

    #[test]
    fn regressor_vanishes_at_origin() {
        let basis = NonlinearBasis::new(vec![
            (BasisFn::Sine { index: 0, amplitude: 1.0, frequency: 1.0 }, 1.0),
            (BasisFn::Tanh { index: 1, scale: 2.0 }, 2.0),
        ])
        .unwrap();
        let phi = build_regressor(&DVector::zeros(2), &basis);
        assert_eq!(phi, DVector::zeros(4));
    }

    #[test]
    fn regressor_matches_hand_evaluation() {
        let basis =
            NonlinearBasis::new(vec![(BasisFn::SineProduct { i: 0, j: 1 }, 3.0)]).unwrap();
        let phi = build_regressor(&DVector::from_vec(vec![1.0, 2.0]), &basis);
        assert_relative_eq!(phi[0], 1.0);
        assert_relative_eq!(phi[1], 2.0);
        assert_relative_eq!(phi[2], -(2.0f64).sin(), max_relative = 1e-15);
    }

    #[test]
    fn regressor_without_basis_is_the_state() {
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let phi = build_regressor(&x, &NonlinearBasis::empty());
        assert_eq!(phi, x);
    }

    #[test]
    fn control_input_zero_estimate_passes_reference() {
        let est = ParamEstimate::zeros(2, 3);
        let phi = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let r = DVector::from_vec(vec![4.0, -1.0]);
        assert_eq!(control_input(&est, &phi, &r).unwrap(), r);
    }

    #[test]
    fn control_input_scalar_arithmetic() {
        let est = ParamEstimate::new(DMatrix::from_row_slice(1, 2, &[2.0, -1.0])).unwrap();
        let phi = DVector::from_vec(vec![3.0, 4.0]);
        let r = DVector::from_vec(vec![5.0]);
        let u = control_input(&est, &phi, &r).unwrap();
        assert_relative_eq!(u[0], 7.0);
    }

    #[test]
    fn plant_step_examples() {
        let plant = scalar_plant();
        let zero = step_plant(&plant, &DVector::zeros(1), &DVector::zeros(1)).unwrap();
        assert_eq!(zero, DVector::zeros(1));

        let x = DVector::from_vec(vec![1.0]);
        let next = step_plant(&plant, &x, &DVector::zeros(1)).unwrap();
        assert_relative_eq!(next[0], 2.5);
    }

    #[test]
    fn plant_step_linear_special_case() {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            NonlinearBasis::empty(),
            vec![],
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let u = DVector::from_vec(vec![0.5]);
        let next = step_plant(&plant, &x, &u).unwrap();
        let expected = plant.a_p() * &x + plant.b() * &u;
        assert_eq!(next, expected);
    }

    #[test]
    fn reference_step_examples() {
        let refm = ReferenceModel::new(
            DMatrix::from_element(1, 1, 0.9),
            DMatrix::from_element(1, 1, 1.0),
            10.0,
        )
        .unwrap();
        let next = step_reference(
            &refm,
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![5.0]),
        )
        .unwrap();
        assert_relative_eq!(next[0], 5.9);

        let err = step_reference(
            &refm,
            &DVector::zeros(1),
            &DVector::from_vec(vec![11.0]),
        );
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn reference_model_requires_schur_stability() {
        let bad = ReferenceModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
        );
        assert!(matches!(bad, Err(Error::NotSchurStable { .. })));
    }

    #[test]
    fn matching_gain_identity_cases() {
        let plant = scalar_plant();
        let k = matching_gain(&plant, plant.a_p()).unwrap().unwrap();
        assert_relative_eq!(k[(0, 0)], 0.0, epsilon = 1e-14);

        // Square full-rank B: matching always succeeds with K = B^{-1}(A_m - A_p).
        let plant2 = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::identity(2, 2),
            NonlinearBasis::empty(),
            vec![],
        )
        .unwrap();
        let a_m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.1, 0.2]);
        let k2 = matching_gain(&plant2, &a_m).unwrap().unwrap();
        assert_relative_eq!(k2, &a_m - plant2.a_p(), epsilon = 1e-12);
    }

    #[test]
    fn matching_gain_detects_unmatchable_difference() {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            NonlinearBasis::empty(),
            vec![],
        )
        .unwrap();
        // Difference has a nonzero second row, outside the column space of B.
        let a_m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.5]);
        assert!(matching_gain(&plant, &a_m).unwrap().is_none());
    }

    #[test]
    fn lipschitz_envelope_values() {
        assert_relative_eq!(lipschitz_envelope_constant(&NonlinearBasis::empty()), 1.0);
        let one = NonlinearBasis::new(vec![(BasisFn::Component { index: 0 }, 1.0)]).unwrap();
        assert_relative_eq!(lipschitz_envelope_constant(&one), 2.0);
        let two = NonlinearBasis::new(vec![
            (BasisFn::Sine { index: 0, amplitude: 2.0, frequency: 1.0 }, 2.0),
            (BasisFn::Tanh { index: 0, scale: 3.0 }, 3.0),
        ])
        .unwrap();
        assert_relative_eq!(lipschitz_envelope_constant(&two), 14.0);
    }

    #[test]
    fn exact_parameters_reproduce_reference_step() {
        let plant = scalar_plant();
        let a_m = DMatrix::from_element(1, 1, 0.8);
        let k_star = matching_gain(&plant, &a_m).unwrap().unwrap();
        let theta_star = ParamEstimate::from_parts(&k_star, plant.coeffs()).unwrap();
        let refm = ReferenceModel::new(a_m, plant.b().clone(), 10.0).unwrap();

        let x = DVector::from_vec(vec![1.3]);
        let r = DVector::from_vec(vec![0.7]);
        let phi = build_regressor(&x, plant.basis());
        let u = control_input(&theta_star, &phi, &r).unwrap();
        let plant_next = step_plant(&plant, &x, &u).unwrap();
        let ref_next = step_reference(&refm, &x, &r).unwrap();
        assert_relative_eq!(plant_next, ref_next, epsilon = 1e-12);
    }

    #[test]
    fn plant_rejects_uncontrollable_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.7]);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let bad = PlantModel::new(a, b, NonlinearBasis::empty(), vec![]);
        assert!(matches!(bad, Err(Error::Argument(_))));
    }

    #[test]
    fn pseudo_inverse_rejects_rank_deficiency() {
        let b = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
        ]);
        assert!(matches!(
            left_pseudo_inverse(&b),
            Err(Error::Argument(_))
        ));
    }
}
