//! Discrete-time LTI support: Schur-stability test, discrete Lyapunov
//! equation, zero-order-hold discretization and LQR synthesis.
//!
//! Everything here is desk-scale dense linear algebra (n up to a few tens).
//! The Lyapunov equation is solved exactly by Kronecker vectorization and the
//! Riccati equation by fixed-point iteration, both checked against explicit
//! residual tolerances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Iteration cap for the Riccati fixed-point recursion.
pub const RICCATI_MAX_ITERS: usize = 100_000;
/// Relative residual target for [`solve_dare`].
pub const RICCATI_REL_TOL: f64 = 1e-13;
/// Singular-value ratio below which a direction counts as rank-deficient.
pub const RANK_TOL: f64 = 1e-10;

/// A discrete-time state-space pair `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl StateSpace {
    /// Builds and validates the pair: `A` square, `B` with matching row count
    /// and full column rank, `dt > 0`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::dimension("state and input dimensions must be >= 1"));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::dimension(format!(
                "B must have {} rows, got {}",
                a.nrows(),
                b.nrows()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::argument(format!("dt must be positive, got {dt}")));
        }
        if matrix_rank(&b) < b.ncols() {
            return Err(Error::argument(
                "columns of B must be linearly independent",
            ));
        }
        Ok(StateSpace { a, b, dt })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Sampling period in seconds (informational).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Numerical rank from the singular-value spectrum, with threshold
/// `RANK_TOL * sigma_max`.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let svals = m.singular_values();
    let smax = svals.max();
    if smax <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::dimension("empty matrix"));
    }
    let eigs = a.complex_eigenvalues();
    Ok(eigs.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// True iff every eigenvalue modulus is strictly below `1 - tol`.
pub fn is_schur_stable(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - tol)
}

fn check_symmetric_pd(q: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = (q - q.transpose()).norm();
    if asym > 1e-10 * (1.0 + q.norm()) {
        return Err(Error::NotSymmetricPd(format!(
            "{name} is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let sym = (q + q.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigen().eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::NotSymmetricPd(format!(
            "{name} has minimum eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

fn check_symmetric_psd(q: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = (q - q.transpose()).norm();
    if asym > 1e-10 * (1.0 + q.norm()) {
        return Err(Error::NotSymmetricPd(format!(
            "{name} is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let sym = (q + q.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-10 * (1.0 + q.norm()) {
        return Err(Error::NotSymmetricPd(format!(
            "{name} has minimum eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

/// Solves `A' P A - P = -Q` for symmetric positive-definite `P`.
///
/// The equation is vectorized into the linear system
/// `(I - A'⊗A') vec(P) = vec(Q)` and solved by LU; this is exact at the
/// matrix sizes this crate targets. Fails if `A` is not Schur-stable or `Q`
/// is not symmetric positive-definite.
pub fn solve_dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dimension("A must be square"));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::dimension(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::NotSchurStable { rho });
    }
    check_symmetric_pd(q, "Q")?;

    let at = a.transpose();
    let kron = at.kronecker(&at);
    let system = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::Convergence {
            what: "discrete Lyapunov linear solve",
            iterations: 1,
        })?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (a.transpose() * &p * a - &p + q).norm();
    if residual > 1e-10 * q.norm() {
        return Err(Error::Convergence {
            what: "discrete Lyapunov residual",
            iterations: 1,
        });
    }
    Ok(p)
}

/// Matrix exponential by scaling-and-squaring with a Taylor kernel.
///
/// The argument is scaled so its Frobenius norm is at most 1/2, the series is
/// summed to machine precision, and the result squared back up.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::dimension("matrix exponential needs a square matrix"));
    }
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);

    let mut acc = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=64 {
        term = (&term * &scaled) / k as f64;
        acc += &term;
        if term.norm() <= f64::EPSILON * acc.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

/// Raw zero-order-hold matrices `A = exp(A_c dt)`,
/// `B = ∫_0^dt exp(A_c s) ds · B_c`, computed through the exponential of the
/// augmented matrix `[[A_c, B_c], [0, 0]] dt`. No rank requirements on
/// `B_c`, so this also serves stacked input/reference columns.
pub fn zoh_matrices(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    let m = b_c.ncols();
    if a_c.ncols() != n {
        return Err(Error::dimension("A_c must be square"));
    }
    if b_c.nrows() != n {
        return Err(Error::dimension(format!(
            "B_c must have {n} rows, got {}",
            b_c.nrows()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::argument(format!("dt must be positive, got {dt}")));
    }

    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    let exp_aug = matrix_exp(&(aug * dt))?;

    let a = exp_aug.view((0, 0), (n, n)).into_owned();
    let b = exp_aug.view((0, n), (n, m)).into_owned();
    Ok((a, b))
}

/// Zero-order-hold discretization of `xdot = A_c x + B_c u` at period `dt`,
/// validated as a control pair (full-column-rank input map).
pub fn discretize_zoh(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, dt: f64) -> Result<StateSpace> {
    let (a, b) = zoh_matrices(a_c, b_c, dt)?;
    StateSpace::new(a, b, dt)
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btpb = r + b.transpose() * p * b;
    let btpa = b.transpose() * p * a;
    let gain_term = btpb
        .cholesky()
        .ok_or(Error::NotSymmetricPd(
            "R + B'PB lost positive-definiteness".into(),
        ))?
        .solve(&btpa);
    let next = q + a.transpose() * p * a - a.transpose() * p * b * gain_term;
    Ok((&next + next.transpose()) * 0.5)
}

fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let next = riccati_map(a, b, q, r, p)?;
    Ok((&next - p).norm() / 1f64.max(p.norm()))
}

/// Solves the discrete algebraic Riccati equation by value iteration,
/// returning the stabilizing cost-to-go matrix `P`.
///
/// `Q` must be symmetric positive-semidefinite, `R` symmetric
/// positive-definite, and `(A, B)` stabilizable; otherwise the iteration
/// fails to reach the residual target and a convergence error is returned.
pub fn solve_dare(
    ss: &StateSpace,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, m) = (ss.state_dim(), ss.input_dim());
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::dimension(format!("Q must be {n}x{n}")));
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(Error::dimension(format!("R must be {m}x{m}")));
    }
    check_symmetric_psd(q, "Q")?;
    check_symmetric_pd(r, "R")?;

    let (a, b) = (ss.a(), ss.b());
    let mut p = q.clone();
    for _ in 0..RICCATI_MAX_ITERS {
        let next = riccati_map(a, b, q, r, &p)?;
        let step = (&next - &p).norm() / 1f64.max(next.norm());
        p = next;
        if step <= 0.5 * RICCATI_REL_TOL
            && riccati_residual(a, b, q, r, &p)? <= RICCATI_REL_TOL
        {
            return Ok(p);
        }
    }
    Err(Error::Convergence {
        what: "Riccati fixed-point iteration",
        iterations: RICCATI_MAX_ITERS,
    })
}

/// LQR gain `K` such that `u = K x` yields the closed loop `A + B K`.
///
/// Note the sign convention: the returned gain already carries the minus of
/// the usual `u = -K x` literature form, so `A + B K` is Schur-stable.
pub fn solve_dlqr(
    ss: &StateSpace,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = solve_dare(ss, q, r)?;
    let (a, b) = (ss.a(), ss.b());
    let btpb = r + b.transpose() * &p * b;
    let btpa = b.transpose() * &p * a;
    let k = -btpb
        .cholesky()
        .ok_or(Error::NotSymmetricPd(
            "R + B'PB lost positive-definiteness".into(),
        ))?
        .solve(&btpa);
    let closed = a + b * &k;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(Error::NotSchurStable { rho });
    }
    Ok(k)
}

/// Kalman rank test: `(A, B)` controllable iff `[B, AB, ..., A^{n-1}B]` has
/// rank n.
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::dimension("controllability test dimension mismatch"));
    }
    let m = b.ncols();
    let mut ctrb = DMatrix::<f64>::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    Ok(matrix_rank(&ctrb) == n)
}
