//! The extended region of allowable high-order tuner gains.
//!
//! Rewriting the tuner's Lyapunov increment as
//! `dV = -(a/N)||eps||^2 + (2b/N) phi' M' eps - (c/N)||M phi||^2` (with
//! `M = Theta_bar - Xi_hat` and `lambda = ||phi||^2 / N in [0, 1]`) gives
//! coefficient polynomials `a`, `b`, `c` in `(gamma, beta, lambda)`. Whenever
//! `c > 0` and `d = a - b^2/c > 0` for every `lambda`, the increment is
//! certifiably nonpositive: `dV <= -d(gamma, beta) ||eps||^2 / N`. Closed
//! forms for that region are impractical, so the minima over `lambda` are
//! taken on a dense grid and the `(gamma, beta)` plane is scanned.

use std::io::Write;

use crate::error::{Error, Result};
use crate::laws::hot_alpha;

/// Default number of lambda samples used by gain validation and the region
/// scan.
pub const DEFAULT_LAMBDA_RESOLUTION: usize = 1001;
/// Finite stand-in for the minus-infinity sentinel in CSV exports.
pub const DISALLOWED_EXPORT_VALUE: f64 = -1e30;

/// Increment coefficients `(a, b, c)` at one `(gamma, beta, lambda)` point.
pub fn abc(gamma: f64, beta: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::argument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let gl = 1.0 - gamma * lambda;
    let gbl = 1.0 - gamma * beta * lambda;
    let a = gamma * (2.0 * gl * gbl * gbl + gamma * beta * beta * lambda);
    let b = gamma * (2.0 * beta * gl * gbl - beta + 2.0 * (1.0 - beta) * gbl);
    let c = beta * (2.0 * gamma * beta * gl + 2.0 - beta + 4.0 * gamma * (1.0 - beta));
    Ok((a, b, c))
}

/// `d = a - b^2 / c`; a vanishing `c` is a singular (disallowed) point.
pub fn d_value(gamma: f64, beta: f64, lambda: f64) -> Result<f64> {
    let (a, b, c) = abc(gamma, beta, lambda)?;
    if c == 0.0 {
        return Err(Error::argument(format!(
            "c(gamma = {gamma}, beta = {beta}, lambda = {lambda}) = 0"
        )));
    }
    Ok(a - b * b / c)
}

/// Minima of `c` and `d` over a uniform `lambda` grid of `resolution` points
/// including both endpoints. Any sample with `c <= 0` forces the `d` minimum
/// to the minus-infinity sentinel, marking the point disallowed.
pub fn minimize_over_lambda(gamma: f64, beta: f64, resolution: usize) -> Result<(f64, f64)> {
    if resolution < 2 {
        return Err(Error::argument(format!(
            "lambda resolution must be >= 2, got {resolution}"
        )));
    }
    let mut c_min = f64::INFINITY;
    let mut d_min = f64::INFINITY;
    for i in 0..resolution {
        let lambda = i as f64 / (resolution - 1) as f64;
        let (a, b, c) = abc(gamma, beta, lambda)?;
        c_min = c_min.min(c);
        if c <= 0.0 {
            d_min = f64::NEG_INFINITY;
        } else if d_min > f64::NEG_INFINITY {
            d_min = d_min.min(a - b * b / c);
        }
    }
    Ok((c_min, d_min))
}

/// One scanned `(gamma, beta)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCheck {
    pub c_min: f64,
    pub d_min: f64,
    pub allowable: bool,
}

/// Evaluates a single gain pair against the extended-region criterion.
pub fn check_point(gamma: f64, beta: f64, resolution: usize) -> PointCheck {
    let (c_min, d_min) =
        minimize_over_lambda(gamma, beta, resolution.max(2)).expect("lambda grid is valid");
    PointCheck {
        c_min,
        d_min,
        allowable: c_min > 0.0 && d_min > 0.0,
    }
}

/// Closed-form admissibility of a gain pair: `0 < beta < 2`,
/// `0 < gamma < sqrt((2-beta)/beta)` and `alpha > 0`.
pub fn prop3_admissible(gamma: f64, beta: f64) -> bool {
    if !(beta > 0.0 && beta < 2.0) || !(gamma > 0.0) {
        return false;
    }
    if gamma >= ((2.0 - beta) / beta).sqrt() {
        return false;
    }
    matches!(hot_alpha(gamma, beta), Ok(alpha) if alpha > 0.0)
}

/// Scan of the `(gamma, beta)` plane: per-point `c`/`d` minima, the
/// extended-region allowability flag and the closed-form overlay. Stored
/// row-major, one row per `beta`.
#[derive(Debug, Clone)]
pub struct RegionGrid {
    gamma_axis: Vec<f64>,
    beta_axis: Vec<f64>,
    c_min: Vec<f64>,
    d_min: Vec<f64>,
    allowable: Vec<bool>,
    prop3: Vec<bool>,
}

impl RegionGrid {
    pub fn gamma_axis(&self) -> &[f64] {
        &self.gamma_axis
    }

    pub fn beta_axis(&self) -> &[f64] {
        &self.beta_axis
    }

    fn idx(&self, beta_i: usize, gamma_i: usize) -> usize {
        beta_i * self.gamma_axis.len() + gamma_i
    }

    pub fn c_min(&self, beta_i: usize, gamma_i: usize) -> f64 {
        self.c_min[self.idx(beta_i, gamma_i)]
    }

    pub fn d_min(&self, beta_i: usize, gamma_i: usize) -> f64 {
        self.d_min[self.idx(beta_i, gamma_i)]
    }

    pub fn allowable(&self, beta_i: usize, gamma_i: usize) -> bool {
        self.allowable[self.idx(beta_i, gamma_i)]
    }

    pub fn prop3_allowable(&self, beta_i: usize, gamma_i: usize) -> bool {
        self.prop3[self.idx(beta_i, gamma_i)]
    }

    pub fn allowable_count(&self) -> usize {
        self.allowable.iter().filter(|&&x| x).count()
    }

    pub fn prop3_count(&self) -> usize {
        self.prop3.iter().filter(|&&x| x).count()
    }

    fn row_nearest(&self, beta: f64) -> Option<usize> {
        self.beta_axis
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - beta).abs().partial_cmp(&(*b - beta).abs()).unwrap()
            })
            .map(|(i, _)| i)
    }

    /// Largest allowable gamma on the grid row closest to `beta`, if any.
    pub fn max_allowable_gamma_at(&self, beta: f64) -> Option<f64> {
        let beta_i = self.row_nearest(beta)?;
        (0..self.gamma_axis.len())
            .rev()
            .find(|&gi| self.allowable(beta_i, gi))
            .map(|gi| self.gamma_axis[gi])
    }

    /// Largest closed-form-admissible gamma on the grid row closest to
    /// `beta` (the overlay boundary curve), if any.
    pub fn max_prop3_gamma_at(&self, beta: f64) -> Option<f64> {
        let beta_i = self.row_nearest(beta)?;
        (0..self.gamma_axis.len())
            .rev()
            .find(|&gi| self.prop3_allowable(beta_i, gi))
            .map(|gi| self.gamma_axis[gi])
    }

    /// Writes the grid as CSV, row-major by beta then gamma. The
    /// minus-infinity sentinel is exported as a large negative finite value;
    /// the `allowable` column already flags those points.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "gamma,beta,c_min,d_min,allowable,prop3_allowable")?;
        for (bi, beta) in self.beta_axis.iter().enumerate() {
            for (gi, gamma) in self.gamma_axis.iter().enumerate() {
                let d = self.d_min(bi, gi);
                let d = if d.is_finite() { d } else { DISALLOWED_EXPORT_VALUE };
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    gamma,
                    beta,
                    self.c_min(bi, gi),
                    d,
                    u8::from(self.allowable(bi, gi)),
                    u8::from(self.prop3_allowable(bi, gi)),
                )?;
            }
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Scans `gamma in [0, 4]`, `beta in [0, 2]` with per-point lambda
/// minimization, recording the extended region and the closed-form overlay.
pub fn build_region_grid(
    gamma_steps: usize,
    beta_steps: usize,
    lambda_resolution: usize,
) -> Result<RegionGrid> {
    if gamma_steps < 2 || beta_steps < 2 || lambda_resolution < 2 {
        return Err(Error::argument("grid step counts must be >= 2"));
    }
    let gamma_axis = linspace(0.0, 4.0, gamma_steps);
    let beta_axis = linspace(0.0, 2.0, beta_steps);
    let mut c_min = Vec::with_capacity(gamma_steps * beta_steps);
    let mut d_min = Vec::with_capacity(gamma_steps * beta_steps);
    let mut allowable = Vec::with_capacity(gamma_steps * beta_steps);
    let mut prop3 = Vec::with_capacity(gamma_steps * beta_steps);
    for &beta in &beta_axis {
        for &gamma in &gamma_axis {
            let (c, d) = minimize_over_lambda(gamma, beta, lambda_resolution)?;
            c_min.push(c);
            d_min.push(d);
            allowable.push(c > 0.0 && d > 0.0);
            prop3.push(prop3_admissible(gamma, beta));
        }
    }
    Ok(RegionGrid {
        gamma_axis,
        beta_axis,
        c_min,
        d_min,
        allowable,
        prop3,
    })
}
