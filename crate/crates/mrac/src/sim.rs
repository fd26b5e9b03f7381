//! Closed-loop simulation and the Monte Carlo experiment harness.
//!
//! Per step the loop builds the regressor from the measured state, applies
//! the certainty-equivalence input, steps plant and reference, forms the
//! state and prediction errors, and only then hands `(phi_k, eps_{k+1})` to
//! the adaptive law — the law never sees anything that is not measurable by
//! step k+1.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::{
    to_dmatrix, to_dvector, GainModeConfig, LawConfig, MonitorConfig, ReferenceInputConfig,
    RunConfig, Theta0Config,
};
use crate::error::{Error, Result};
use crate::error_model::{normalizer, ErrorConverter};
use crate::laws::{AdaptiveLaw, GainMode, GdLaw, HotLaw, LawKind};
use crate::lti::{discretize_zoh, solve_dlqr, zoh_matrices, StateSpace};
use crate::lyapunov::{CertMonitor, CertificateRecord};
use crate::plant::{
    build_regressor, control_input, matching_gain, step_plant, step_reference, NonlinearBasis,
    ParamEstimate, PlantModel, ReferenceModel,
};

/// State norm beyond which a run is declared diverged. Certified laws never
/// get near it, so crossing it flags a bug or an inadmissible setup cheaply.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Reference-input source.
#[derive(Debug, Clone)]
pub enum RefInput {
    Constant(DVector<f64>),
    Sequence(Vec<DVector<f64>>),
}

impl RefInput {
    pub fn at(&self, k: usize) -> &DVector<f64> {
        match self {
            RefInput::Constant(v) => v,
            RefInput::Sequence(s) => &s[k],
        }
    }
}

/// Everything a single closed-loop run needs besides the law instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantModel,
    pub reference: ReferenceModel,
    /// When present, the reference input enters plant and reference model
    /// through this matrix and the control input carries no reference term.
    pub b_r: Option<DMatrix<f64>>,
    pub r_input: RefInput,
    pub horizon: usize,
    pub x_p0: DVector<f64>,
    pub x_m0: DVector<f64>,
    pub theta0: ParamEstimate,
    /// True parameters, available only when the matching condition resolves;
    /// required by monitors and test oracles, never by the controller.
    pub theta_star: Option<ParamEstimate>,
}

/// Per-step log entry.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub x_p: DVector<f64>,
    pub x_m: DVector<f64>,
    /// State error `e_k = x_p - x_m`.
    pub e: DVector<f64>,
    /// Prediction error `eps_{k+1}` formed from the measured next state.
    pub eps: DVector<f64>,
    pub u: DVector<f64>,
    pub phi: DVector<f64>,
    /// Normalizer `N_k`.
    pub n: f64,
    pub cert: Option<CertificateRecord>,
}

/// Outcome of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub final_x_p: DVector<f64>,
    pub final_x_m: DVector<f64>,
    pub theta_final: ParamEstimate,
    /// Steps at which the certificate monitor tripped, if one ran.
    pub violations: Vec<usize>,
}

impl RunResult {
    pub fn final_e(&self) -> DVector<f64> {
        &self.final_x_p - &self.final_x_m
    }

    pub fn final_e_norm(&self) -> f64 {
        self.final_e().norm()
    }

    pub fn final_eps_norm(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.eps.norm())
    }

    /// Smallest state-error norm seen along the run (including the final
    /// state).
    pub fn min_e_norm(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.e.norm())
            .fold(self.final_e_norm(), f64::min)
    }
}

/// Largest `||eps||^2 / N` over the last `window` records.
pub fn tail_max_eps_ratio(records: &[StepRecord], window: usize) -> f64 {
    let start = records.len().saturating_sub(window);
    records[start..]
        .iter()
        .map(|r| r.eps.norm_squared() / r.n)
        .fold(0.0, f64::max)
}

/// A configured adaptive-law instance.
#[derive(Debug, Clone)]
pub enum LawInstance {
    Gd(GdLaw),
    Hot(HotLaw),
}

impl AdaptiveLaw for LawInstance {
    fn update(
        &mut self,
        theta: &ParamEstimate,
        phi: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> Result<ParamEstimate> {
        match self {
            LawInstance::Gd(law) => law.update(theta, phi, eps),
            LawInstance::Hot(law) => law.update(theta, phi, eps),
        }
    }

    fn kind(&self) -> LawKind {
        match self {
            LawInstance::Gd(_) => LawKind::Gd,
            LawInstance::Hot(_) => LawKind::Hot,
        }
    }

    fn mu(&self) -> f64 {
        match self {
            LawInstance::Gd(law) => law.mu(),
            LawInstance::Hot(law) => law.mu(),
        }
    }

    fn auxiliary(&self) -> Option<&DMatrix<f64>> {
        match self {
            LawInstance::Gd(_) => None,
            LawInstance::Hot(law) => Some(law.xi()),
        }
    }
}

/// Instantiates the law named by the configuration, validating its gains.
pub fn make_law(cfg: &LawConfig, theta0: &ParamEstimate) -> Result<LawInstance> {
    match *cfg {
        LawConfig::Gd { gamma, mu } => Ok(LawInstance::Gd(GdLaw::new(gamma, mu)?)),
        LawConfig::Hot {
            gamma,
            beta,
            mu,
            gain_mode,
        } => {
            let mode = match gain_mode {
                GainModeConfig::Proposition => GainMode::Proposition,
                GainModeConfig::ExtendedRegion => GainMode::ExtendedRegion,
            };
            Ok(LawInstance::Hot(HotLaw::new(gamma, beta, mu, mode, theta0)?))
        }
    }
}

/// Builds the certificate monitor matching the configured law and gain mode.
pub fn make_monitor(
    cfg: &LawConfig,
    theta_star: ParamEstimate,
    fail_fast: bool,
) -> CertMonitor {
    match *cfg {
        LawConfig::Gd { gamma, .. } => CertMonitor::new_gd(theta_star, gamma, fail_fast),
        LawConfig::Hot {
            gamma,
            beta,
            gain_mode: GainModeConfig::Proposition,
            ..
        } => CertMonitor::new_hot(theta_star, gamma, beta, fail_fast),
        LawConfig::Hot {
            gamma,
            beta,
            gain_mode: GainModeConfig::ExtendedRegion,
            ..
        } => {
            let point = crate::gain_region::check_point(
                gamma,
                beta,
                crate::gain_region::DEFAULT_LAMBDA_RESOLUTION,
            );
            CertMonitor::new_hot_extended(theta_star, point.d_min, fail_fast)
        }
    }
}

/// A scenario assembled from a [`RunConfig`], plus the pieces the harness
/// commands need to rebuild per-trial variants.
#[derive(Debug, Clone)]
pub struct Built {
    pub scenario: Scenario,
    pub law: LawConfig,
    pub monitor: MonitorConfig,
    /// LQR gain of the nominal dynamics, when the reference came from a
    /// recipe.
    pub nominal_gain: Option<DMatrix<f64>>,
    pub seed: u64,
}

/// Resolves a configuration into matrices, models and initial conditions.
pub fn build_scenario(cfg: &RunConfig) -> Result<Built> {
    if cfg.horizon == 0 {
        return Err(Error::config("horizon must be >= 1"));
    }
    if !(cfg.r_max >= 0.0) {
        return Err(Error::config("r_max must be >= 0"));
    }

    // Discrete dynamics, either given directly or via zero-order hold.
    let dyn_cfg = &cfg.plant.dynamics;
    let (a_p, b, b_r_from_continuous, dt) = match (&dyn_cfg.a, &dyn_cfg.b, &dyn_cfg.continuous) {
        (Some(a), Some(b), None) => (
            to_dmatrix(a, "plant.dynamics.a")?,
            to_dmatrix(b, "plant.dynamics.b")?,
            None,
            1.0,
        ),
        (None, None, Some(cont)) => {
            let a_c = to_dmatrix(&cont.a, "plant.dynamics.continuous.a")?;
            let b_c = to_dmatrix(&cont.b, "plant.dynamics.continuous.b")?;
            match &cont.b_r {
                Some(b_r_rows) => {
                    let b_rc = to_dmatrix(b_r_rows, "plant.dynamics.continuous.b_r")?;
                    if b_rc.nrows() != a_c.nrows() {
                        return Err(Error::config("continuous b_r row count mismatch"));
                    }
                    // Discretize control and reference columns in one pass;
                    // the stack itself has no rank requirement.
                    let n = a_c.nrows();
                    let m = b_c.ncols();
                    let mut stacked = DMatrix::zeros(n, m + b_rc.ncols());
                    stacked.view_mut((0, 0), (n, m)).copy_from(&b_c);
                    stacked
                        .view_mut((0, m), (n, b_rc.ncols()))
                        .copy_from(&b_rc);
                    let (a_d, both) = zoh_matrices(&a_c, &stacked, cont.dt)?;
                    let b_d = both.view((0, 0), (n, m)).into_owned();
                    let b_r_d = both.view((0, m), (n, b_rc.ncols())).into_owned();
                    (a_d, b_d, Some(b_r_d), cont.dt)
                }
                None => {
                    let ss = discretize_zoh(&a_c, &b_c, cont.dt)?;
                    (ss.a().clone(), ss.b().clone(), None, cont.dt)
                }
            }
        }
        _ => {
            return Err(Error::config(
                "plant.dynamics needs either both a and b, or continuous",
            ))
        }
    };

    let b_r = match (&cfg.plant.b_r, b_r_from_continuous) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "b_r given both as a discrete matrix and inside continuous dynamics",
            ))
        }
        (Some(rows), None) => Some(to_dmatrix(rows, "plant.b_r")?),
        (None, from_cont) => from_cont,
    };
    if let Some(b_r_mat) = &b_r {
        if b_r_mat.nrows() != a_p.nrows() {
            return Err(Error::config("b_r row count must match the state dimension"));
        }
    }

    let mut entries = Vec::with_capacity(cfg.plant.basis.len());
    for record in &cfg.plant.basis {
        entries.push(record.resolve()?);
    }
    let basis = NonlinearBasis::new(entries)?;
    let m = b.ncols();
    let coeffs: Vec<DVector<f64>> = cfg.plant.coeffs.iter().map(|c| to_dvector(c)).collect();
    if coeffs.iter().any(|c| c.len() != m) {
        return Err(Error::config(format!(
            "every coefficient vector must have length {m}"
        )));
    }
    let plant = PlantModel::new(a_p, b, basis, coeffs)?;
    let (n, p) = (plant.state_dim(), plant.basis_len());

    // Reference model: explicit A_m, or LQR on the nominal dynamics.
    let (a_m, nominal_gain) = match (&cfg.reference.a_m, &cfg.reference.lqr) {
        (Some(rows), None) => (to_dmatrix(rows, "reference.a_m")?, None),
        (None, Some(recipe)) => {
            let q = to_dmatrix(&recipe.q, "reference.lqr.q")?;
            let r = to_dmatrix(&recipe.r, "reference.lqr.r")?;
            let ss = StateSpace::new(plant.a_p().clone(), plant.b().clone(), dt)?;
            let k = solve_dlqr(&ss, &q, &r)?;
            (plant.a_p() + plant.b() * &k, Some(k))
        }
        _ => {
            return Err(Error::config(
                "reference needs exactly one of a_m or lqr",
            ))
        }
    };
    let ref_input_map = b_r.clone().unwrap_or_else(|| plant.b().clone());
    let reference = ReferenceModel::new(a_m.clone(), ref_input_map, cfg.r_max)?;
    let m_r = reference.b().ncols();

    let r_input = match &cfg.reference_input {
        ReferenceInputConfig::Constant(v) => {
            let r = to_dvector(v);
            if r.len() != m_r {
                return Err(Error::config(format!(
                    "reference input must have length {m_r}"
                )));
            }
            if r.norm() > cfg.r_max {
                return Err(Error::config("constant reference input exceeds r_max"));
            }
            RefInput::Constant(r)
        }
        ReferenceInputConfig::Sequence(seq) => {
            if seq.len() < cfg.horizon {
                return Err(Error::config(format!(
                    "reference sequence has {} entries, horizon is {}",
                    seq.len(),
                    cfg.horizon
                )));
            }
            let mut out = Vec::with_capacity(seq.len());
            for (i, v) in seq.iter().enumerate() {
                let r = to_dvector(v);
                if r.len() != m_r {
                    return Err(Error::config(format!(
                        "reference sequence entry {i} must have length {m_r}"
                    )));
                }
                if r.norm() > cfg.r_max {
                    return Err(Error::config(format!(
                        "reference sequence entry {i} exceeds r_max"
                    )));
                }
                out.push(r);
            }
            RefInput::Sequence(out)
        }
    };

    let theta_cols = n + p;
    let theta0 = match &cfg.theta0 {
        Theta0Config::Zeros => ParamEstimate::zeros(m, theta_cols),
        Theta0Config::NominalGain => {
            let k = nominal_gain.as_ref().ok_or_else(|| {
                Error::config("theta0 = nominal_gain requires a reference.lqr recipe")
            })?;
            let mut mat = DMatrix::zeros(m, theta_cols);
            mat.view_mut((0, 0), (m, n)).copy_from(k);
            ParamEstimate::new(mat)?
        }
        Theta0Config::Matrix(rows) => {
            let mat = to_dmatrix(rows, "theta0.matrix")?;
            if mat.nrows() != m || mat.ncols() != theta_cols {
                return Err(Error::config(format!(
                    "theta0 must be {m}x{theta_cols}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            ParamEstimate::new(mat)?
        }
    };

    let theta_star = match matching_gain(&plant, &a_m)? {
        Some(k_star) => Some(ParamEstimate::from_parts(&k_star, plant.coeffs())?),
        None => None,
    };
    if cfg.monitor.enabled && theta_star.is_none() {
        return Err(Error::config(
            "monitoring requires the matching condition to hold for (plant, A_m)",
        ));
    }

    let x_p0 = match &cfg.x_p0 {
        Some(v) => {
            if v.len() != n {
                return Err(Error::config(format!("x_p0 must have length {n}")));
            }
            to_dvector(v)
        }
        None => DVector::zeros(n),
    };
    let x_m0 = match &cfg.x_m0 {
        Some(v) => {
            if v.len() != n {
                return Err(Error::config(format!("x_m0 must have length {n}")));
            }
            to_dvector(v)
        }
        None => DVector::zeros(n),
    };

    Ok(Built {
        scenario: Scenario {
            plant,
            reference,
            b_r,
            r_input,
            horizon: cfg.horizon,
            x_p0,
            x_m0,
            theta0,
            theta_star,
        },
        law: cfg.law.clone(),
        monitor: cfg.monitor,
        nominal_gain,
        seed: cfg.seed,
    })
}

/// Runs the closed loop: regressor, control, plant and reference steps,
/// error conversion, then the adaptive-law update, in that order each step.
pub fn run_closed_loop(
    sc: &Scenario,
    law: &mut dyn AdaptiveLaw,
    mut monitor: Option<&mut CertMonitor>,
) -> Result<RunResult> {
    let converter = ErrorConverter::new(sc.reference.a_m().clone(), sc.plant.b())?;
    let m = sc.plant.input_dim();
    let zero_r = DVector::zeros(m);

    let mut x_p = sc.x_p0.clone();
    let mut x_m = sc.x_m0.clone();
    let mut theta = sc.theta0.clone();
    if let Some(mon) = monitor.as_deref_mut() {
        mon.begin(&theta, law.auxiliary());
    }

    let mut records = Vec::with_capacity(sc.horizon);
    for k in 0..sc.horizon {
        let r_k = sc.r_input.at(k);
        let phi = build_regressor(&x_p, sc.plant.basis());
        // With a dedicated reference-input matrix the control carries no
        // reference term; the input rides in through b_r below.
        let u = if sc.b_r.is_some() {
            control_input(&theta, &phi, &zero_r)?
        } else {
            control_input(&theta, &phi, r_k)?
        };
        let mut x_p_next = step_plant(&sc.plant, &x_p, &u)?;
        if let Some(b_r) = &sc.b_r {
            x_p_next += b_r * r_k;
        }
        let x_m_next = step_reference(&sc.reference, &x_m, r_k)?;

        let e = &x_p - &x_m;
        let e_next = &x_p_next - &x_m_next;
        let eps = converter.prediction_error(&e_next, &e);
        let n_k = normalizer(&phi, law.mu())?;

        let theta_next = law.update(&theta, &phi, &eps)?;
        let cert = match monitor.as_deref_mut() {
            Some(mon) => Some(mon.step(k, &theta_next, law.auxiliary(), &eps, n_k)?),
            None => None,
        };

        records.push(StepRecord {
            k,
            x_p: x_p.clone(),
            x_m: x_m.clone(),
            e,
            eps,
            u,
            phi,
            n: n_k,
            cert,
        });

        let norm = x_p_next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged { step: k, norm });
        }
        x_p = x_p_next;
        x_m = x_m_next;
        theta = theta_next;
    }

    Ok(RunResult {
        records,
        final_x_p: x_p,
        final_x_m: x_m,
        theta_final: theta,
        violations: monitor.map_or_else(Vec::new, |m| m.violations().to_vec()),
    })
}

/// Convenience wrapper: build, instantiate the law (and monitor, if
/// enabled), run.
pub fn run_from_config(cfg: &RunConfig) -> Result<(Built, RunResult)> {
    let built = build_scenario(cfg)?;
    let mut law = make_law(&built.law, &built.scenario.theta0)?;
    let mut monitor = if built.monitor.enabled {
        let theta_star = built
            .scenario
            .theta_star
            .clone()
            .expect("build_scenario guarantees theta_star when monitoring");
        Some(make_monitor(&built.law, theta_star, built.monitor.fail_fast))
    } else {
        None
    };
    let result = run_closed_loop(&built.scenario, &mut law, monitor.as_mut())?;
    Ok((built, result))
}

/// Per-step percentile bands over trials for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct StatBands {
    pub mean: Vec<f64>,
    pub p05: Vec<f64>,
    pub p25: Vec<f64>,
    pub p75: Vec<f64>,
    pub p95: Vec<f64>,
}

/// Aggregated Monte Carlo statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub e: StatBands,
    pub eps: StatBands,
    /// `(trial index, step index)` of diverged trials, excluded from the
    /// bands.
    pub diverged: Vec<(usize, usize)>,
    /// Total certificate-monitor breaches across trials (0 when monitoring
    /// is off or clean).
    pub monitor_violations: usize,
}

impl TrialStats {
    pub fn diverged_count(&self) -> usize {
        self.diverged.len()
    }

    pub fn steps(&self) -> usize {
        self.e.mean.len()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial sub-seed, independent of execution order.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial.wrapping_add(1)))
}

/// Nearest-rank percentile of a sorted sample.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let t = sorted.len();
    let rank = ((p / 100.0) * t as f64).ceil().max(1.0) as usize;
    sorted[rank.min(t) - 1]
}

fn bands(per_trial: &[Vec<f64>], steps: usize) -> StatBands {
    let t = per_trial.len();
    let mut out = StatBands {
        mean: Vec::with_capacity(steps),
        p05: Vec::with_capacity(steps),
        p25: Vec::with_capacity(steps),
        p75: Vec::with_capacity(steps),
        p95: Vec::with_capacity(steps),
    };
    let mut column = vec![0.0; t];
    for k in 0..steps {
        for (i, trial) in per_trial.iter().enumerate() {
            column[i] = trial[k];
        }
        out.mean.push(column.iter().sum::<f64>() / t as f64);
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.p05.push(nearest_rank(&column, 5.0));
        out.p25.push(nearest_rank(&column, 25.0));
        out.p75.push(nearest_rank(&column, 75.0));
        out.p95.push(nearest_rank(&column, 95.0));
    }
    out
}

/// Runs the Monte Carlo protocol: per trial, the nominal LQR gain is
/// perturbed elementwise by i.i.d. `Uniform(low, high)` draws to produce the
/// true gain, the plant is rebuilt as `A_p = A_m - B K_star`, and the closed
/// loop is simulated. Trials are sub-seeded deterministically from
/// `(seed, trial)`; diverged trials are recorded and excluded from the
/// percentile bands.
pub fn run_monte_carlo(
    cfg: &RunConfig,
    trials: usize,
    perturb_low: f64,
    perturb_high: f64,
) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    if perturb_low > perturb_high {
        return Err(Error::config("perturbation range is empty"));
    }
    let built = build_scenario(cfg)?;
    let nominal_gain = built.nominal_gain.as_ref().ok_or_else(|| {
        Error::config("monte carlo requires a reference.lqr recipe (nominal gain)")
    })?;
    let base = &built.scenario;
    let a_m = base.reference.a_m().clone();
    let b = base.plant.b().clone();
    let (m, n) = (nominal_gain.nrows(), nominal_gain.ncols());

    let mut e_norms: Vec<Vec<f64>> = Vec::with_capacity(trials);
    let mut eps_norms: Vec<Vec<f64>> = Vec::with_capacity(trials);
    let mut diverged = Vec::new();
    let mut monitor_violations = 0usize;

    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(trial_seed(built.seed, trial as u64));
        let factors =
            DMatrix::from_fn(m, n, |_, _| rng.gen_range(perturb_low..=perturb_high));
        let k_star = nominal_gain.component_mul(&factors);
        let a_p = &a_m - &b * &k_star;
        let plant = PlantModel::new(
            a_p,
            b.clone(),
            base.plant.basis().clone(),
            base.plant.coeffs().to_vec(),
        )?;
        let theta_star = ParamEstimate::from_parts(&k_star, plant.coeffs())?;

        let scenario = Scenario {
            plant,
            reference: base.reference.clone(),
            b_r: base.b_r.clone(),
            r_input: base.r_input.clone(),
            horizon: base.horizon,
            x_p0: base.x_p0.clone(),
            x_m0: base.x_m0.clone(),
            theta0: base.theta0.clone(),
            theta_star: Some(theta_star.clone()),
        };
        let mut law = make_law(&built.law, &scenario.theta0)?;
        let mut monitor = if built.monitor.enabled {
            Some(make_monitor(&built.law, theta_star, built.monitor.fail_fast))
        } else {
            None
        };

        match run_closed_loop(&scenario, &mut law, monitor.as_mut()) {
            Ok(result) => {
                monitor_violations += result.violations.len();
                e_norms.push(result.records.iter().map(|r| r.e.norm()).collect());
                eps_norms.push(result.records.iter().map(|r| r.eps.norm()).collect());
            }
            Err(Error::Diverged { step, .. }) => diverged.push((trial, step)),
            Err(other) => return Err(other),
        }
    }

    if e_norms.is_empty() {
        return Err(Error::config(format!(
            "all {trials} trials diverged; no statistics to aggregate"
        )));
    }
    Ok(TrialStats {
        e: bands(&e_norms, base.horizon),
        eps: bands(&eps_norms, base.horizon),
        diverged,
        monitor_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use approx::assert_relative_eq;

    fn scalar_regulation_config(theta0_matched: bool) -> RunConfig {
        // Unstable scalar plant regulated to a Schur-stable reference.
        let theta0 = if theta0_matched {
            r#"{"matrix": [[-0.7]]}"#
        } else {
            r#""zeros""#
        };
        parse_config(&format!(
            r#"{{
                "plant": {{"dynamics": {{"a": [[1.2]], "b": [[1.0]]}}}},
                "reference": {{"a_m": [[0.5]]}},
                "r_max": 10.0,
                "reference_input": {{"constant": [0.0]}},
                "law": {{"law": "gd", "gamma": 1.0, "mu": 1.0}},
                "horizon": 1000,
                "x_p0": [1.0],
                "x_m0": [0.0],
                "theta0": {theta0},
                "seed": 1,
                "monitor": {{"enabled": true, "fail_fast": true}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn matched_initialization_tracks_exactly_from_equal_states() {
        let mut cfg = scalar_regulation_config(true);
        cfg.x_p0 = Some(vec![0.3]);
        cfg.x_m0 = Some(vec![0.3]);
        let (_, result) = run_from_config(&cfg).unwrap();
        for rec in &result.records {
            assert!(rec.e.norm() < 1e-12);
            assert!(rec.eps.norm() < 1e-12);
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut cfg = scalar_regulation_config(false);
        cfg.x_p0 = Some(vec![0.0]);
        let (_, result) = run_from_config(&cfg).unwrap();
        assert_eq!(result.final_e_norm(), 0.0);
        for rec in &result.records {
            assert_eq!(rec.x_p.norm(), 0.0);
            assert_eq!(rec.u.norm(), 0.0);
        }
    }

    #[test]
    fn scalar_regulation_converges_with_monotone_certificate() {
        let cfg = scalar_regulation_config(false);
        let (built, result) = run_from_config(&cfg).unwrap();
        assert!(built.scenario.theta_star.is_some());
        assert!(result.violations.is_empty());
        assert!(
            result.final_e_norm() < 1e-6,
            "final error {}",
            result.final_e_norm()
        );
        // V_k nonincreasing throughout.
        let vs: Vec<f64> = result.records.iter().map(|r| r.cert.unwrap().v).collect();
        for w in vs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn diverged_run_reports_step_index() {
        // A violently unstable plant with an adaptation gain too small to
        // catch it within the guard: the state crosses the divergence norm
        // in a handful of steps.
        let mut cfg = scalar_regulation_config(false);
        cfg.plant.dynamics.a = Some(vec![vec![40.0]]);
        cfg.law = LawConfig::Gd { gamma: 1e-9, mu: 1.0 };
        cfg.monitor.enabled = false;
        cfg.horizon = 2000;
        let built = build_scenario(&cfg).unwrap();
        let mut law = make_law(&built.law, &built.scenario.theta0).unwrap();
        let err = run_closed_loop(&built.scenario, &mut law, None).unwrap_err();
        match err {
            Error::Diverged { step, norm } => {
                assert!(norm > DIVERGENCE_NORM);
                assert!(step < 20, "diverged at step {step}");
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn continuous_b_r_parallel_to_b_is_accepted() {
        // The stacked [B | B_r] columns may be dependent; only B itself
        // needs full column rank.
        let cfg = parse_config(
            r#"{
                "plant": {
                    "dynamics": {"continuous": {
                        "a": [[-1.0]], "b": [[1.0]], "b_r": [[2.0]], "dt": 0.01
                    }}
                },
                "reference": {"a_m": [[0.5]]},
                "r_max": 1.0,
                "reference_input": {"constant": [0.3]},
                "law": {"law": "gd", "gamma": 1.0, "mu": 1.0},
                "horizon": 50,
                "theta0": "zeros"
            }"#,
        )
        .unwrap();
        let built = build_scenario(&cfg).unwrap();
        assert!(built.scenario.b_r.is_some());
        let (_, result) = run_from_config(&cfg).unwrap();
        assert_eq!(result.records.len(), 50);
    }

    #[test]
    fn trial_seeds_are_distinct_and_deterministic() {
        let a = trial_seed(42, 0);
        let b = trial_seed(42, 1);
        let c = trial_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, trial_seed(42, 0));
    }

    #[test]
    fn nearest_rank_percentiles_are_order_statistics() {
        let sorted: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(nearest_rank(&sorted, 5.0), 5.0);
        assert_relative_eq!(nearest_rank(&sorted, 25.0), 25.0);
        assert_relative_eq!(nearest_rank(&sorted, 95.0), 95.0);
        let tiny = vec![7.0];
        assert_relative_eq!(nearest_rank(&tiny, 5.0), 7.0);
        assert_relative_eq!(nearest_rank(&tiny, 95.0), 7.0);
    }
}
