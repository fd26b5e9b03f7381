//! Shared helpers for the integration and acceptance suites: a seeded
//! random-instance generator, a law wrapper that records what the harness
//! feeds it, and the closed-loop battery runner used by the certificate
//! checks.

// Each test target uses a different subset of these helpers.
#![allow(dead_code)]

use mrac::error::Result;
use mrac::laws::{AdaptiveLaw, LawKind};
use mrac::lyapunov::CertMonitor;
use mrac::plant::{BasisFn, NonlinearBasis, ParamEstimate, PlantModel};
use mrac::sim::{run_closed_loop, RefInput, RunResult, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

/// One randomly drawn admissible closed-loop instance: plant, Schur-stable
/// reference with exact matching, true parameters, a perturbed initial
/// estimate and a bounded sinusoidal reference sequence.
pub struct TestInstance {
    pub scenario: Scenario,
    pub theta_star: ParamEstimate,
}

pub fn random_vector(rng: &mut StdRng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

fn random_schur(rng: &mut StdRng, n: usize, rho_target: f64) -> DMatrix<f64> {
    loop {
        let m = random_matrix(rng, n, n, 1.0);
        let rho = mrac::lti::spectral_radius(&m).unwrap();
        if rho > 1e-6 {
            return m * (rho_target / rho);
        }
    }
}

fn random_basis(rng: &mut StdRng, n: usize, p: usize) -> NonlinearBasis {
    let mut entries = Vec::with_capacity(p);
    for _ in 0..p {
        let index = rng.gen_range(0..n);
        let f = match rng.gen_range(0..3) {
            0 => BasisFn::Sine {
                index,
                amplitude: rng.gen_range(0.3..1.0),
                frequency: rng.gen_range(0.3..1.0),
            },
            1 => BasisFn::Tanh {
                index,
                scale: rng.gen_range(0.3..1.5),
            },
            _ => BasisFn::SatQuad { index },
        };
        let lip = f.natural_lipschitz().unwrap();
        entries.push((f, lip));
    }
    NonlinearBasis::new(entries).unwrap()
}

/// Draws dims `n <= 4`, `m <= 2`, `p <= 2` and an instance satisfying the
/// matching condition by construction.
pub fn random_instance(rng: &mut StdRng, horizon: usize) -> TestInstance {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=n.min(2));
    let p = rng.gen_range(0..=2);

    let (plant, a_m, theta_star) = loop {
        let b = random_matrix(rng, n, m, 1.0);
        if b.singular_values().min() < 0.3 {
            continue;
        }
        let rho = rng.gen_range(0.2..0.85);
        let a_m = random_schur(rng, n, rho);
        let k_star = random_matrix(rng, m, n, 0.5);
        let a_p = &a_m - &b * &k_star;
        let basis = random_basis(rng, n, p);
        let coeffs: Vec<DVector<f64>> =
            (0..p).map(|_| random_vector(rng, m, 0.5)).collect();
        match PlantModel::new(a_p, b, basis, coeffs) {
            Ok(plant) => {
                let theta_star =
                    ParamEstimate::from_parts(&k_star, plant.coeffs()).unwrap();
                break (plant, a_m, theta_star);
            }
            Err(_) => continue,
        }
    };

    // Initial estimate within O(1) of the truth keeps transients desk-scale.
    let theta0 = ParamEstimate::new(
        theta_star.matrix() + random_matrix(rng, m, n + p, 0.7),
    )
    .unwrap();

    // Bounded sinusoidal reference, ||r_k|| <= 1.
    let r_max = 1.0;
    let amp = rng.gen_range(0.2..(1.0 / (m as f64).sqrt()));
    let omega: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..0.3)).collect();
    let phase: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let seq: Vec<DVector<f64>> = (0..horizon)
        .map(|k| {
            DVector::from_fn(m, |i, _| amp * (omega[i] * k as f64 + phase[i]).sin())
        })
        .collect();

    let reference =
        mrac::plant::ReferenceModel::new(a_m, plant.b().clone(), r_max).unwrap();
    let scenario = Scenario {
        plant,
        reference,
        b_r: None,
        r_input: RefInput::Sequence(seq),
        horizon,
        x_p0: random_vector(rng, n, 1.0),
        x_m0: random_vector(rng, n, 1.0),
        theta0,
        theta_star: Some(theta_star.clone()),
    };
    TestInstance {
        scenario,
        theta_star,
    }
}

/// Law wrapper recording every `(theta, phi, eps)` triple the harness passes
/// in, so tests can audit exactly what the law consumed.
pub struct RecordingLaw<L> {
    pub inner: L,
    pub thetas: Vec<DMatrix<f64>>,
    pub phis: Vec<DVector<f64>>,
    pub epss: Vec<DVector<f64>>,
}

impl<L> RecordingLaw<L> {
    pub fn new(inner: L) -> Self {
        RecordingLaw {
            inner,
            thetas: Vec::new(),
            phis: Vec::new(),
            epss: Vec::new(),
        }
    }
}

impl<L: AdaptiveLaw> AdaptiveLaw for RecordingLaw<L> {
    fn update(
        &mut self,
        theta: &ParamEstimate,
        phi: &DVector<f64>,
        eps: &DVector<f64>,
    ) -> Result<ParamEstimate> {
        self.thetas.push(theta.matrix().clone());
        self.phis.push(phi.clone());
        self.epss.push(eps.clone());
        self.inner.update(theta, phi, eps)
    }

    fn kind(&self) -> LawKind {
        self.inner.kind()
    }

    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    fn auxiliary(&self) -> Option<&DMatrix<f64>> {
        self.inner.auxiliary()
    }
}

/// Runs one instance under a recording law with a (non-fail-fast) monitor
/// and returns everything the certificate and identity checks need.
pub struct BatteryRun<L> {
    pub result: RunResult,
    pub law: RecordingLaw<L>,
}

pub fn run_instance<L: AdaptiveLaw>(
    instance: &TestInstance,
    inner: L,
    monitor: Option<&mut CertMonitor>,
) -> BatteryRun<L> {
    let mut law = RecordingLaw::new(inner);
    let result = run_closed_loop(&instance.scenario, &mut law, monitor)
        .expect("battery instances must not diverge");
    BatteryRun { result, law }
}

/// Asserts the two error-model identities on every recorded step:
/// `eps_{k+1} = Theta_tilde_k phi_k` and
/// `e_{k+1} = A_m e_k + B eps_{k+1}`, both to `tol`.
pub fn assert_error_model_identities<L>(
    instance: &TestInstance,
    run: &BatteryRun<L>,
    tol: f64,
) {
    let a_m = instance.scenario.reference.a_m();
    let b = instance.scenario.plant.b();
    let theta_star = instance.theta_star.matrix();
    let records = &run.result.records;
    for (k, rec) in records.iter().enumerate() {
        let theta_k = &run.law.thetas[k];
        let algebraic = (theta_k - theta_star) * &rec.phi;
        let gap = (&rec.eps - algebraic).norm();
        assert!(gap <= tol, "eps identity off by {gap:.3e} at step {k}");

        let e_next = if k + 1 < records.len() {
            records[k + 1].e.clone()
        } else {
            run.result.final_e()
        };
        let recon = (a_m * &rec.e + b * &rec.eps - e_next).norm();
        assert!(recon <= tol, "state-error reconstruction off by {recon:.3e} at step {k}");
    }
}
