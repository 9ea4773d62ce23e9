//! Quantum gradient and Newton steps on post-selected branches.
//!
//! A step prepares `x (cos θ|0⟩ − i sin θ|1⟩)`, multiplies `ξ_D D̃` (and then
//! `ξ_H H̃⁻¹`) onto the `|1⟩` branch and post-selects the ancilla on
//! `(|0⟩ + i|1⟩)/√2`. The accepted branch is `(cos θ x − sin θ w)/√2` with
//! `w = ξ_D D̃x` or `ξ_D ξ_H H̃⁻¹D̃x`, so its norm squared is the success
//! probability and its direction the projected update.

mod resources;

pub use resources::{estimate_resources, ResourceEstimate, ResourceParams, RESOURCE_CAVEAT};

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hamsim::perturb_state;
use crate::linalg::{self, c, CMatrix, CVector};
use crate::operators::{self, AuxiliaryOperator};
use crate::phase_estimation::{apply_matrix_inversion, apply_matrix_multiplication, PEConfig};
use crate::rng::{derive_seed, stream_rng, Stream, DEFAULT_SEED};
use crate::state::{DensityMatrix, QuantumState};
use crate::tensor_poly::{norm_bounds, PolynomialProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gradient,
    Newton,
    NewtonSaddleFree,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::Newton => "newton",
            Method::NewtonSaddleFree => "newton_saddle_free",
        }
    }

    pub fn is_newton(self) -> bool {
        self != Method::Gradient
    }
}

/// How `D(x)` and `H(x)` are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorBackend {
    /// Direct contraction of `A` against `xx†`.
    Analytic,
    /// Partial traces of the auxiliary matrices against `ρ^{⊗p−1}`.
    PartialTrace,
    /// Effective generator seen by the sample-based channel: partial traces
    /// against `draws` independent sets of perturbed copies, averaged.
    SampledChannel { draws: usize, beta: f64 },
}

impl OperatorBackend {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorBackend::Analytic => "analytic",
            OperatorBackend::PartialTrace => "partial_trace",
            OperatorBackend::SampledChannel { .. } => "sampled_channel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub eta: f64,
    pub xi_d: f64,
    pub xi_h: f64,
    /// `ε_D` for gradient steps, `ε_nwt` for Newton steps.
    pub epsilon_step: f64,
    pub pe: PEConfig,
    pub method: Method,
    pub backend: OperatorBackend,
    /// Seeds the perturbation stream of the sampled backend.
    pub seed: u64,
}

impl StepConfig {
    /// Gradient step with `ξ_D = min(2η, 0.9/Λ_D)`.
    pub fn gradient(problem: &PolynomialProblem, eta: f64, pe: PEConfig) -> Self {
        let lambda_d = norm_bounds(problem).lambda_d;
        let xi_d = if lambda_d > 0.0 {
            (2.0 * eta).min(0.9 / lambda_d)
        } else {
            2.0 * eta
        };
        Self {
            eta,
            xi_d,
            xi_h: 1.0,
            epsilon_step: pe.epsilon,
            pe,
            method: Method::Gradient,
            backend: OperatorBackend::Analytic,
            seed: DEFAULT_SEED,
        }
    }

    /// Newton step with `ξ_D = 0.9/Λ_D` and `ξ_H = 0.9·λ_cut`, the largest
    /// values inside the admissible ranges, so that `ξ_D ξ_H ≥ η` holds
    /// whenever the step size does.
    pub fn newton(problem: &PolynomialProblem, eta: f64, pe: PEConfig, saddle_free: bool) -> Self {
        let lambda_d = norm_bounds(problem).lambda_d;
        Self {
            eta,
            xi_d: if lambda_d > 0.0 { 0.9 / lambda_d } else { 1.0 },
            xi_h: 0.9 * pe.lambda_cut,
            epsilon_step: pe.epsilon,
            pe,
            method: if saddle_free {
                Method::NewtonSaddleFree
            } else {
                Method::Newton
            },
            backend: OperatorBackend::Analytic,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_backend(mut self, backend: OperatorBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Step-size and ξ preconditions against the problem's norm bounds.
    pub fn validate(&self, problem: &PolynomialProblem) -> Result<()> {
        self.pe.validate()?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.epsilon_step.is_finite() && self.epsilon_step >= 0.0) {
            return bad(format!("epsilon_step must be >= 0, got {}", self.epsilon_step));
        }
        if let OperatorBackend::SampledChannel { draws, beta } = self.backend {
            if draws == 0 || !(0.0..1.0).contains(&beta) {
                return bad(format!("sampled backend needs draws >= 1 and beta in [0, 1), got {draws}, {beta}"));
            }
        }
        let lambda_d = norm_bounds(problem).lambda_d;
        let inv_d = if lambda_d > 0.0 { 1.0 / lambda_d } else { f64::INFINITY };
        if !(self.xi_d < inv_d && self.xi_d > 0.0) {
            return bad(format!("xi_D = {} must lie in (0, 1/Lambda_D = {inv_d})", self.xi_d));
        }
        match self.method {
            Method::Gradient => {
                if self.eta >= 0.5 * inv_d {
                    return bad(format!("eta = {} must be below 1/(2 Lambda_D) = {}", self.eta, 0.5 * inv_d));
                }
                if self.xi_d < self.eta {
                    return bad(format!("xi_D = {} must be >= eta = {}", self.xi_d, self.eta));
                }
            }
            Method::Newton | Method::NewtonSaddleFree => {
                let lambda_hinv = 1.0 / self.pe.lambda_cut;
                let scale = lambda_d.max(lambda_hinv).max(lambda_d * lambda_hinv);
                if self.eta >= 0.5 / scale {
                    return bad(format!("eta = {} must be below {}", self.eta, 0.5 / scale));
                }
                if !(self.xi_h > 0.0 && self.xi_h < self.pe.lambda_cut) {
                    return bad(format!(
                        "xi_H = {} must lie in (0, lambda_cut = {})",
                        self.xi_h, self.pe.lambda_cut
                    ));
                }
                if self.xi_d * self.xi_h < self.eta {
                    return bad(format!(
                        "xi_D xi_H = {} must be >= eta = {}",
                        self.xi_d * self.xi_h,
                        self.eta
                    ));
                }
            }
        }
        Ok(())
    }

    /// Copies of the current state one attempt consumes.
    pub fn samples_per_attempt(&self, p: usize) -> u64 {
        let ops = if self.method.is_newton() { 2 } else { 1 };
        match self.backend {
            OperatorBackend::Analytic => 1,
            OperatorBackend::PartialTrace => 1 + ops * (p as u64 - 1),
            OperatorBackend::SampledChannel { draws, .. } => ops * (draws * p) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state_after: QuantumState,
    pub objective: f64,
    pub success_prob: f64,
    /// Normalization constant `C_D` or `C_H`.
    pub c_norm: f64,
    pub theta: f64,
    pub epsilon_accum: f64,
    pub samples_consumed: u64,
    /// Post-selection attempts until acceptance (1 outside sampling mode).
    pub attempts: u64,
}

/// `θ = arctan(η/ξ)`.
pub fn choose_theta(eta: f64, xi: f64) -> Result<f64> {
    if !(eta > 0.0 && xi >= eta && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need xi >= eta > 0, got eta = {eta}, xi = {xi}"
        )));
    }
    Ok((eta / xi).atan())
}

fn check_input(x: &QuantumState, problem: &PolynomialProblem) -> Result<()> {
    if !problem.is_homogeneous() {
        return Err(Error::Unsupported(
            "quantum steps are defined for homogeneous problems only; use the classical reference".into(),
        ));
    }
    if x.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.dim(),
        });
    }
    Ok(())
}

/// Objective at a state, read off after removing the global phase.
pub fn objective_of(problem: &PolynomialProblem, x: &QuantumState) -> Result<f64> {
    let x = x.canonical_phase();
    if !x.is_real(1e-9) {
        log::warn!("objective evaluated on the real part of a complex state");
    }
    problem.evaluate(&x.real_part())
}

/// `kron(ρ₁, …, ρ_k, I)`.
fn copies_then_identity(copies: &[DensityMatrix], nd: usize) -> CMatrix {
    let mut joint = CMatrix::from_element(1, 1, linalg::ONE);
    for rho in copies {
        joint = linalg::kron(&joint, rho.matrix());
    }
    linalg::kron(&joint, &linalg::identity(nd))
}

fn traced_generator(aux: &AuxiliaryOperator, copies: &[DensityMatrix], left: bool) -> Result<CMatrix> {
    let nd = aux.n_dim;
    let joint = copies_then_identity(copies, nd);
    let prod = if left { joint * &aux.data } else { &aux.data * joint };
    Ok(linalg::hermitize(&operators::partial_trace(
        &prod,
        &vec![nd; aux.p],
        &[aux.p - 1],
    )?))
}

/// `D(x)` and, for Newton steps, `H(x)` from the configured backend.
fn build_operators(
    x: &QuantumState,
    problem: &PolynomialProblem,
    cfg: &StepConfig,
) -> Result<(CMatrix, Option<CMatrix>)> {
    let a = problem.hom();
    let newton = cfg.method.is_newton();
    match cfg.backend {
        OperatorBackend::Analytic => {
            let d = a.gradient_operator_contracted(x.density().matrix())?;
            let h = if newton {
                let xr = x.canonical_phase();
                if !xr.is_real(1e-9) {
                    return Err(Error::Unsupported(
                        "analytic Hessian needs a real state; use the partial_trace backend".into(),
                    ));
                }
                Some(linalg::to_complex_matrix(&problem.hessian(&xr.real_part())?))
            } else {
                None
            };
            Ok((d, h))
        }
        OperatorBackend::PartialTrace => {
            let rho = x.density();
            let md = operators::build_md(a);
            let d = operators::gradient_operator_from(&md, &rho)?;
            let h = if newton {
                Some(operators::hessian_part_h1(&operators::build_mh1(a), &rho)? + &d)
            } else {
                None
            };
            Ok((d, h))
        }
        OperatorBackend::SampledChannel { draws, beta } => {
            let p = a.p();
            let nd = a.dim();
            let md = operators::build_md(a);
            let mh1 = if newton && p >= 2 {
                Some(operators::build_mh1(a))
            } else {
                None
            };
            let mut rng = stream_rng(cfg.seed, Stream::Perturbation, 0);
            let mut d = CMatrix::zeros(nd, nd);
            let mut h1 = CMatrix::zeros(nd, nd);
            for _ in 0..draws {
                let copies = (0..p - 1)
                    .map(|_| perturb_state(x, beta, &mut rng).map(|s| s.density()))
                    .collect::<Result<Vec<_>>>()?;
                d += traced_generator(&md, &copies, true)?;
                if let Some(mh1) = &mh1 {
                    h1 += traced_generator(mh1, &copies, false)?;
                }
            }
            let scale = c(1.0 / draws as f64);
            d *= scale;
            h1 *= scale;
            let h = newton.then(|| &h1 + &d);
            Ok((d, h))
        }
    }
}

fn finish(
    x: &QuantumState,
    w: &CVector,
    theta: f64,
    problem: &PolynomialProblem,
    cfg: &StepConfig,
    epsilon_in: f64,
) -> Result<StepRecord> {
    let (cos, sin) = (theta.cos(), theta.sin());
    let yes = (x.amplitudes() * c(cos) - w * c(sin)) * c(FRAC_1_SQRT_2);
    let success_prob = yes.norm_squared();
    if !(success_prob > 1e-28) {
        return Err(Error::NullState(format!(
            "post-selected branch has probability {success_prob:e}"
        )));
    }
    let state_after = QuantumState::normalize(yes)?;
    Ok(StepRecord {
        objective: objective_of(problem, &state_after)?,
        state_after,
        success_prob,
        c_norm: (2.0 * success_prob).sqrt() / cos,
        theta,
        epsilon_accum: epsilon_in + cfg.eta * cfg.epsilon_step,
        samples_consumed: cfg.samples_per_attempt(problem.p()),
        attempts: 1,
    })
}

/// One gradient step `x ← (x − η D̃x)/C_D` on the accepted branch.
pub fn gradient_step(
    x: &QuantumState,
    problem: &PolynomialProblem,
    cfg: &StepConfig,
    epsilon_in: f64,
) -> Result<StepRecord> {
    check_input(x, problem)?;
    if cfg.method != Method::Gradient {
        return Err(Error::InvalidParameter("gradient_step needs a gradient config".into()));
    }
    cfg.validate(problem)?;
    let theta = choose_theta(cfg.eta, cfg.xi_d)?;
    let (d, _) = build_operators(x, problem, cfg)?;
    let v = apply_matrix_multiplication(&d, x, &cfg.pe, cfg.xi_d)?.vector;
    finish(x, &v, theta, problem, cfg, epsilon_in)
}

/// One Newton step `x ← (x − η H̃⁻¹D̃x)/C_H` on the accepted branch.
pub fn newton_step(
    x: &QuantumState,
    problem: &PolynomialProblem,
    cfg: &StepConfig,
    epsilon_in: f64,
) -> Result<StepRecord> {
    check_input(x, problem)?;
    if !cfg.method.is_newton() {
        return Err(Error::InvalidParameter("newton_step needs a newton config".into()));
    }
    cfg.validate(problem)?;
    let theta = choose_theta(cfg.eta, cfg.xi_d * cfg.xi_h)?;
    let (d, h) = build_operators(x, problem, cfg)?;
    let h = h.expect("newton operators include H");
    let v = apply_matrix_multiplication(&d, x, &cfg.pe, cfg.xi_d)?.vector;
    let w = apply_matrix_inversion(&h, &v, &cfg.pe, cfg.xi_h, cfg.method == Method::NewtonSaddleFree)?.vector;
    if v.norm() > 1e-12 && w.norm() <= 1e-14 * v.norm() {
        return Err(Error::FilteredGradient);
    }
    finish(x, &w, theta, problem, cfg, epsilon_in)
}

pub fn step(
    x: &QuantumState,
    problem: &PolynomialProblem,
    cfg: &StepConfig,
    epsilon_in: f64,
) -> Result<StepRecord> {
    match cfg.method {
        Method::Gradient => gradient_step(x, problem, cfg, epsilon_in),
        Method::Newton | Method::NewtonSaddleFree => newton_step(x, problem, cfg, epsilon_in),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub epsilon0: f64,
    /// Draw accept/reject outcomes from this seed instead of taking the
    /// accepted branch directly. Rejected attempts are discarded and retried.
    pub sampling_seed: Option<u64>,
    pub max_attempts: u64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            epsilon0: 0.0,
            sampling_seed: None,
            max_attempts: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrajectory {
    pub x0: QuantumState,
    pub objective0: f64,
    pub records: Vec<StepRecord>,
    /// Copies of `x0` needed by the whole copy tree: product of per-step counts.
    pub total_samples: f64,
    /// Set when `T · max η` exceeds 1.
    pub exploration_warning: bool,
}

impl DescentTrajectory {
    pub fn states(&self) -> Vec<&QuantumState> {
        std::iter::once(&self.x0)
            .chain(self.records.iter().map(|r| &r.state_after))
            .collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.objective0)
            .chain(self.records.iter().map(|r| r.objective))
            .collect()
    }

    pub fn last(&self) -> &QuantumState {
        self.records.last().map_or(&self.x0, |r| &r.state_after)
    }
}

/// Runs one step per schedule entry.
pub fn run_descent(
    problem: &PolynomialProblem,
    x0: &QuantumState,
    schedule: &[StepConfig],
    opts: &DescentOptions,
) -> Result<DescentTrajectory> {
    check_input(x0, problem)?;
    let t_steps = schedule.len();
    let max_eta = schedule.iter().fold(0.0f64, |m, s| m.max(s.eta));
    let exploration_warning = t_steps as f64 * max_eta > 1.0;
    if exploration_warning {
        log::warn!("T * max eta = {:.3} exceeds 1", t_steps as f64 * max_eta);
    }
    let mut x = x0.clone();
    let mut eps = opts.epsilon0;
    let mut total = 1.0f64;
    let mut records = Vec::with_capacity(t_steps);
    for (t, cfg) in schedule.iter().enumerate() {
        let cfg = cfg.with_seed(derive_seed(cfg.seed, Stream::Perturbation, t as u64));
        let mut rec = step(&x, problem, &cfg, eps)?;
        if let Some(seed) = opts.sampling_seed {
            let mut rng = stream_rng(seed, Stream::Measurement, t as u64);
            let mut attempts = 1;
            while rng.random::<f64>() >= rec.success_prob {
                if attempts >= opts.max_attempts {
                    return Err(Error::NullState(format!(
                        "step {t} rejected {attempts} times (success probability {:e})",
                        rec.success_prob
                    )));
                }
                attempts += 1;
            }
            rec.attempts = attempts;
            rec.samples_consumed *= attempts;
        }
        total *= rec.samples_consumed as f64;
        eps = rec.epsilon_accum;
        x = rec.state_after.clone();
        records.push(rec);
    }
    Ok(DescentTrajectory {
        objective0: objective_of(problem, x0)?,
        x0: x0.clone(),
        records,
        total_samples: total,
        exploration_warning,
    })
}
