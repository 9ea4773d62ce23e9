//! Time evolution under the auxiliary operators: exact exponentials,
//! Trotter products over permutation-conjugated copies of `e^{−iAΔt}`,
//! and the sample-based channel that realizes `e^{−iDτ}` from copies of
//! the current state.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, I};
use crate::operators::{self, AuxKind, AuxiliaryOperator};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::state::{DensityMatrix, DensityTolerance, QuantumState};
use crate::tensor_poly::{compose, digits, AlgebraicForm};

/// How each small-step unitary of the auxiliary operator is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// `e^{−iMΔt}` by eigendecomposition.
    Exact,
    /// First-order product over the permutation-conjugated terms of `M`.
    Trotter,
    /// Same unitaries as `Exact`; named separately so callers can request
    /// the sample-based route explicitly.
    SampledChannel,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "trotter" => Ok(Backend::Trotter),
            "sampled_channel" | "sampled" => Ok(Backend::SampledChannel),
            _ => Err(Error::InvalidParameter(format!("unknown backend '{s}'"))),
        }
    }
}

/// Operator simulated by [`sample_evolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    D,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub tau: f64,
    pub steps: usize,
    pub backend: Backend,
    pub beta: f64,
    pub seed: u64,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("trotter steps m must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be finite".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.steps as f64
    }
}

#[derive(Debug, Clone)]
pub struct ChannelResult {
    pub rho_out: DensityMatrix,
    pub exact_rho: DensityMatrix,
    pub trace_distance: f64,
    /// Copies consumed counting the evolved register: `m · p`.
    pub samples_consumed: u64,
    /// Copies traced out: `m · (p − 1)`.
    pub copies_traced: u64,
    /// Exponentials of `A` (or of a pair term) applied.
    pub queries: u64,
}

/// `e^{−iHt}` for Hermitian `H`.
pub fn exact_exponential(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = linalg::hermitian_eigen_checked(h, 1e-10)?;
    Ok(eig.reconstruct_with(|lam| (-I * lam * t).exp()))
}

/// Largest entry of `U†U − I`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    linalg::max_abs_diff(&(u.adjoint() * u), &linalg::identity(u.nrows()))
}

#[derive(Debug, Clone)]
pub struct TrotterResult {
    pub unitary: CMatrix,
    /// Operator-norm distance to the exact exponential.
    pub deviation: f64,
    pub queries: u64,
}

fn conjugate_by_permutation(u: &CMatrix, q: &[usize]) -> CMatrix {
    CMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(q[i], q[j])])
}

fn matrix_power(base: &CMatrix, mut exp: usize) -> CMatrix {
    let mut result = linalg::identity(base.nrows());
    let mut b = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = &result * &b;
        }
        b = &b * &b;
        exp >>= 1;
    }
    result
}

/// Small-step unitaries `Q_j e^{−iAΔt} Q_jᵀ`, one per register.
fn md_step_factors(a: &AlgebraicForm, dt: f64) -> Result<Vec<CMatrix>> {
    let ua = exact_exponential(&a.dense_complex(), dt)?;
    (1..=a.p())
        .map(|j| Ok(conjugate_by_permutation(&ua, &operators::permutation_q(j, a.p(), a.dim())?)))
        .collect()
}

/// Hermitian pair terms of `M_H1`, one per unordered register pair.
pub fn mh1_pair_terms(a: &AlgebraicForm) -> Vec<CMatrix> {
    let (p, nd) = (a.p(), a.dim());
    let mut terms = Vec::new();
    for k in 0..p {
        for l in (k + 1)..p {
            let mut m = CMatrix::zeros(a.size(), a.size());
            for (r, c, v) in a.entries() {
                let rd = digits(r, nd, p);
                let cd = digits(c, nd, p);
                for (kk, ll) in [(k, l), (l, k)] {
                    let rest = (0..p).filter(|&i| i != kk && i != ll);
                    let mut row: Vec<usize> = rest.clone().map(|i| rd[i]).collect();
                    let mut col: Vec<usize> = rest.map(|i| cd[i]).collect();
                    row.extend([rd[ll], rd[kk]]);
                    col.extend([cd[kk], cd[ll]]);
                    m[(compose(&row, nd), compose(&col, nd))] += linalg::c(2.0 * v);
                }
            }
            terms.push(m);
        }
    }
    terms
}

fn step_unitary(factors: &[CMatrix], dim: usize) -> CMatrix {
    factors.iter().fold(linalg::identity(dim), |acc, f| acc * f)
}

/// `(Π_j Q_j e^{−iAt/m} Q_jᵀ)^m` and its deviation from `e^{−iM_D t}`.
pub fn trotter_md(a: &AlgebraicForm, t: f64, m: usize) -> Result<TrotterResult> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let factors = md_step_factors(a, t / m as f64)?;
    let unitary = matrix_power(&step_unitary(&factors, a.size()), m);
    let exact = exact_exponential(&operators::build_md(a).data, t)?;
    Ok(TrotterResult {
        deviation: linalg::operator_norm(&(&unitary - exact)),
        unitary,
        queries: (m * a.p()) as u64,
    })
}

/// Trotter product over the pair terms of `M_H1`.
pub fn trotter_mh1(a: &AlgebraicForm, t: f64, m: usize) -> Result<TrotterResult> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let dt = t / m as f64;
    let terms = mh1_pair_terms(a);
    let factors = terms
        .iter()
        .map(|h| exact_exponential(h, dt))
        .collect::<Result<Vec<_>>>()?;
    let unitary = matrix_power(&step_unitary(&factors, a.size()), m);
    let exact = exact_exponential(&operators::build_mh1(a).data, t)?;
    Ok(TrotterResult {
        deviation: linalg::operator_norm(&(&unitary - exact)),
        unitary,
        queries: (m * terms.len()) as u64,
    })
}

/// One channel step with a given joint unitary:
/// `tr_{1..p−1}{U (copies ⊗ σ) U†}`.
pub fn channel_step_with_unitary(
    u: &CMatrix,
    copies: &[DensityMatrix],
    sigma: &DensityMatrix,
) -> Result<DensityMatrix> {
    let nd = sigma.dim();
    let mut joint = CMatrix::from_element(1, 1, linalg::ONE);
    for c in copies {
        if c.dim() != nd {
            return Err(Error::DimensionMismatch {
                expected: nd,
                got: c.dim(),
            });
        }
        joint = linalg::kron(&joint, c.matrix());
    }
    joint = linalg::kron(&joint, sigma.matrix());
    if joint.nrows() != u.nrows() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            got: joint.nrows(),
        });
    }
    let evolved = u * joint * u.adjoint();
    let p = copies.len() + 1;
    let reduced = operators::partial_trace(&evolved, &vec![nd; p], &[p - 1])?;
    DensityMatrix::with_tolerance(reduced, DensityTolerance::CHANNEL)
}

/// One step of the sample-based channel with `U = e^{−iMΔt}`.
pub fn sample_channel_step(
    m: &AuxiliaryOperator,
    copies: &[DensityMatrix],
    sigma: &DensityMatrix,
    dt: f64,
) -> Result<DensityMatrix> {
    if copies.len() + 1 != m.p {
        return Err(Error::DimensionMismatch {
            expected: m.p - 1,
            got: copies.len(),
        });
    }
    if m.norm() * dt.abs() > 0.5 {
        log::warn!("channel step with |M| dt = {:.3} > 0.5", m.norm() * dt.abs());
    }
    channel_step_with_unitary(&exact_exponential(&m.data, dt)?, copies, sigma)
}

/// `normalize(x + v)` with real Gaussian `v`, components `N(0, β²/N)`,
/// redrawn until `|v| ≤ 2β`.
pub fn perturb_state<R: Rng + ?Sized>(x: &QuantumState, beta: f64, rng: &mut R) -> Result<QuantumState> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must be in [0, 1), got {beta}")));
    }
    if beta == 0.0 {
        return Ok(x.clone());
    }
    let n = x.dim();
    let normal = Normal::new(0.0, beta / (n as f64).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    loop {
        let v = CVector::from_fn(n, |_, _| linalg::c(normal.sample(rng)));
        if v.norm() <= 2.0 * beta {
            return QuantumState::normalize(x.amplitudes() + v);
        }
    }
}

/// Runs the sample-based evolution of `x` under `D(x)` or `H₁(x)` for time
/// `τ` in `m` steps, drawing fresh perturbed copies at every step.
pub fn sample_evolution(
    a: &AlgebraicForm,
    x: &QuantumState,
    cfg: &EvolutionConfig,
    which: Which,
) -> Result<ChannelResult> {
    cfg.validate()?;
    if x.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: x.dim(),
        });
    }
    let p = a.p();
    let dt = cfg.dt();
    let rho0 = x.density();
    let (aux, target_op) = match which {
        Which::D => {
            let md = operators::build_md(a);
            let d = operators::gradient_operator_from(&md, &rho0)?;
            (md, d)
        }
        Which::H1 => {
            let mh1 = operators::build_mh1(a);
            let h1 = operators::hessian_part_h1(&mh1, &rho0)?;
            (mh1, h1)
        }
    };
    debug_assert!(aux.kind == if which == Which::D { AuxKind::MD } else { AuxKind::MH1 });

    let (u, queries_per_step) = match cfg.backend {
        Backend::Exact | Backend::SampledChannel => (exact_exponential(&aux.data, dt)?, 0u64),
        Backend::Trotter => {
            let tr = match which {
                Which::D => trotter_md(a, dt, 1)?,
                Which::H1 => trotter_mh1(a, dt, 1)?,
            };
            (tr.unitary, tr.queries)
        }
    };
    if aux.norm() * dt.abs() > 0.5 {
        log::warn!("channel step with |M| dt = {:.3} > 0.5", aux.norm() * dt.abs());
    }

    let mut rng = stream_rng(cfg.seed, Stream::Perturbation, 0);
    let mut sigma = rho0.clone();
    for _ in 0..cfg.steps {
        let copies = (0..p - 1)
            .map(|_| perturb_state(x, cfg.beta, &mut rng).map(|s| s.density()))
            .collect::<Result<Vec<_>>>()?;
        sigma = channel_step_with_unitary(&u, &copies, &sigma)?;
    }

    let ue = exact_exponential(&target_op, cfg.tau)?;
    let exact_rho = DensityMatrix::with_tolerance(
        &ue * rho0.matrix() * ue.adjoint(),
        DensityTolerance::CHANNEL,
    )?;
    let m = cfg.steps as u64;
    Ok(ChannelResult {
        trace_distance: sigma.trace_distance(&exact_rho).clamp(0.0, 1.0),
        rho_out: sigma,
        exact_rho,
        samples_consumed: m * p as u64,
        copies_traced: m * (p as u64 - 1),
        queries: m * queries_per_step,
    })
}

/// One row of a Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub beta: f64,
    pub tau: f64,
    pub repetition: usize,
    pub trace_distance: f64,
    pub samples_consumed: u64,
    pub seed: u64,
    /// Trace distance to the `β = 0` output with the same `m`, which
    /// isolates the error caused by perturbed copies.
    pub baseline_distance: f64,
}

/// Repeats [`sample_evolution`] over a grid of `(m, β)` with independent
/// per-repetition seeds; rows are sorted by `(m, β, repetition)`.
/// Steps that are independent of the seed (`β = 0`) are computed once per `m`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_sweep(
    a: &AlgebraicForm,
    x: &QuantumState,
    steps: &[usize],
    betas: &[f64],
    tau: f64,
    repetitions: usize,
    base_seed: u64,
    which: Which,
) -> Result<Vec<SweepRow>> {
    let baselines = steps
        .par_iter()
        .map(|&m| {
            let cfg = EvolutionConfig {
                tau,
                steps: m,
                backend: Backend::SampledChannel,
                beta: 0.0,
                seed: base_seed,
            };
            Ok((m, sample_evolution(a, x, &cfg, which)?.rho_out))
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline = |m: usize| &baselines.iter().find(|(k, _)| *k == m).expect("baseline").1;

    let mut jobs = Vec::new();
    for &m in steps {
        for &beta in betas {
            for rep in 0..repetitions {
                jobs.push((m, beta, rep));
            }
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(m, beta, rep)| {
            let seed = derive_seed(base_seed, Stream::Channel, rep as u64);
            let cfg = EvolutionConfig {
                tau,
                steps: m,
                backend: Backend::SampledChannel,
                beta,
                seed,
            };
            let r = sample_evolution(a, x, &cfg, which)?;
            Ok(SweepRow {
                m,
                beta,
                tau,
                repetition: rep,
                trace_distance: r.trace_distance,
                samples_consumed: r.samples_consumed,
                seed,
                baseline_distance: r.rho_out.trace_distance(baseline(m)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.m.cmp(&b.m)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.repetition.cmp(&b.repetition))
    });
    Ok(rows)
}
