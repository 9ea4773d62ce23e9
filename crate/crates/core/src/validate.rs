//! Invariant suite run by `qpd validate`: module invariants checked on one
//! problem at a handful of random points, reported as a pass/fail table.

use std::fmt;

use rand::Rng;

use crate::classical_ref::{figure_preset, projected_gradient_descent, projected_newton, FIGURE_NAMES};
use crate::descent::{self, run_descent, DescentOptions, StepConfig};
use crate::hamsim::{self, Backend, EvolutionConfig, Which};
use crate::linalg::{self, RMatrix, RVector};
use crate::operators;
use crate::phase_estimation::{self, PEConfig};
use crate::rng::{stream_rng, Stream};
use crate::state::QuantumState;
use crate::tensor_poly::{norm_bounds, AlgebraicForm, InhomogeneousTerm, PolynomialProblem};

const POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Precondition of the invariant not met by this problem.
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub label: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<14} {:<16} {:<34} {}  {}",
                self.label, c.module, c.name, c.status, c.detail
            )?;
        }
        Ok(())
    }
}

struct Recorder(Vec<Check>);

impl Recorder {
    fn check(&mut self, module: &'static str, name: &'static str, ok: bool, detail: String) {
        self.0.push(Check {
            module,
            name,
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        });
    }

    fn skip(&mut self, module: &'static str, name: &'static str, why: &str) {
        self.0.push(Check {
            module,
            name,
            status: Status::Skip,
            detail: why.to_string(),
        });
    }

    /// Runs `f`; an error counts as a failure with the error as detail.
    fn run(
        &mut self,
        module: &'static str,
        name: &'static str,
        f: impl FnOnce() -> crate::Result<(bool, String)>,
    ) {
        match f() {
            Ok((ok, detail)) => self.check(module, name, ok, detail),
            Err(e) => self.check(module, name, false, format!("error: {e}")),
        }
    }
}

fn random_unit<R: Rng>(n: usize, rng: &mut R) -> RVector {
    loop {
        let v = RVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

fn state(x: &RVector) -> QuantumState {
    QuantumState::from_real(x.as_slice()).expect("unit vector")
}

fn max_err(errs: impl IntoIterator<Item = f64>) -> f64 {
    errs.into_iter().fold(0.0, f64::max)
}

fn fd_gradient(problem: &PolynomialProblem, x: &RVector, h: f64) -> crate::Result<RVector> {
    let mut g = RVector::zeros(x.len());
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        g[i] = (problem.evaluate(&xp)? - problem.evaluate(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

fn fd_hessian(problem: &PolynomialProblem, x: &RVector, h: f64) -> crate::Result<RMatrix> {
    let n = x.len();
    let mut out = RMatrix::zeros(n, n);
    for i in 0..n {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        let d = (problem.gradient(&xp)? - problem.gradient(&xm)?) / (2.0 * h);
        out.set_column(i, &d);
    }
    Ok(out)
}

/// Runs every invariant on `problem`, using random points drawn from `seed`.
pub fn validate_problem(label: &str, problem: &PolynomialProblem, seed: u64) -> Report {
    let mut rec = Recorder(Vec::new());
    let mut rng = stream_rng(seed, Stream::Problem, 0);
    let dim = problem.dim();
    let points: Vec<RVector> = (0..POINTS).map(|_| random_unit(dim, &mut rng)).collect();
    let hom = problem.homogeneous_part();
    let a = problem.hom();
    let p = a.p();
    let nb = norm_bounds(problem);
    let cut = problem.lambda_cut();

    // tensor_poly
    rec.run("tensor_poly", "gradient = finite differences", || {
        let err = max_err(
            points
                .iter()
                .map(|x| {
                    let g = problem.gradient(x)?;
                    Ok((g - fd_gradient(problem, x, 1e-6)?).norm() / (1.0 + problem.gradient(x)?.norm()))
                })
                .collect::<crate::Result<Vec<_>>>()?,
        );
        Ok((err < 1e-6, format!("max rel err {err:.2e}")))
    });
    rec.run("tensor_poly", "hessian = finite differences", || {
        let err = max_err(
            points
                .iter()
                .map(|x| {
                    let h = problem.hessian(x)?;
                    Ok((&h - fd_hessian(problem, x, 1e-5)?).norm() / (1.0 + h.norm()))
                })
                .collect::<crate::Result<Vec<_>>>()?,
        );
        Ok((err < 1e-6, format!("max rel err {err:.2e}")))
    });
    rec.run("tensor_poly", "euler identity", || {
        let err = max_err(
            points
                .iter()
                .map(|x| Ok((x.dot(&hom.gradient(x)?) - 2.0 * p as f64 * hom.evaluate(x)?).abs()))
                .collect::<crate::Result<Vec<_>>>()?,
        );
        Ok((err < 1e-10, format!("max err {err:.2e}")))
    });
    rec.run("tensor_poly", "norm bounds on D and H", || {
        let mut worst: f64 = 0.0;
        for x in &points {
            let d = a.gradient_operator_contracted(state(x).density().matrix())?;
            let h = hom.hessian(x)?;
            worst = worst
                .max(linalg::operator_norm(&d) - nb.lambda_d)
                .max(linalg::symmetric_norm(&h) - nb.lambda_h);
        }
        Ok((worst <= 1e-10, format!("max excess {worst:.2e}")))
    });

    // operators
    let md = operators::build_md(a);
    let mh1 = operators::build_mh1(a);
    rec.run("operators", "D from M_D = analytic", || {
        let mut err: f64 = 0.0;
        for x in &points {
            let rho = state(x).density();
            let d = operators::gradient_operator_from(&md, &rho)?;
            let dx = (&d * linalg::to_complex_vector(x)).map(|z| z.re);
            err = err
                .max((dx - hom.gradient(x)?).norm())
                .max(linalg::max_abs_diff(&d, &a.gradient_operator_contracted(rho.matrix())?));
        }
        Ok((err < 1e-10, format!("max err {err:.2e}")))
    });
    rec.run("operators", "H from M_H1 + M_D = analytic", || {
        let mut err: f64 = 0.0;
        for x in &points {
            let h = operators::hessian_operator_from(&md, &mh1, &state(x).density())?;
            err = err.max(linalg::max_abs_diff(&h, &linalg::to_complex_matrix(&hom.hessian(x)?)));
        }
        Ok((err < 1e-8, format!("max err {err:.2e}")))
    });
    rec.check(
        "operators",
        "sparsity M_D <= p s_A",
        md.sparsity() <= p * nb.s_a,
        format!("{} <= {}", md.sparsity(), p * nb.s_a),
    );
    rec.check(
        "operators",
        "sparsity M_H1 <= p^2 s_A",
        mh1.sparsity() <= p * p * nb.s_a,
        format!("{} <= {}", mh1.sparsity(), p * p * nb.s_a),
    );
    rec.check(
        "operators",
        "auxiliary operators hermitian",
        linalg::hermitian_deviation(&md.data) < 1e-12 && linalg::hermitian_deviation(&mh1.data) < 1e-12,
        String::new(),
    );

    // hamsim
    rec.run("hamsim", "trotter first order", || {
        let e8 = hamsim::trotter_md(a, 1.0, 8)?.deviation;
        let e16 = hamsim::trotter_md(a, 1.0, 16)?.deviation;
        let e32 = hamsim::trotter_md(a, 1.0, 32)?.deviation;
        if e8 < 1e-12 {
            return Ok((true, format!("exact product, err {e8:.1e}")));
        }
        let (r1, r2) = (e8 / e16, e16 / e32);
        let ok = (1.6..=2.4).contains(&r2) || (1.6..=2.4).contains(&r1);
        Ok((ok, format!("ratios {r1:.3} {r2:.3}")))
    });
    rec.run("hamsim", "channel error decreases with m", || {
        let x = state(&points[0]);
        let tau = 0.5 / nb.lambda_d.max(1e-3);
        let err = |m| -> crate::Result<f64> {
            let cfg = EvolutionConfig {
                tau,
                steps: m,
                backend: Backend::Exact,
                beta: 0.0,
                seed,
            };
            Ok(hamsim::sample_evolution(a, &x, &cfg, Which::D)?.trace_distance)
        };
        let (e16, e64) = (err(16)?, err(64)?);
        Ok((e64 <= e16 + 1e-12, format!("{e16:.2e} -> {e64:.2e}")))
    });

    // phase_estimation
    rec.run("phase_estimation", "multiplication probabilities", || {
        let x = state(&points[0]);
        let d = a.gradient_operator_contracted(x.density().matrix())?;
        let xi = if nb.lambda_d > 0.0 { 0.9 / nb.lambda_d } else { 1.0 };
        let out = phase_estimation::apply_matrix_multiplication(&d, &x, &PEConfig::ideal(1e-15, cut), xi)?;
        let expect = (&d * x.amplitudes()).norm_squared() * xi * xi;
        let err = (out.success_prob + out.reject_prob - 1.0).abs().max((out.success_prob - expect).abs());
        Ok((err < 1e-10, format!("err {err:.2e}")))
    });
    rec.run("phase_estimation", "circuit modal outcome precision", || {
        let x = state(&points[0]);
        let d = a.gradient_operator_contracted(x.density().matrix())?;
        let eig = linalg::hermitian_eigen(&d);
        let lmax = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let t0 = 0.9 * PEConfig::safe_t0(lmax);
        let bits = 6;
        let tol = 2.0 * std::f64::consts::PI / ((1 << bits) as f64 * t0);
        let mut worst: f64 = 0.0;
        for (j, &l) in eig.values.iter().enumerate() {
            let u = QuantumState::normalize(eig.vectors.column(j).into_owned())?;
            let res = phase_estimation::pe_circuit(&d, &u, bits, t0)?;
            worst = worst.max((res.decoded[res.modal_outcome()] - l).abs());
        }
        Ok((worst <= tol, format!("{worst:.2e} <= {tol:.2e}")))
    });

    // descent
    let lambda_hinv = 1.0 / cut;
    let eta_g = 0.3 / nb.lambda_d.max(1e-12);
    let eta_n = 0.3 / nb.lambda_d.max(lambda_hinv).max(nb.lambda_d * lambda_hinv);
    let pe = PEConfig::ideal(1e-15, cut);
    rec.run("descent", "gradient step = classical update", || {
        let mut worst: f64 = 0.0;
        for x in &points {
            let cfg = StepConfig::gradient(&hom, eta_g, pe);
            let q = descent::gradient_step(&state(x), &hom, &cfg, 0.0)?;
            let c = projected_gradient_descent(&hom, x, &eta_g.into(), 1)?;
            worst = worst.max(1.0 - q.state_after.fidelity(&state(c.last())));
        }
        Ok((worst <= 1e-10, format!("max 1-F {worst:.2e}")))
    });
    rec.run("descent", "newton step = classical update", || {
        let mut worst: f64 = 0.0;
        let mut used = 0;
        for x in &points {
            let cfg = StepConfig::newton(&hom, eta_n, pe, false);
            let q = match descent::newton_step(&state(x), &hom, &cfg, 0.0) {
                Err(crate::Error::FilteredGradient) => continue,
                r => r?,
            };
            let c = projected_newton(&hom, x, &eta_n.into(), 1, false, cut)?;
            worst = worst.max(1.0 - q.state_after.fidelity(&state(c.last())));
            used += 1;
        }
        Ok((worst <= 1e-10, format!("max 1-F {worst:.2e} over {used} points")))
    });
    rec.run("descent", "success probability > 1/16", || {
        let mut lowest: f64 = 1.0;
        for x in &points {
            let g = descent::gradient_step(&state(x), &hom, &StepConfig::gradient(&hom, eta_g, pe), 0.0)?;
            lowest = lowest.min(g.success_prob);
            match descent::newton_step(&state(x), &hom, &StepConfig::newton(&hom, eta_n, pe, true), 0.0) {
                Ok(n) => lowest = lowest.min(n.success_prob),
                Err(crate::Error::FilteredGradient) => {}
                Err(e) => return Err(e),
            }
        }
        Ok((lowest > 1.0 / 16.0, format!("min P {lowest:.4}")))
    });
    rec.run("descent", "C^2 identity", || {
        let mut err: f64 = 0.0;
        for x in &points {
            let s = state(x);
            let r = descent::gradient_step(&s, &hom, &StepConfig::gradient(&hom, eta_g, pe), 0.0)?;
            let d = a.gradient_operator_contracted(s.density().matrix())?;
            let dx = &d * s.amplitudes();
            let c2 = 1.0 - 2.0 * eta_g * s.amplitudes().dotc(&dx).re + eta_g * eta_g * dx.norm_squared();
            err = err.max((r.c_norm * r.c_norm - c2).abs());
        }
        Ok((err < 1e-10, format!("max err {err:.2e}")))
    });
    rec.run("descent", "error accounting", || {
        let eta = eta_g.min(0.1);
        let cfg = StepConfig {
            epsilon_step: 1e-3,
            ..StepConfig::gradient(&hom, eta, pe)
        };
        let opts = DescentOptions {
            epsilon0: 1e-4,
            ..DescentOptions::default()
        };
        let tr = run_descent(&hom, &state(&points[0]), &[cfg; 5], &opts)?;
        let got = tr.records.last().map_or(0.0, |r| r.epsilon_accum);
        let expect = 1e-4 + 5.0 * eta * 1e-3;
        Ok(((got - expect).abs() <= 1e-15 * expect.max(1.0), format!("{got:e} vs {expect:e}")))
    });
    if p == 1 {
        rec.run("descent", "eigenvectors are fixed points", || {
            let (_, vecs) = linalg::symmetric_eigen(&a.dense());
            let mut worst: f64 = 0.0;
            for k in 0..dim {
                let u: RVector = vecs.column(k).into_owned();
                let r = descent::gradient_step(&state(&u), &hom, &StepConfig::gradient(&hom, eta_g, pe), 0.0)?;
                worst = worst.max(1.0 - r.state_after.fidelity(&state(&u)));
            }
            Ok((worst < 1e-10, format!("max 1-F {worst:.2e}")))
        });
    } else {
        rec.skip("descent", "eigenvectors are fixed points", "p > 1");
    }

    // classical_ref
    let x0 = &points[0];
    rec.run("classical_ref", "trajectory points unit norm", || {
        let g = projected_gradient_descent(problem, x0, &0.05.into(), 20)?;
        let n = projected_newton(problem, x0, &0.05.into(), 20, true, cut)?;
        let err = max_err(g.points.iter().chain(&n.points).map(|x| (x.norm() - 1.0).abs()));
        Ok((err <= 1e-12, format!("max |1-|x|| {err:.2e}")))
    });
    rec.run("classical_ref", "saddle-free = newton when H > 0", || {
        let n = projected_newton(problem, x0, &0.05.into(), 10, false, cut)?;
        let mut pd = true;
        for x in &n.points {
            let (vals, _) = linalg::symmetric_eigen(&problem.hessian(x)?);
            pd &= vals[0] > 0.0;
        }
        if !pd {
            return Ok((true, "skipped: H indefinite on trajectory".into()));
        }
        let s = projected_newton(problem, x0, &0.05.into(), 10, true, cut)?;
        let err = max_err(n.points.iter().zip(&s.points).map(|(a, b)| (a - b).norm()));
        Ok((err < 1e-12, format!("max diff {err:.2e}")))
    });
    if p == 1 && problem.is_homogeneous() {
        let (vals, vecs) = linalg::symmetric_eigen(&a.dense());
        let gap = vals[1] - vals[0];
        if gap < 0.3 {
            rec.skip("classical_ref", "pgd reaches an eigenvector", "spectral gap below 0.3");
        } else {
            rec.run("classical_ref", "pgd reaches an eigenvector", || {
                let tr = projected_gradient_descent(problem, x0, &0.05.into(), 500)?;
                let overlap = (0..dim)
                    .map(|k| tr.last().dot(&vecs.column(k)).abs())
                    .fold(0.0, f64::max);
                Ok((overlap >= 0.999, format!("overlap {overlap:.6}")))
            });
        }
    } else {
        rec.skip("classical_ref", "pgd reaches an eigenvector", "needs p = 1, homogeneous");
    }

    Report {
        label: label.to_string(),
        checks: rec.0,
    }
}

/// Random problem for the suite: p ∈ {1, 2}, n ∈ {1, 2}, every fourth with
/// a linear inhomogeneous term.
pub fn random_problem(index: u64, seed: u64) -> crate::Result<PolynomialProblem> {
    let mut rng = stream_rng(seed, Stream::Problem, 1000 + index);
    let p = 1 + (index % 2) as usize;
    let n = 1 + ((index / 2) % 2) as usize;
    let a = AlgebraicForm::random(p, n, 2, &mut rng)?;
    let inhom = if index % 4 == 3 {
        let c = RVector::from_fn(1 << n, |_, _| rng.random_range(-0.5..0.5));
        vec![InhomogeneousTerm::new(1, c, vec![])?]
    } else {
        vec![]
    };
    PolynomialProblem::new(a, inhom)
}

/// The three figure presets plus `random` generated problems.
pub fn validate_suite(random: usize, seed: u64) -> crate::Result<Vec<Report>> {
    let mut reports = Vec::new();
    for name in FIGURE_NAMES {
        let preset = figure_preset(name)?;
        reports.push(validate_problem(name, &preset.problem, seed));
    }
    for i in 0..random {
        let problem = random_problem(i as u64, seed)?;
        reports.push(validate_problem(&format!("random{i:02}"), &problem, seed));
    }
    Ok(reports)
}
