//! Classical projected gradient descent and projected Newton on the unit
//! sphere, plus the parameter sets of the three reference figures.

use crate::error::{Error, Result};
use crate::linalg::{self, RMatrix, RVector};
use crate::tensor_poly::{AlgebraicForm, InhomogeneousTerm, PolynomialProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalMethod {
    Pgd,
    PNewton,
    PNewtonSaddleFree,
}

impl ClassicalMethod {
    pub fn name(self) -> &'static str {
        match self {
            ClassicalMethod::Pgd => "pgd",
            ClassicalMethod::PNewton => "pnewton",
            ClassicalMethod::PNewtonSaddleFree => "pnewton_saddle_free",
        }
    }
}

/// Step sizes, either constant or one per step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSizes {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl StepSizes {
    pub fn at(&self, t: usize) -> Result<f64> {
        match self {
            StepSizes::Constant(eta) => Ok(*eta),
            StepSizes::Schedule(s) => s.get(t).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("schedule has {} entries, step {t} requested", s.len()))
            }),
        }
    }
}

impl From<f64> for StepSizes {
    fn from(eta: f64) -> Self {
        StepSizes::Constant(eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub method: ClassicalMethod,
    pub points: Vec<RVector>,
    pub objectives: Vec<f64>,
}

impl ClassicalTrajectory {
    pub fn last(&self) -> &RVector {
        self.points.last().expect("trajectory holds x0")
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("trajectory holds x0")
    }
}

fn check_unit(x0: &RVector) -> Result<()> {
    let n = x0.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("x0 must be unit norm, got {n}")));
    }
    Ok(())
}

fn project(v: RVector, t: usize) -> Result<RVector> {
    let n = v.norm();
    if !(n.is_finite() && n > 1e-300) {
        return Err(Error::NullState(format!(
            "update vector at step {t} has norm {n}"
        )));
    }
    Ok(v / n)
}

/// `V diag(g(λ)) Vᵀ` with `g(λ) = 1/λ` (or `1/|λ|`) for `|λ| ≥ cut`, else 0.
pub fn well_conditioned_inverse(h: &RMatrix, lambda_cut: f64, saddle_free: bool) -> RMatrix {
    let (vals, vecs) = linalg::symmetric_eigen(h);
    let g = RVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| {
            if l.abs() < lambda_cut {
                0.0
            } else if saddle_free {
                1.0 / l.abs()
            } else {
                1.0 / l
            }
        }),
    );
    &vecs * RMatrix::from_diagonal(&g) * vecs.transpose()
}

/// One projected step `normalize(x − η d)` with the method's direction `d`.
pub fn classical_direction(
    problem: &PolynomialProblem,
    x: &RVector,
    method: ClassicalMethod,
    lambda_cut: f64,
) -> Result<RVector> {
    let g = problem.gradient(x)?;
    Ok(match method {
        ClassicalMethod::Pgd => g,
        ClassicalMethod::PNewton | ClassicalMethod::PNewtonSaddleFree => {
            let h = problem.hessian(x)?;
            let inv = well_conditioned_inverse(&h, lambda_cut, method == ClassicalMethod::PNewtonSaddleFree);
            inv * g
        }
    })
}

fn iterate(
    problem: &PolynomialProblem,
    x0: &RVector,
    eta: &StepSizes,
    steps: usize,
    method: ClassicalMethod,
    lambda_cut: f64,
) -> Result<ClassicalTrajectory> {
    check_unit(x0)?;
    let mut points = vec![x0.clone()];
    let mut objectives = vec![problem.evaluate(x0)?];
    let mut x = x0.clone();
    for t in 0..steps {
        let d = classical_direction(problem, &x, method, lambda_cut)?;
        x = project(&x - d * eta.at(t)?, t)?;
        objectives.push(problem.evaluate(&x)?);
        points.push(x.clone());
    }
    Ok(ClassicalTrajectory {
        method,
        points,
        objectives,
    })
}

pub fn projected_gradient_descent(
    problem: &PolynomialProblem,
    x0: &RVector,
    eta: &StepSizes,
    steps: usize,
) -> Result<ClassicalTrajectory> {
    iterate(problem, x0, eta, steps, ClassicalMethod::Pgd, 0.0)
}

pub fn projected_newton(
    problem: &PolynomialProblem,
    x0: &RVector,
    eta: &StepSizes,
    steps: usize,
    saddle_free: bool,
    lambda_cut: f64,
) -> Result<ClassicalTrajectory> {
    let method = if saddle_free {
        ClassicalMethod::PNewtonSaddleFree
    } else {
        ClassicalMethod::PNewton
    };
    iterate(problem, x0, eta, steps, method, lambda_cut)
}

/// Problem, initial point and step parameters of a reference figure.
#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub name: &'static str,
    pub problem: PolynomialProblem,
    pub x0: RVector,
    pub eta: f64,
    pub steps: usize,
}

pub const FIGURE_NAMES: [&str; 3] = ["fig1", "fig2", "fig3"];

fn fig1_problem() -> Result<PolynomialProblem> {
    let a = AlgebraicForm::new(1, 1, [(0, 0, 0.2), (0, 1, 0.2), (1, 0, 0.2), (1, 1, 0.6)])?;
    let c = InhomogeneousTerm::new(1, RVector::from_vec(vec![0.3, 0.2]), vec![])?;
    PolynomialProblem::new(a, vec![c])
}

/// The figure presets. The fig2 starting point `(−0.707, 0.707)` is
/// renormalized.
pub fn figure_preset(name: &str) -> Result<FigurePreset> {
    match name {
        "fig1" | "fig3" => Ok(FigurePreset {
            name: if name == "fig1" { "fig1" } else { "fig3" },
            problem: fig1_problem()?,
            x0: RVector::from_vec(vec![1.0, 2.0]).normalize(),
            eta: 0.2,
            steps: 20,
        }),
        "fig2" => Ok(FigurePreset {
            name: "fig2",
            problem: PolynomialProblem::homogeneous(AlgebraicForm::new(
                1,
                1,
                [(0, 0, 0.3), (0, 1, -0.2), (1, 0, -0.2), (1, 1, 0.5)],
            )?),
            x0: RVector::from_vec(vec![-0.707, 0.707]).normalize(),
            eta: 0.05,
            steps: 200,
        }),
        other => Err(Error::InvalidParameter(format!(
            "unknown figure '{other}', expected one of {FIGURE_NAMES:?}"
        ))),
    }
}
