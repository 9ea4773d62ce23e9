//! `qpd`: runs descent experiments, channel/Trotter sweeps, resource
//! estimates, figure presets and the invariant suite, writing tidy CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qpd_core::classical_ref::{figure_preset, projected_gradient_descent, projected_newton, StepSizes, FIGURE_NAMES};
use qpd_core::csv_out::{self, fmt_f64, Metadata};
use qpd_core::descent::{
    estimate_resources, run_descent, DescentOptions, Method, OperatorBackend, ResourceParams, StepConfig,
};
use qpd_core::hamsim::{self, Which};
use qpd_core::linalg::RVector;
use qpd_core::phase_estimation::{pe_circuit, PEConfig};
use qpd_core::rng::DEFAULT_SEED;
use qpd_core::validate;
use qpd_core::{load_problem, norm_bounds, PolynomialProblem, QuantumState};

#[derive(Parser, Debug)]
#[command(name = "qpd", version, about = "Quantum polynomial descent simulator")]
struct Cli {
    /// Base seed; overrides QPD_SEED (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a descent trajectory.
    Run(RunArgs),
    /// Channel error, Trotter error or phase-estimation histogram sweeps.
    Sweep(SweepArgs),
    /// Asymptotic resource estimates with unit constants.
    Resources(ResourceArgs),
    /// Classical trajectories for the figure presets.
    Figures(FigureArgs),
    /// Run the invariant suite and print a pass/fail table.
    Validate(ValidateArgs),
}

#[derive(clap::Args, Debug, Clone)]
struct ProblemArgs {
    /// Problem file.
    #[arg(long, conflicts_with = "preset")]
    problem: Option<PathBuf>,
    /// Figure preset: fig1, fig2 or fig3.
    #[arg(long)]
    preset: Option<String>,
    /// Initial point as comma-separated reals (normalized).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    lambda_cut: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    #[value(alias = "gradient", alias = "pgd")]
    Gd,
    #[value(alias = "pnewton")]
    Newton,
    #[value(name = "newton_sf", alias = "newton_saddle_free")]
    NewtonSf,
}

impl MethodArg {
    fn method(self) -> Method {
        match self {
            MethodArg::Gd => Method::Gradient,
            MethodArg::Newton => Method::Newton,
            MethodArg::NewtonSf => Method::NewtonSaddleFree,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Classical,
    Ideal,
    Circuit,
    Sampled,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Analytic,
    PartialTrace,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "gd")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "ideal")]
    mode: Mode,
    /// Number of steps T (defaults to the preset's or the schedule length).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Per-step step sizes, comma-separated; overrides --eta.
    #[arg(long, value_delimiter = ',')]
    eta_schedule: Option<Vec<f64>>,
    /// Phase register size in circuit mode.
    #[arg(long, default_value_t = 8)]
    pe_bits: usize,
    /// Eigenvalue grid spacing in ideal mode.
    #[arg(long, default_value_t = 1e-15)]
    pe_epsilon: f64,
    /// Copy draws per simulated operator in sampled mode.
    #[arg(long, default_value_t = 16)]
    trotter_m: usize,
    /// Perturbation strength of the copies in sampled mode.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Operator backend in ideal and circuit modes.
    #[arg(long, value_enum, default_value = "analytic")]
    backend: BackendArg,
    #[arg(long, default_value_t = 0.0)]
    epsilon0: f64,
    /// Draw accept/reject outcomes instead of taking the accepted branch.
    #[arg(long)]
    sample_outcomes: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Channel,
    Trotter,
    Pe,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum WhichArg {
    D,
    H1,
}

#[derive(clap::Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "channel")]
    kind: SweepKind,
    #[arg(long, value_enum, default_value = "d")]
    which: WhichArg,
    /// Step counts m.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256")]
    trotter_m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05")]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 6)]
    pe_bits: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ResourceArgs {
    #[arg(long)]
    p: usize,
    /// Sets both Λ_D and Λ_H.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    lambda_h: Option<f64>,
    #[arg(long)]
    delta: f64,
    #[arg(long = "T", alias = "steps")]
    t_steps: u32,
    #[arg(long, value_enum, default_value = "gd")]
    method: MethodArg,
    #[arg(long, default_value_t = 1)]
    s_a: usize,
    /// Dimension N for the log N gate factor.
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Accuracy of the simulation, single-step gradient and Newton (default δ).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_d: Option<f64>,
    #[arg(long)]
    epsilon_nwt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct FigureArgs {
    /// fig1, fig2, fig3 or all.
    #[arg(long, default_value = "all")]
    name: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "preset")]
    problem: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Random problems added to the presets when no problem is given.
    #[arg(long, default_value_t = 20)]
    random: usize,
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("QPD_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("QPD_SEED='{v}' is not an integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

struct Loaded {
    problem: PolynomialProblem,
    source: String,
    x0: RVector,
    eta: Option<f64>,
    steps: Option<usize>,
}

fn load(args: &ProblemArgs) -> Result<Loaded> {
    let mut loaded = match (&args.problem, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let problem = load_problem(&text).with_context(|| format!("load_problem({})", path.display()))?;
            let dim = problem.dim();
            Loaded {
                problem,
                source: path.display().to_string(),
                x0: RVector::from_element(dim, 1.0 / (dim as f64).sqrt()),
                eta: None,
                steps: None,
            }
        }
        (None, Some(name)) => {
            let f = figure_preset(name).with_context(|| format!("figure_preset({name})"))?;
            Loaded {
                problem: f.problem,
                source: format!("preset:{name}"),
                x0: f.x0,
                eta: Some(f.eta),
                steps: Some(f.steps),
            }
        }
        (None, None) => bail!("one of --problem or --preset is required"),
    };
    if let Some(cut) = args.lambda_cut {
        loaded.problem = loaded.problem.with_lambda_cut(cut).context("--lambda-cut")?;
    }
    if let Some(x) = &args.x0 {
        if x.len() != loaded.problem.dim() {
            bail!("--x0 has {} entries, problem dimension is {}", x.len(), loaded.problem.dim());
        }
        let v = RVector::from_column_slice(x);
        if v.norm() == 0.0 {
            bail!("--x0 must be nonzero");
        }
        loaded.x0 = v.normalize();
    }
    Ok(loaded)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";")
}

fn meta(pairs: &[(&str, String)]) -> Metadata {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(args: &RunArgs, seed: u64) -> Result<()> {
    let l = load(&args.problem)?;
    let problem = &l.problem;
    let etas: Vec<f64> = match (&args.eta_schedule, args.eta.or(l.eta)) {
        (Some(s), _) => {
            if let Some(t) = args.steps {
                if t != s.len() {
                    bail!("--steps {t} disagrees with a schedule of {} entries", s.len());
                }
            }
            s.clone()
        }
        (None, Some(eta)) => {
            let t = args.steps.or(l.steps).context("--steps is required")?;
            vec![eta; t]
        }
        (None, None) => bail!("--eta or --eta-schedule is required"),
    };
    let method = args.method.method();
    let cut = problem.lambda_cut();
    let mut m = meta(&[
        ("command", "run".into()),
        ("problem", l.source.clone()),
        ("method", method.name().into()),
        ("mode", format!("{:?}", args.mode).to_lowercase()),
        ("steps", etas.len().to_string()),
        ("eta", if etas.windows(2).all(|w| w[0] == w[1]) { join(&etas[..etas.len().min(1)]) } else { join(&etas) }),
        ("x0", join(l.x0.as_slice())),
        ("lambda_cut", fmt_f64(cut)),
        ("seed", seed.to_string()),
    ]);

    let rows = if args.mode == Mode::Classical {
        let schedule = StepSizes::Schedule(etas.clone());
        let tr = match method {
            Method::Gradient => projected_gradient_descent(problem, &l.x0, &schedule, etas.len()),
            Method::Newton => projected_newton(problem, &l.x0, &schedule, etas.len(), false, cut),
            Method::NewtonSaddleFree => projected_newton(problem, &l.x0, &schedule, etas.len(), true, cut),
        }
        .context("classical_ref trajectory")?;
        csv_out::classical_rows(&tr)
    } else {
        let nb = norm_bounds(problem);
        let pe = match args.mode {
            Mode::Circuit => {
                let t0 = 0.9 * PEConfig::safe_t0(nb.lambda_d.max(nb.lambda_h));
                m.push(("pe_bits".into(), args.pe_bits.to_string()));
                m.push(("t0".into(), fmt_f64(t0)));
                PEConfig::circuit(args.pe_bits, t0, cut)
            }
            _ => {
                m.push(("pe_epsilon".into(), fmt_f64(args.pe_epsilon)));
                PEConfig::ideal(args.pe_epsilon, cut)
            }
        };
        let backend = match (args.mode, args.backend) {
            (Mode::Sampled, _) => {
                m.push(("trotter_m".into(), args.trotter_m.to_string()));
                m.push(("beta".into(), fmt_f64(args.beta)));
                OperatorBackend::SampledChannel {
                    draws: args.trotter_m,
                    beta: args.beta,
                }
            }
            (_, BackendArg::Analytic) => OperatorBackend::Analytic,
            (_, BackendArg::PartialTrace) => OperatorBackend::PartialTrace,
        };
        m.push(("backend".into(), backend.name().into()));
        let schedule: Vec<StepConfig> = etas
            .iter()
            .map(|&eta| {
                let cfg = match method {
                    Method::Gradient => StepConfig::gradient(problem, eta, pe),
                    Method::Newton => StepConfig::newton(problem, eta, pe, false),
                    Method::NewtonSaddleFree => StepConfig::newton(problem, eta, pe, true),
                };
                cfg.with_backend(backend).with_seed(seed)
            })
            .collect();
        if let Some(first) = schedule.first() {
            m.push(("xi_d".into(), fmt_f64(first.xi_d)));
            if method.is_newton() {
                m.push(("xi_h".into(), fmt_f64(first.xi_h)));
            }
        }
        let opts = DescentOptions {
            epsilon0: args.epsilon0,
            sampling_seed: args.sample_outcomes.then_some(seed),
            ..DescentOptions::default()
        };
        m.push(("epsilon0".into(), fmt_f64(args.epsilon0)));
        m.push(("sample_outcomes".into(), args.sample_outcomes.to_string()));
        let x0 = QuantumState::from_real(l.x0.as_slice())?;
        let tr = run_descent(problem, &x0, &schedule, &opts).with_context(|| {
            format!(
                "descent::run_descent(method={}, mode={:?}, eta={})",
                method.name(),
                args.mode,
                join(&etas[..etas.len().min(3)])
            )
        })?;
        m.push(("total_samples".into(), fmt_f64(tr.total_samples)));
        m.push(("exploration_warning".into(), tr.exploration_warning.to_string()));
        let mode = format!("{:?}", args.mode).to_lowercase();
        csv_out::descent_rows(&tr, method.name(), &mode, args.epsilon0)
    };
    let mut w = output(&args.out)?;
    csv_out::write_trajectories(&mut w, &rows, &m)?;
    w.flush()?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, seed: u64) -> Result<()> {
    let l = load(&args.problem)?;
    let a = l.problem.hom();
    let x = QuantumState::from_real(l.x0.as_slice())?;
    let which = match args.which {
        WhichArg::D => Which::D,
        WhichArg::H1 => Which::H1,
    };
    let mut m = meta(&[
        ("command", "sweep".into()),
        ("kind", format!("{:?}", args.kind).to_lowercase()),
        ("problem", l.source.clone()),
        ("x0", join(l.x0.as_slice())),
        ("seed", seed.to_string()),
    ]);
    let mut w = output(&args.out)?;
    match args.kind {
        SweepKind::Channel => {
            m.push(("which".into(), format!("{:?}", args.which).to_lowercase()));
            m.push(("tau".into(), fmt_f64(args.tau)));
            m.push(("reps".into(), args.reps.to_string()));
            let rows = hamsim::monte_carlo_sweep(a, &x, &args.trotter_m, &args.beta, args.tau, args.reps, seed, which)
                .context("hamsim::monte_carlo_sweep")?;
            csv_out::write_sweep(&mut w, &rows, &m)?;
        }
        SweepKind::Trotter => {
            m.push(("which".into(), format!("{:?}", args.which).to_lowercase()));
            m.push(("tau".into(), fmt_f64(args.tau)));
            let mut rows = Vec::new();
            for &steps in &args.trotter_m {
                let r = match which {
                    Which::D => hamsim::trotter_md(a, args.tau, steps),
                    Which::H1 => hamsim::trotter_mh1(a, args.tau, steps),
                }
                .with_context(|| format!("hamsim trotter(m={steps})"))?;
                rows.push(vec![steps.to_string(), fmt_f64(r.deviation), r.queries.to_string()]);
            }
            csv_out::write_table(&mut w, &["m", "operator_norm_error", "queries"], &rows, &m)?;
        }
        SweepKind::Pe => {
            let d = a.gradient_operator_contracted(x.density().matrix())?;
            let t0 = 0.9 * PEConfig::safe_t0(norm_bounds(&l.problem).lambda_d);
            m.push(("pe_bits".into(), args.pe_bits.to_string()));
            m.push(("t0".into(), fmt_f64(t0)));
            let r = pe_circuit(&d, &x, args.pe_bits, t0).context("phase_estimation::pe_circuit")?;
            csv_out::write_histogram(&mut w, &r, &m)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_resources(args: &ResourceArgs) -> Result<()> {
    let lambda_d = args.lambda_d.or(args.lambda).context("--lambda or --lambda-d is required")?;
    let lambda_h = args.lambda_h.or(args.lambda).unwrap_or(lambda_d);
    let positive = [lambda_d, lambda_h, args.delta, args.tau];
    if args.p == 0 || args.s_a == 0 || positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        bail!("resource parameters must be positive");
    }
    let q = ResourceParams {
        p: args.p,
        s_a: args.s_a,
        lambda_d,
        lambda_h,
        n_dim: args.n,
        tau: args.tau,
        epsilon: args.epsilon.unwrap_or(args.delta),
        epsilon_d: args.epsilon_d.unwrap_or(args.delta),
        epsilon_nwt: args.epsilon_nwt.unwrap_or(args.delta),
        t_steps: args.t_steps,
        delta: args.delta,
        method: args.method.method(),
    };
    let r = estimate_resources(&q);
    let mut rows = vec![vec!["copies".to_string(), fmt_f64(r.multi_step_copies)]];
    rows.extend(r.fields().into_iter().map(|(k, v)| vec![k.to_string(), fmt_f64(v)]));
    let m = meta(&[
        ("command", "resources".into()),
        ("method", q.method.name().into()),
        ("p", q.p.to_string()),
        ("s_a", q.s_a.to_string()),
        ("lambda_d", fmt_f64(q.lambda_d)),
        ("lambda_h", fmt_f64(q.lambda_h)),
        ("n", q.n_dim.to_string()),
        ("tau", fmt_f64(q.tau)),
        ("epsilon", fmt_f64(q.epsilon)),
        ("epsilon_d", fmt_f64(q.epsilon_d)),
        ("epsilon_nwt", fmt_f64(q.epsilon_nwt)),
        ("delta", fmt_f64(q.delta)),
        ("T", q.t_steps.to_string()),
        ("caveat", r.caveat.into()),
    ]);
    let mut w = output(&args.out)?;
    csv_out::write_table(&mut w, &["quantity", "value"], &rows, &m)?;
    w.flush()?;
    Ok(())
}

fn cmd_figures(args: &FigureArgs) -> Result<()> {
    let names: Vec<&str> = if args.name == "all" {
        FIGURE_NAMES.to_vec()
    } else {
        vec![args.name.as_str()]
    };
    let mut rows = Vec::new();
    let mut m = meta(&[("command", "figures".into()), ("name", args.name.clone())]);
    for name in names {
        let f = figure_preset(name).with_context(|| format!("figure_preset({name})"))?;
        let steps = args.steps.unwrap_or(f.steps);
        let cut = f.problem.lambda_cut();
        let eta: StepSizes = f.eta.into();
        let gd = projected_gradient_descent(&f.problem, &f.x0, &eta, steps).context("projected_gradient_descent")?;
        let nt = projected_newton(&f.problem, &f.x0, &eta, steps, false, cut).context("projected_newton")?;
        for tr in [gd, nt] {
            rows.extend(csv_out::classical_rows(&tr).into_iter().map(|mut r| {
                r.mode = format!("classical:{name}");
                r
            }));
        }
        m.push((format!("{name}.eta"), fmt_f64(f.eta)));
        m.push((format!("{name}.steps"), steps.to_string()));
        m.push((format!("{name}.x0"), join(f.x0.as_slice())));
        m.push((format!("{name}.lambda_cut"), fmt_f64(cut)));
    }
    let mut w = output(&args.out)?;
    csv_out::write_trajectories(&mut w, &rows, &m)?;
    w.flush()?;
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, seed: u64) -> Result<bool> {
    let reports = match (&args.problem, &args.preset) {
        (None, None) => validate::validate_suite(args.random, seed)?,
        _ => {
            let l = load(&ProblemArgs {
                problem: args.problem.clone(),
                preset: args.preset.clone(),
                x0: None,
                lambda_cut: None,
            })?;
            vec![validate::validate_problem(&l.source, &l.problem, seed)]
        }
    };
    let mut out = io::stdout().lock();
    writeln!(out, "{:<14} {:<16} {:<34} STATUS  DETAIL", "PROBLEM", "MODULE", "CHECK")?;
    let mut failed = 0;
    let mut total = 0;
    for r in &reports {
        write!(out, "{r}")?;
        total += r.checks.len();
        failed += r.checks.iter().filter(|c| c.status == validate::Status::Fail).count();
    }
    writeln!(out, "# seed={seed} problems={} checks={total} failed={failed}", reports.len())?;
    Ok(failed == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = resolve_seed(cli.seed).and_then(|seed| match &cli.command {
        Command::Run(a) => cmd_run(a, seed).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a, seed).map(|_| true),
        Command::Resources(a) => cmd_resources(a).map(|_| true),
        Command::Figures(a) => cmd_figures(a).map(|_| true),
        Command::Validate(a) => cmd_validate(a, seed),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // reader went away, e.g. `qpd ... | head`
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| match (c.downcast_ref::<io::Error>(), c.downcast_ref::<qpd_core::Error>()) {
        (Some(io), _) => io.kind() == io::ErrorKind::BrokenPipe,
        // core keeps only the message of I/O errors
        (_, Some(qpd_core::Error::Io(msg))) => msg.contains("Broken pipe"),
        _ => false,
    })
}
