use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lipsolve::builders::{
    build_binomial_model, build_example1_model, build_example2_model, default_grid,
    example1_mle_predictive, example2_stated_predictive, parse_grid,
};
use lipsolve::io::{
    comparison_csv, csv_number, csv_string, limit_report_json, load_model, load_model_unchecked,
    load_predictive, load_prior, prior_csv, risk_profile_csv, risk_profile_json, save_model,
    save_predictive, solver_result_json, write_atomic,
};
use lipsolve::solver::{default_floors, SolverResult};
use lipsolve::{
    anneal_lip, bayes_predictive, dominating_predictive, minimax_predictive, risk_profile,
    solve_lip, validate_model, Algorithm, ModelTable, SolverConfig,
};

/// Latent information priors, minimax predictive densities and dominating
/// limit-of-Bayes predictives for finite models p(x, y | theta).
#[derive(Parser)]
#[command(name = "lipsolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check normalization and reachability of a model file.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Maximize I(theta; y | x) and report the prior.
    Solve(SolveArgs),
    /// Per-parameter KL risk of a predictive table or of a prior's Bayes predictive.
    Risk(RiskArgs),
    /// Build a limit-of-Bayes predictive whose risk is nowhere worse than a given one.
    Dominate(DominateArgs),
    /// Solve binomial models for many (N, M) pairs.
    Sweep(SweepArgs),
    /// Write a built-in model or predictive table to a file.
    Build(BuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Fw,
    Eg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "fw")]
    algorithm: AlgorithmArg,
    /// Stop when the Frank-Wolfe gap (nats) is at most this.
    #[arg(long, default_value_t = SolverConfig::default().certificate_tolerance)]
    tol: f64,
    #[arg(long = "max-iters", default_value_t = SolverConfig::default().max_iterations)]
    max_iters: usize,
    #[arg(long = "line-tol", default_value_t = SolverConfig::default().line_search_tolerance)]
    line_tol: f64,
    /// Exponentiated-gradient step size.
    #[arg(long = "step-size", default_value_t = SolverConfig::default().step_size)]
    step_size: f64,
}

impl SolverArgs {
    fn config(&self, floor: f64) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            algorithm: match self.algorithm {
                AlgorithmArg::Fw => Algorithm::FrankWolfe,
                AlgorithmArg::Eg => Algorithm::ExponentiatedGradient,
            },
            floor,
            max_iterations: self.max_iters,
            certificate_tolerance: self.tol,
            line_search_tolerance: self.line_tol,
            step_size: self.step_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ModelSource {
    /// Model JSON file.
    #[arg(long, conflicts_with = "binomial")]
    model: Option<PathBuf>,
    /// Binomial past/future model with sample sizes "N,M".
    #[arg(long, value_name = "N,M")]
    binomial: Option<String>,
    /// Parameter grid for --binomial: "lo:hi:step" or a comma separated list.
    #[arg(long, requires = "binomial")]
    grid: Option<String>,
}

impl ModelSource {
    fn load(&self) -> Result<ModelTable> {
        match (&self.model, &self.binomial) {
            (Some(path), None) => {
                load_model(path).with_context(|| format!("loading {}", path.display()))
            }
            (None, Some(pair)) => {
                let (n, m) = parse_pair(pair)?;
                Ok(build_binomial_model(
                    n,
                    m,
                    &grid_or_default(self.grid.as_deref())?,
                )?)
            }
            _ => bail!("give exactly one of --model or --binomial"),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ModelSource,
    #[command(flatten)]
    solver: SolverArgs,
    /// Mass held on the uniform reference measure.
    #[arg(long, default_value_t = 0.0, conflicts_with = "anneal")]
    floor: f64,
    /// Solve along floors 2^-2, ..., 2^-20 and report the last.
    #[arg(long)]
    anneal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Include the per-iteration (objective, gap) trace in JSON output.
    #[arg(long)]
    trace: bool,
    /// Also write the minimax predictive density induced by the solution.
    #[arg(long = "predictive-out")]
    predictive_out: Option<PathBuf>,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "prior", required_unless_present = "prior")]
    predictive: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct DominateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    predictive: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Where to write the dominating predictive (JSON); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the risk comparison CSV; stderr if absent.
    #[arg(long)]
    comparison: Option<PathBuf>,
    /// Where to write the limit report (row kinds) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Pairs "N1,M1;N2,M2;...". Defaults to N in {0,5,20,100} x M in {1,5,100,1000}.
    #[arg(long, conflicts_with = "default_figure1")]
    pairs: Option<String>,
    /// Use the default pair set (also the behavior when --pairs is absent).
    #[arg(long = "default-figure1")]
    default_figure1: bool,
    #[arg(long)]
    grid: Option<String>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltIn {
    /// Two past trials, one future trial, on a grid containing 0 and 1.
    Example1,
    /// Maximum-likelihood plug-in predictive for example1.
    PlugIn,
    /// Two-parameter model where theta1 never produces x = 2.
    Example2,
    /// The predictive analysed with example2.
    Stated,
    /// Binomial past/future model (needs --binomial).
    Binomial,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(value_enum)]
    what: BuiltIn,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, value_name = "N,M")]
    binomial: Option<String>,
    #[arg(long)]
    grid: Option<String>,
}

/// Run status mapped to the process exit code.
enum Status {
    Ok,
    Invalid,
    NotConverged,
}

fn main() -> ExitCode {
    // usage errors exit 1 like other input errors; 2 is reserved for non-convergence
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let status = match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Solve(args) => cmd_solve(&args),
        Command::Risk(args) => cmd_risk(&args),
        Command::Dominate(args) => cmd_dominate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Build(args) => cmd_build(&args),
    };
    match status {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Invalid) => ExitCode::from(1),
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_pair(s: &str) -> Result<(u64, u64)> {
    let (n, m) = s
        .split_once(',')
        .with_context(|| format!("expected \"N,M\", got {s:?}"))?;
    let n = n
        .trim()
        .parse()
        .with_context(|| format!("bad N in {s:?}"))?;
    let m = m
        .trim()
        .parse()
        .with_context(|| format!("bad M in {s:?}"))?;
    Ok((n, m))
}

fn parse_pairs(s: &str) -> Result<Vec<(u64, u64)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(parse_pair)
        .collect()
}

fn default_pairs() -> Vec<(u64, u64)> {
    let mut pairs = Vec::new();
    for n in [0, 5, 20, 100] {
        for m in [1, 5, 100, 1000] {
            pairs.push((n, m));
        }
    }
    pairs
}

fn grid_or_default(spec: Option<&str>) -> Result<Vec<f64>> {
    Ok(match spec {
        Some(s) => parse_grid(s)?,
        None => default_grid(),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(path: &Path) -> Result<Status> {
    let m = load_model_unchecked(path).with_context(|| format!("loading {}", path.display()))?;
    let report = validate_model(&m);
    if report.is_valid() {
        println!(
            "valid: {} parameters, {} data values, {} future values",
            m.t(),
            m.k(),
            m.l()
        );
        Ok(Status::Ok)
    } else {
        eprintln!("{report}");
        Ok(Status::Invalid)
    }
}

fn describe(r: &SolverResult) -> String {
    format!(
        "objective {:.12} nats, gap {:.3e}, {} iterations, support {}, {}",
        r.objective,
        r.certificate_gap,
        r.iterations,
        r.support_size(),
        if r.converged {
            "converged"
        } else {
            "NOT converged"
        }
    )
}

fn cmd_solve(args: &SolveArgs) -> Result<Status> {
    let m = args.source.load()?;
    let cfg = args.solver.config(args.floor)?;
    let result = if args.anneal {
        let path = anneal_lip(&m, &default_floors(), &cfg)?;
        for step in &path {
            eprintln!("floor {:.3e}: {}", step.floor, describe(step));
        }
        path.into_iter().last().expect("floors are nonempty")
    } else {
        solve_lip(&m, &cfg)?
    };
    eprintln!("{}", describe(&result));
    let text = match args.format {
        Format::Json => solver_result_json(&m, &result, args.trace)?,
        Format::Csv => prior_csv(&m, &result.prior)?,
    };
    emit(args.out.as_deref(), &text)?;

    let mut converged = result.converged;
    if let Some(path) = &args.predictive_out {
        let sol = minimax_predictive(&m, &cfg)?;
        eprintln!(
            "minimax predictive: sup risk {}, gap {:.3e}",
            sol.sup_risk, sol.minimax_gap
        );
        save_predictive(path, &m, &sol.predictive)?;
        converged &= sol.result.converged;
    }
    Ok(if converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn cmd_risk(args: &RiskArgs) -> Result<Status> {
    let m = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let q = match (&args.predictive, &args.prior) {
        (Some(path), _) => {
            load_predictive(path, &m).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(path)) => {
            let prior =
                load_prior(path, &m).with_context(|| format!("loading {}", path.display()))?;
            bayes_predictive(&m, &prior)?
        }
        (None, None) => bail!("give --predictive or --prior"),
    };
    let profile = risk_profile(&m, &q);
    let text = match args.format {
        Format::Json => risk_profile_json(&m, &profile)?,
        Format::Csv => risk_profile_csv(&m, &profile)?,
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Status::Ok)
}

fn cmd_dominate(args: &DominateArgs) -> Result<Status> {
    let m = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let q = load_predictive(&args.predictive, &m)
        .with_context(|| format!("loading {}", args.predictive.display()))?;
    let cfg = args.solver.config(0.0)?;
    let report = dominating_predictive(&m, &q, &cfg)?;
    if let Some(sol) = &report.solution {
        eprintln!(
            "D_q minimum {:.6e} (gap {:.3e}, {} iterations, {})",
            sol.value,
            sol.certificate_gap,
            sol.iterations,
            if sol.converged {
                "converged"
            } else {
                "NOT converged"
            }
        );
    } else {
        eprintln!("every parameter has infinite risk under the input; returning the uniform-prior predictive");
    }
    eprintln!("dominates: {}", report.dominates());

    emit(
        args.out.as_deref(),
        &lipsolve::io::predictive_json(&m, &report.predictive)?,
    )?;
    let csv = comparison_csv(&report.comparison)?;
    match &args.comparison {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => eprint!("{csv}"),
    }
    if let Some(path) = &args.report {
        write_atomic(path, limit_report_json(&m, &report.limit)?.as_bytes())?;
    }
    Ok(if report.converged() {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

struct PairOutcome {
    n: u64,
    m: u64,
    outcome: Result<(ModelTable, SolverResult)>,
}

fn solve_pair(
    n: u64,
    m: u64,
    grid: &[f64],
    cfg: &SolverConfig,
    dir: &Path,
) -> Result<(ModelTable, SolverResult)> {
    let model = build_binomial_model(n, m, grid)?;
    let result = solve_lip(&model, cfg)?;
    let path = dir.join(format!("lip_N{n}_M{m}.json"));
    write_atomic(
        &path,
        solver_result_json(&model, &result, false)?.as_bytes(),
    )?;
    Ok((model, result))
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("LIPSOLVE_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("LIPSOLVE_THREADS={v:?} is not a count"))?;
            if n == 0 {
                bail!("LIPSOLVE_THREADS must be positive");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<Status> {
    let pairs = match &args.pairs {
        Some(s) => parse_pairs(s)?,
        None => default_pairs(),
    };
    if pairs.is_empty() {
        bail!("no (N, M) pairs given");
    }
    let grid = grid_or_default(args.grid.as_deref())?;
    let cfg = args.solver.config(0.0)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let outcomes: Vec<PairOutcome> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(n, m)| PairOutcome {
                n,
                m,
                outcome: solve_pair(n, m, &grid, &cfg, &args.out),
            })
            .collect()
    });

    let mut long_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut failed = false;
    let mut unconverged = false;
    for o in &outcomes {
        match &o.outcome {
            Ok((model, r)) => {
                eprintln!("N={:<4} M={:<5} {}", o.n, o.m, describe(r));
                unconverged |= !r.converged;
                for (label, &w) in model.theta_labels().iter().zip(r.prior.weights()) {
                    long_rows.push(vec![
                        o.n.to_string(),
                        o.m.to_string(),
                        label.clone(),
                        csv_number(w),
                    ]);
                }
                summary_rows.push(vec![
                    o.n.to_string(),
                    o.m.to_string(),
                    csv_number(r.objective),
                    csv_number(r.certificate_gap),
                    r.support_size().to_string(),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                    String::new(),
                ]);
            }
            Err(e) => {
                eprintln!("N={:<4} M={:<5} failed: {e:#}", o.n, o.m);
                failed = true;
                summary_rows.push(vec![
                    o.n.to_string(),
                    o.m.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".into(),
                    format!("{e:#}"),
                ]);
            }
        }
    }
    write_atomic(
        &args.out.join("priors.csv"),
        csv_string(&["N", "M", "theta_label", "weight"], long_rows)?.as_bytes(),
    )?;
    write_atomic(
        &args.out.join("summary.csv"),
        csv_string(
            &[
                "N",
                "M",
                "objective",
                "certificate_gap",
                "support_size",
                "iterations",
                "converged",
                "error",
            ],
            summary_rows,
        )?
        .as_bytes(),
    )?;
    Ok(if failed {
        Status::Invalid
    } else if unconverged {
        Status::NotConverged
    } else {
        Status::Ok
    })
}

fn cmd_build(args: &BuildArgs) -> Result<Status> {
    let grid = grid_or_default(args.grid.as_deref())?;
    match args.what {
        BuiltIn::Example1 => save_model(&args.out, &build_example1_model(&grid)?)?,
        BuiltIn::PlugIn => {
            let m = build_example1_model(&grid)?;
            save_predictive(&args.out, &m, &example1_mle_predictive(&m, &grid)?)?;
        }
        BuiltIn::Example2 => save_model(&args.out, &build_example2_model(args.eps)?)?,
        BuiltIn::Stated => {
            let m = build_example2_model(args.eps)?;
            save_predictive(&args.out, &m, &example2_stated_predictive())?;
        }
        BuiltIn::Binomial => {
            let pair = args
                .binomial
                .as_deref()
                .context("binomial needs --binomial N,M")?;
            let (n, m) = parse_pair(pair)?;
            save_model(&args.out, &build_binomial_model(n, m, &grid)?)?;
        }
    }
    Ok(Status::Ok)
}
