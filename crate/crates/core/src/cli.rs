//! Command-line front end: `fit`, `solve`, `validate` and `sweep`.
//!
//! Every command writes `<output>.manifest.json` next to its main output.
//! Exit codes: 0 success, 1 usage or schema error, 2 infeasible, 3 internal.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::EmConfig;
use crate::formulation::{
    build_miqp, build_quantile_table, extract_schedule, CostBreakdown, FormulationOptions, UcSchedule,
};
use crate::gmm::{read_gmm_file, write_gmm_file, Gmm, QuantileConfig};
use crate::grid::{compute_ptdf, load_case, Case, Uncertainty};
use crate::miqp::{branch_and_bound, write_mps, SolveConfig, SolveStatus};
use crate::validate::{validate_schedule, ValidationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccuc", version, about = "Chance-constrained unit commitment with Gaussian mixture wind errors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one Gaussian mixture per interval from the case's marginals and correlations.
    Fit(FitArgs),
    /// Build and solve the unit-commitment MIQP, or export it as MPS.
    Solve(SolveArgs),
    /// Monte Carlo violation probabilities of a solved schedule.
    Validate(ValidateArgs),
    /// Total cost as the swept correlation coefficient varies.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitOptions {
    /// Mixture components per interval.
    #[arg(long = "components", short = 'k', default_value_t = 10)]
    pub components: usize,
    /// Nataf samples per interval.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FitOptions {
    fn em(&self) -> EmConfig {
        EmConfig::with_components(self.components, self.seed)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub case: PathBuf,
    /// Output mixture file (JSON).
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub case: PathBuf,
    /// Schedule output (JSON). Costs and quantiles are written beside it.
    /// May be omitted together with --export-mps to export without solving.
    pub out: Option<PathBuf>,
    /// Mixture file; defaults to the one named by the case, else a fresh fit.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 0.01)]
    pub gap: f64,
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Write the model in free MPS format.
    #[arg(long)]
    pub export_mps: Option<PathBuf>,
    /// Drop the branch-flow chance constraints.
    #[arg(long)]
    pub no_line_constraints: bool,
    /// Override the case's `allow_curtailment`.
    #[arg(long)]
    pub allow_curtailment: Option<bool>,
    /// Print one line per incumbent.
    #[arg(long, short)]
    pub verbose: bool,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub case: PathBuf,
    /// Schedule produced by `solve`.
    pub schedule: PathBuf,
    /// Report CSV; defaults to `<schedule>.validation.csv`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Mixture to sample from; defaults to the one named by the case, else a fresh fit.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    /// Samples per period.
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long = "mc-seed", default_value_t = 0)]
    pub mc_seed: u64,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub case: PathBuf,
    /// Output CSV `r,status,total,...`.
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.4,-0.2,0,0.2,0.4")]
    pub r_values: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub gap: f64,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub case: PathBuf,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    fn new(command: &str, case: &Path, config: serde_json::Value, seeds: Vec<u64>, started_at: DateTime<Utc>) -> Self {
        RunManifest {
            command: command.into(),
            case: case.to_path_buf(),
            config,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at,
            finished_at: started_at,
            outputs: Vec::new(),
        }
    }

    /// Stamps the finish time and writes `<main>.manifest.json`.
    fn finish(mut self, main: &Path) -> Result<PathBuf> {
        self.finished_at = Utc::now();
        let path = manifest_path(main);
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }
}

pub fn manifest_path(main: &Path) -> PathBuf {
    let mut s = main.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `dir/stem.json` → `dir/stem{suffix}`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Internal(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Sweep(a) => cmd_sweep_correlation(a),
    }
}

fn mixtures(case: &Case, path: Option<&Path>, fit: &FitOptions) -> Result<Vec<Gmm>> {
    let gmms = match path {
        Some(p) => read_gmm_file(p)?,
        None => case.gmms_or_fit(fit.samples, &fit.em())?,
    };
    case.check_gmms(&gmms)?;
    Ok(gmms)
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let started_at = Utc::now();
    let case = load_case(&a.case)?;
    if !matches!(case.uncertainty, Uncertainty::Intervals(_)) {
        return Err(Error::input(format!(
            "{}: fitting needs per-interval marginals and correlations",
            a.case.display()
        )));
    }
    let t0 = Instant::now();
    let gmms = case.fit_gmms(a.fit.samples, &a.fit.em())?;
    write_gmm_file(&a.out, &gmms)?;
    println!(
        "fitted {} intervals x {} components from {} samples each in {:.2} s",
        gmms.len(),
        a.fit.components,
        a.fit.samples,
        t0.elapsed().as_secs_f64()
    );
    let seeds = (0..gmms.len() as u64).map(|t| a.fit.seed.wrapping_add(t)).collect();
    let mut m = RunManifest::new("fit", &a.case, serde_json::to_value(&a.fit)?, seeds, started_at);
    m.outputs.push(a.out.clone());
    m.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub relative_gap: f64,
    pub nodes_explored: usize,
    pub costs: CostBreakdown,
}

pub fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let started_at = Utc::now();
    if a.out.is_none() && a.export_mps.is_none() {
        return Err(Error::input("nothing to do: give an output schedule path and/or --export-mps"));
    }
    let mut case = load_case(&a.case)?;
    if let Some(c) = a.allow_curtailment {
        case.allow_curtailment = c;
    }
    let gmms = mixtures(&case, a.gmm.as_deref(), &a.fit)?;
    let t0 = Instant::now();
    let ptdf = compute_ptdf(&case.network)?;
    let table = build_quantile_table(&gmms, &case, &ptdf, &QuantileConfig::default())?;
    let opts = FormulationOptions {
        line_constraints: !a.no_line_constraints,
    };
    let (model, _) = build_miqp(&case, &ptdf, &table, &opts)?;
    let cfg = SolveConfig {
        relative_mip_gap: a.gap,
        time_limit: a.time_limit,
        verbose: a.verbose,
        ..Default::default()
    };
    cfg.check()?;
    let config = serde_json::json!({
        "gmm": a.gmm,
        "gap": a.gap,
        "time_limit": a.time_limit,
        "line_constraints": opts.line_constraints,
        "allow_curtailment": case.allow_curtailment,
        "fit": a.fit,
    });
    let mut manifest = RunManifest::new("solve", &a.case, config, vec![a.fit.seed], started_at);
    if let Some(p) = &a.export_mps {
        write_mps(&model, p)?;
        println!("wrote {} ({} columns, {} rows)", p.display(), model.n_vars(), model.n_constraints());
        manifest.outputs.push(p.clone());
    }
    let Some(out) = &a.out else {
        let main = a.export_mps.as_ref().expect("checked above");
        manifest.finish(main)?;
        return Ok(());
    };

    let result = branch_and_bound(&model, &cfg)?;
    let total = t0.elapsed().as_secs_f64();
    let n_q = table.n_quantiles();
    println!(
        "quantile phase {:.6} s for {} constraints ({:.2} us each), {:.3}% of {:.3} s total",
        table.elapsed_seconds,
        n_q,
        1e6 * table.elapsed_seconds / n_q.max(1) as f64,
        100.0 * table.elapsed_seconds / total.max(1e-12),
        total
    );
    let result = result.into_feasible()?;
    let schedule = extract_schedule(&case, &model, &result.assignment)?;
    schedule.write_json(out)?;
    let costs_path = sibling(out, ".costs.json");
    let summary = SolveSummary {
        status: result.status,
        objective: result.objective,
        best_bound: result.best_bound,
        relative_gap: result.relative_gap(),
        nodes_explored: result.nodes_explored,
        costs: schedule.costs,
    };
    std::fs::write(&costs_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    let q_path = sibling(out, ".quantiles.csv");
    table.write_csv(&case, &q_path)?;
    print_costs(&summary);
    manifest.outputs.extend([out.clone(), costs_path, q_path]);
    manifest.finish(out)?;
    Ok(())
}

fn print_costs(s: &SolveSummary) {
    let c = &s.costs;
    let mut o = std::io::stdout().lock();
    let _ = writeln!(
        o,
        "status {:?}  nodes {}  gap {:.3e}",
        s.status, s.nodes_explored, s.relative_gap
    );
    let _ = writeln!(
        o,
        "cost total {:.4}  (commitment {:.4}, fuel {:.4}, reserve {:.4}, curtailment {:.4})",
        c.total, c.uc, c.fuel, c.reserve, c.curtail_penalty
    );
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let started_at = Utc::now();
    let case = load_case(&a.case)?;
    let gmms = mixtures(&case, a.gmm.as_deref(), &a.fit)?;
    let schedule = UcSchedule::read_json(&a.schedule)?;
    let ptdf = compute_ptdf(&case.network)?;
    let cfg = ValidationConfig {
        n_samples: a.mc_samples,
        seed: a.mc_seed,
    };
    let t0 = Instant::now();
    let report = validate_schedule(&case, &ptdf, &schedule, &gmms, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| sibling(&a.schedule, ".validation.csv"));
    report.write_csv(&out)?;
    let over = report.exceeding(3.0);
    println!(
        "{} estimates from {} samples per period in {:.2} s; {} above alpha + 3 CI",
        report.rows.len(),
        report.n_samples,
        t0.elapsed().as_secs_f64(),
        over.len()
    );
    for r in over {
        println!(
            "  t={} {} {} estimate {:.5} (alpha {}, CI {:.5})",
            r.t,
            r.constraint.as_str(),
            r.branch,
            r.estimate,
            r.alpha,
            r.ci_halfwidth
        );
    }
    let config = serde_json::json!({
        "schedule": a.schedule,
        "gmm": a.gmm,
        "mc_samples": a.mc_samples,
        "fit": a.fit,
    });
    let mut m = RunManifest::new("validate", &a.case, config, vec![a.mc_seed, a.fit.seed], started_at);
    m.outputs.push(out.clone());
    m.finish(&out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub status: SolveStatus,
    pub total: f64,
    pub relative_gap: f64,
    pub costs: CostBreakdown,
}

/// Refits and solves the case for every correlation value in `r_values`;
/// values that make a correlation matrix indefinite are skipped with a warning.
pub fn sweep_correlation(case: &Case, r_values: &[f64], fit: &FitOptions, gap: f64) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &r in r_values {
        if let Some(min) = swept_min_eigenvalue(case, r) {
            if min < -1e-9 {
                eprintln!("warning: skipping r = {r}: correlation matrix not PSD (smallest eigenvalue {min:.3e})");
                continue;
            }
        }
        let swept = case.with_swept_correlation(r)?;
        let gmms = swept.fit_gmms(fit.samples, &fit.em())?;
        let sol = crate::formulation::solve_case(
            &swept,
            &gmms,
            &FormulationOptions::default(),
            &QuantileConfig::default(),
            &SolveConfig::with_gap(gap),
        )
        .map_err(|e| e.context(format!("r = {r}")))?;
        points.push(SweepPoint {
            r,
            status: sol.result.status,
            total: sol.schedule.costs.total,
            relative_gap: sol.result.relative_gap(),
            costs: sol.schedule.costs,
        });
    }
    Ok(points)
}

fn swept_min_eigenvalue(case: &Case, r: f64) -> Option<f64> {
    let (Some(sweep), Uncertainty::Intervals(iv)) = (&case.correlation_sweep, &case.uncertainty) else {
        return None;
    };
    iv.iter()
        .map(|u| {
            let mut spec = u.correlation_spec();
            for &(a, b) in &sweep.pairs {
                spec.matrix[a][b] = r;
                spec.matrix[b][a] = r;
            }
            spec.min_eigenvalue()
        })
        .reduce(f64::min)
}

pub fn cmd_sweep_correlation(a: &SweepArgs) -> Result<()> {
    let started_at = Utc::now();
    let case = load_case(&a.case)?;
    let points = sweep_correlation(&case, &a.r_values, &a.fit, a.gap)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["r", "status", "total", "uc", "fuel", "reserve", "curtail_penalty", "relative_gap"])?;
    for p in &points {
        let c = &p.costs;
        w.write_record([
            p.r.to_string(),
            serde_json::to_value(p.status)?.as_str().unwrap_or_default().to_string(),
            p.total.to_string(),
            c.uc.to_string(),
            c.fuel.to_string(),
            c.reserve.to_string(),
            c.curtail_penalty.to_string(),
            p.relative_gap.to_string(),
        ])?;
        println!("r {:>6}  total {:.4}", p.r, p.total);
    }
    w.flush()?;
    let config = serde_json::json!({ "r_values": a.r_values, "gap": a.gap, "fit": a.fit });
    let mut m = RunManifest::new("sweep", &a.case, config, vec![a.fit.seed], started_at);
    m.outputs.push(a.out.clone());
    m.finish(&a.out)?;
    Ok(())
}
