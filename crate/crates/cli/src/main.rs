//! `klopt`: estimate M-term errors, verify the supporting inequalities and
//! search rotations for counterexamples to K-L optimality.
//!
//! Reports go to stdout as JSON. Exit codes: 0 success, 1 a violated
//! inequality or flagged counterexample, 2 bad input, 3 numerical failure.

mod inputs;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use klopt::inequality::{
    check_majorization, eq11_check, lemma1_check, schur_consequence_check, sidak_check, van_handel_map,
    DEFAULT_MAJORIZATION_TOL,
};
use klopt::orthogonal::stochastic_defect;
use klopt::reconstruction::DEFAULT_TOL;
use klopt::search::{search_counterexample, sweep_class_p, SearchConfig};
use klopt::{
    estimate_error, independent_error_quadrature, induced_variances, squared_entry_matrix,
    OrthogonalMatrix64, SeedSpec, VarianceSpec64,
};
use serde::Serialize;
use serde_json::json;

use crate::inputs::{parse_spec, MapArg};
use crate::report::{emit, Report};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<klopt::Error> for CliError {
    fn from(e: klopt::Error) -> Self {
        match e {
            klopt::Error::Convergence { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "klopt", version, about = "Nonlinear M-term approximation error laboratory")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of the expected M-term error of map·Y.
    Estimate(EstimateArgs),
    /// Check one of the inequalities behind the M = 1 argument.
    Verify(VerifyArgs),
    /// Search rotations for an error below the source basis.
    Search(SearchArgs),
}

#[derive(Args, Serialize)]
struct Seeding {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

impl Seeding {
    fn spec(&self) -> SeedSpec {
        SeedSpec::new(self.seed, self.stream)
    }
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Descending variances: inline JSON array or a file.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value = "identity")]
    map: MapArg,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    m: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    seeding: Seeding,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Check {
    Lemma1,
    Sidak,
    Majorize,
    Schur,
    Eq11,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    check: Check,
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    map: Option<MapArg>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    m: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Thresholds for the Šidák check.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
    t_grid: Vec<f64>,
    /// Shorthand for `--map van-handel --spec [1,1,1] --M 2`.
    #[arg(long)]
    van_handel: bool,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    seeding: Seeding,
}

#[derive(Args, Serialize)]
struct SearchArgs {
    #[arg(long)]
    spec: String,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    m: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 10_000)]
    saa_samples: usize,
    #[arg(long, default_value_t = 1_000_000)]
    refine_samples: usize,
    #[arg(long, default_value_t = 1_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    simplex_tol: f64,
    /// Evaluate every signed permutation instead of searching.
    #[arg(long)]
    sweep_p: bool,
    /// Directory for result.json and trace.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    seeding: Seeding,
}

fn run_estimate(a: &EstimateArgs) -> Result<ExitCode, CliError> {
    let spec = parse_spec(&a.spec)?;
    let map = a.map.load(spec.dim())?;
    let seed = a.seeding.spec();
    let estimate = estimate_error(&spec, &map, a.m, a.samples, seed)?;
    let quadrature = if map.is_signed_permutation() {
        let eta = induced_variances(&map, &spec)?;
        Some(independent_error_quadrature(&eta.to_f64(), a.m, DEFAULT_TOL)?)
    } else {
        None
    };
    let body = json!({ "estimate": estimate, "quadrature": quadrature });
    emit(&Report::new("estimate", a, seed, body));
    Ok(ExitCode::SUCCESS)
}

fn orthogonal(map: klopt::LinearMap64) -> Result<OrthogonalMatrix64, CliError> {
    OrthogonalMatrix64::new(map).map_err(|e| CliError::Usage(format!("--map: {e}")))
}

fn run_verify(a: &VerifyArgs) -> Result<ExitCode, CliError> {
    let seed = a.seeding.spec();
    let spec: VarianceSpec64 = match (&a.spec, a.van_handel) {
        (Some(s), _) => parse_spec(s)?,
        (None, true) => VarianceSpec64::new(vec![1.0; 3])?,
        (None, false) => return Err(CliError::Usage("--spec is required".into())),
    };
    let map = match (&a.map, a.van_handel) {
        (Some(_), true) => {
            return Err(CliError::Usage("--van-handel conflicts with --map".into()))
        }
        (_, true) => {
            if spec.dim() != 3 {
                return Err(CliError::Usage("--van-handel needs a 3-component spec".into()));
            }
            van_handel_map()
        }
        (Some(m), false) => m.load(spec.dim())?,
        (None, false) => MapArg::Identity.load(spec.dim())?,
    };
    let need_m = || {
        a.m.or(a.van_handel.then_some(2))
            .ok_or_else(|| CliError::Usage("--M is required".into()))
    };

    let (body, violated) = match a.check {
        Check::Lemma1 => {
            let t = orthogonal(map)?;
            let v = lemma1_check(&spec, &t, a.samples, seed)?;
            (json!({ "verdicts": [v] }), v.verdict == klopt::inequality::Verdict::Violated)
        }
        Check::Sidak => {
            let vs = sidak_check(&spec, &map, &a.t_grid, a.samples, seed)?;
            let violated = vs.iter().any(|v| v.verdict == klopt::inequality::Verdict::Violated);
            (json!({ "t_grid": a.t_grid, "verdicts": vs }), violated)
        }
        Check::Majorize => {
            let eta = induced_variances(&map, &spec)?;
            let r = check_majorization(&spec, &eta, DEFAULT_MAJORIZATION_TOL)?;
            let defect = OrthogonalMatrix64::new(map)
                .ok()
                .map(|t| stochastic_defect(&squared_entry_matrix(&t)));
            let verdict = if r.holds { "holds" } else { "violated" };
            (
                json!({ "eta": eta.eta, "majorization": r, "doubly_stochastic_defect": defect, "verdict": verdict }),
                !r.holds,
            )
        }
        Check::Schur => {
            let eta = induced_variances(&map, &spec)?;
            let v = schur_consequence_check(&spec, &eta, need_m()?, a.tol)?;
            (
                json!({ "eta": eta.eta, "verdicts": [v] }),
                v.verdict == klopt::inequality::Verdict::Violated,
            )
        }
        Check::Eq11 => {
            let r = eq11_check(&map, &spec, need_m()?, a.samples, seed)?;
            (json!(r), r.verdict.verdict == klopt::inequality::Verdict::Violated)
        }
    };
    emit(&Report::new("verify", a, seed, json!({ "result": body, "violated": violated })));
    Ok(if violated { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run_search(a: &SearchArgs) -> Result<ExitCode, CliError> {
    let spec = parse_spec(&a.spec)?;
    let seed = a.seeding.spec();
    if a.sweep_p {
        let sweep = sweep_class_p(&spec, a.m)?;
        let ok = sweep.all_equal;
        emit(&Report::new("search", a, seed, json!(sweep)));
        return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) });
    }
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("--out is required unless --sweep-p".into()))?;
    fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("--out {}: {e}", out.display())))?;

    let config = SearchConfig {
        spec,
        m: a.m,
        restarts: a.restarts,
        saa_samples: a.saa_samples,
        refine_samples: a.refine_samples,
        max_iters_per_restart: a.max_iters,
        simplex_tolerance: a.simplex_tol,
        seed,
    };
    let result = search_counterexample(&config)?;
    let full = Report::new("search", a, seed, json!({ "config": config, "result": result }));
    report::write_json(&out.join("result.json"), &full)?;
    report::write_trace(&out.join("trace.csv"), &result.trace)?;

    let mut summary = serde_json::to_value(&result).expect("serializable");
    summary.as_object_mut().expect("object").remove("trace");
    emit(&Report::new(
        "search",
        a,
        seed,
        json!({
            "config": config,
            "result": summary,
            "note": "a flagged violation is statistical evidence from finite samples, not a disproof",
        }),
    ));
    Ok(if result.conjecture_violation { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Verify(a) => run_verify(a),
        Command::Search(a) => run_search(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Usage(format!("--threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
