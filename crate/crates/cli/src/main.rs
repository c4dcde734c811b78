use clap::{Args, Parser, Subcommand, ValueEnum};
use cliffpi::beltrami::{adjoint_gap, contraction_bound, solve_from, BeltramiError, ProblemFile, SolveTrace};
use cliffpi::geometry::Kind;
use cliffpi::operators::Discretization;
use cliffpi::suites::{run_suite, Check, Format, SuiteConfig, SuiteError, SuiteName, SCHEMA_VERSION};
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "cliffpi", version, about = "Verification suites and Beltrami solves for Clifford-valued Pi operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named verification suite and write its report.
    #[command(name = "run_suite", alias = "run-suite")]
    RunSuite(SuiteArgs),
    /// Solve a Beltrami problem described by a JSON file.
    Beltrami(BeltramiArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Clifford,
    BorelPompeiu,
    Isometry,
    Adjoint,
    Spectrum,
    LpBound,
    Beltrami,
}

impl From<SuiteArg> for SuiteName {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Clifford => SuiteName::Clifford,
            SuiteArg::BorelPompeiu => SuiteName::BorelPompeiu,
            SuiteArg::Isometry => SuiteName::Isometry,
            SuiteArg::Adjoint => SuiteName::Adjoint,
            SuiteArg::Spectrum => SuiteName::Spectrum,
            SuiteArg::LpBound => SuiteName::LpBound,
            SuiteArg::Beltrami => SuiteName::Beltrami,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    Euclid,
    Sphere,
    Rp,
    Cylinder,
    Hopf,
    Hyperbolic,
}

impl From<ManifoldArg> for Kind {
    fn from(m: ManifoldArg) -> Self {
        match m {
            ManifoldArg::Euclid => Kind::Euclid,
            ManifoldArg::Sphere => Kind::Sphere,
            ManifoldArg::Rp => Kind::Rp,
            ManifoldArg::Cylinder => Kind::Cylinder,
            ManifoldArg::Hopf => Kind::Hopf,
            ManifoldArg::Hyperbolic => Kind::Hyperbolic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    manifold: Option<ManifoldArg>,
    #[arg(long)]
    n: Option<usize>,
    /// Lattice rank (cylinder).
    #[arg(long)]
    k: Option<usize>,
    /// Bundle index (rp: 1 or 2, cylinder: l).
    #[arg(long)]
    bundle: Option<usize>,
    /// Resolution ladder, e.g. `8,16,32`.
    #[arg(long, value_delimiter = ',')]
    resolution: Option<Vec<usize>>,
    #[arg(long)]
    trunc: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random fields or pairs per resolution.
    #[arg(long)]
    samples: Option<usize>,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Args)]
struct BeltramiArgs {
    /// Problem JSON.
    problem: PathBuf,
    /// Report output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV trace of update norms.
    #[arg(long)]
    trace: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<SuiteError> for Failure {
    fn from(e: SuiteError) -> Self {
        match e {
            SuiteError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

impl From<BeltramiError> for Failure {
    fn from(e: BeltramiError) -> Self {
        match e {
            BeltramiError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::RunSuite(a) => suite_command(a),
        Command::Beltrami(a) => beltrami_command(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn build_config(a: &SuiteArgs) -> Result<SuiteConfig, Failure> {
    let suite = SuiteName::from(a.suite);
    let mut c = match &a.config {
        Some(p) => SuiteConfig::from_json(&read_file(p)?, Some(suite))?,
        None => SuiteConfig::default_for(suite),
    };
    if c.suite != suite {
        return Err(Failure::Usage(format!("config is for suite '{}', not '{suite}'", c.suite)));
    }
    if let Some(m) = a.manifold {
        let kind = Kind::from(m);
        if kind != c.manifold {
            // a new geometry starts from its own bundle, rank and truncation defaults
            let spec = cliffpi::geometry::ManifoldSpec::default_for(kind, a.n.unwrap_or(c.n));
            c.k = spec.k;
            c.bundle = spec.bundle;
            c.truncation = spec.truncation;
        }
        c.manifold = kind;
    }
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(k) = a.k {
        c.k = k;
    }
    if let Some(b) = a.bundle {
        c.bundle = b;
    }
    if let Some(r) = &a.resolution {
        c.resolutions = r.clone();
    }
    if let Some(t) = a.trunc {
        c.truncation = t;
    }
    if let Some(t) = a.tol {
        c.tol = t;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(s) = a.samples {
        c.samples = s;
    }
    Ok(c)
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn suite_command(a: SuiteArgs) -> Result<bool, Failure> {
    let config = build_config(&a)?;
    config.validate()?;
    let mut out = open_out(&a.out)?;
    let report = run_suite(&config)?;
    report.write(&mut out, a.format.into())?;
    out.flush().map_err(|e| Failure::Io(e.to_string()))?;
    for c in report.failures() {
        eprintln!("FAIL {}: {:e} (bound {:?})", c.name, c.value, c.bound);
    }
    Ok(report.pass())
}

#[derive(Serialize)]
struct SolveReport {
    schema: u32,
    command: &'static str,
    problem: ProblemFile,
    trace: SolveTrace,
    checks: Vec<Check>,
}

fn beltrami_command(a: BeltramiArgs) -> Result<bool, Failure> {
    let problem_file: ProblemFile = serde_json::from_str(&read_file(&a.problem)?)
        .map_err(|e| Failure::Usage(format!("problem file: {e}")))?;
    let grid = problem_file.grid()?;
    let disc = Discretization::new(&grid);
    let problem = problem_file.problem(&disc)?;
    let bound = contraction_bound(&disc, &problem.q)?;
    let (trace, diverged) = match solve_from(&disc, &problem, None, bound) {
        Ok((_, _, mut t)) => {
            t.adjoint_gap = adjoint_gap(&disc)?;
            (t, false)
        }
        Err(BeltramiError::Diverged(t)) => (*t, true),
        Err(e) => return Err(e.into()),
    };
    let mut checks = vec![
        Check::info("q_sup_norm", problem.q.sup_norm()),
        Check::at_most("contraction_bound", bound, 1.0 - f64::EPSILON),
        Check::at_least("converged", f64::from(u8::from(trace.converged && !diverged)), 1.0),
    ];
    if !diverged {
        checks.push(Check::at_most("residual", trace.final_residual, 10.0 * grid.h + problem.tol));
    }
    if let Some(p) = &a.trace {
        let f = File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
        trace.write_csv(BufWriter::new(f))?;
    }
    let report = SolveReport { schema: SCHEMA_VERSION, command: "beltrami", problem: problem_file, trace, checks };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = open_out(&a.out)?;
    writeln!(out, "{text}").and_then(|_| out.flush()).map_err(|e| Failure::Io(e.to_string()))?;
    let pass = report.checks.iter().all(|c| c.pass);
    Ok(pass)
}
