mod analyze;
mod config;
mod sim;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use fractal_zrp::gasket::MAX_GRAPH_LEVEL;
use fractal_zrp::spectrum::{cache_path, eigendecompose, MAX_SPECTRAL_LEVEL};
use fractal_zrp::verify::{Suite, VerifyConfig};
use fractal_zrp::{build_gasket, Basis};

/// Zero-range process fluctuations on Sierpinski gasket graphs.
///
/// Every subcommand accepts `--config <file>` with `key = value` lines named
/// after its flags; flags given on the command line take precedence.
#[derive(Parser)]
#[command(name = "fzrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the level-n graph.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Gasket(GasketArgs),
    /// Eigendecompose the renormalized Laplacian and write the binary cache.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Eigen(EigenArgs),
    /// Simulate the stationary ZRP and record fluctuation-field channels.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    ZrpSim(sim::ZrpSimArgs),
    /// Simulate the finite-mode Ornstein-Uhlenbeck limit.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    OuSim(sim::OuSimArgs),
    /// Estimate invariants from trajectory CSVs.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Analyze(analyze::AnalyzeArgs),
    /// Run the acceptance suite; exits non-zero if any criterion fails.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct GasketArgs {
    #[arg(long)]
    level: u32,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EigenArgs {
    #[arg(long)]
    level: u32,
    /// Cache file; defaults to the standard name inside the cache directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cache: CacheDir,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct VerifyArgs {
    /// Level for the dynamical criteria.
    #[arg(long, default_value_t = 4)]
    level: u32,
    /// Reduced replica counts.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 2718)]
    seed: u64,
    /// JSON report with per-criterion details.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Eigen-cache directory: `--cache-dir`, else `FZRP_CACHE_DIR`, else
/// `.fzrp-cache`.
#[derive(Args, Serialize, Clone)]
#[serde(rename_all = "kebab-case")]
pub struct CacheDir {
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl CacheDir {
    pub fn resolve(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os("FZRP_CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".fzrp-cache"))
    }

    /// Fills in the directory actually used so it lands in the resolved config.
    pub fn resolved(&self) -> Self {
        Self {
            cache_dir: Some(self.resolve()),
        }
    }
}

/// Loads a cached basis, failing with the command that would create it.
pub fn load_basis(path: &Path, level: u32) -> Result<Basis> {
    if !path.exists() {
        anyhow::bail!(
            "no eigen cache for level {level} at {}; create it with `fzrp eigen --level {level} --out {}`",
            path.display(),
            path.display()
        );
    }
    let basis = Basis::load(path).with_context(|| format!("reading eigen cache {}", path.display()))?;
    if basis.level() != level {
        anyhow::bail!(
            "eigen cache {} is for level {}, not {level}; run `fzrp eigen --level {level}`",
            path.display(),
            basis.level()
        );
    }
    Ok(basis)
}

static SUBCOMMAND: OnceLock<String> = OnceLock::new();

/// Reports an invalid setting as a usage error naming the flag.
pub fn usage_error(field: &str, msg: impl std::fmt::Display) -> ! {
    let mut cmd = Cli::command();
    let name = SUBCOMMAND.get().cloned().unwrap_or_default();
    let mut sub = match cmd.find_subcommand_mut(&name) {
        Some(s) => s.clone().bin_name(format!("fzrp {name}")),
        None => cmd,
    };
    sub.error(ErrorKind::ValueValidation, format!("invalid --{field}: {msg}"))
        .exit()
}

pub fn require(ok: bool, field: &str, msg: &str) {
    if !ok {
        usage_error(field, msg);
    }
}

pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        _ => Box::new(BufWriter::new(io::stdout())),
    })
}

fn gasket(args: GasketArgs) -> Result<()> {
    require(args.level <= MAX_GRAPH_LEVEL, "level", &format!("must be at most {MAX_GRAPH_LEVEL}"));
    let g = build_gasket(args.level)?;
    let mut out = output(args.out.as_deref())?;
    g.write_text(&mut out)?;
    out.flush()?;
    Ok(())
}

fn eigen(args: EigenArgs) -> Result<()> {
    require(
        args.level <= MAX_SPECTRAL_LEVEL,
        "level",
        &format!("must be at most {MAX_SPECTRAL_LEVEL}"),
    );
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| cache_path(&args.cache.resolve(), args.level));
    let g = build_gasket(args.level)?;
    let basis: Basis = eigendecompose(&g)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    basis.save(&path)?;
    let settings = EigenArgs {
        out: Some(path.clone()),
        cache: args.cache.resolved(),
        ..args
    };
    let sidecar = serde_json::json!({
        "format": "eigen-cache",
        "version": fractal_zrp::spectrum::CACHE_VERSION,
        "config": config::resolved("eigen", &settings)?,
        "level": basis.level(),
        "modes": basis.modes(),
        "low_eigenvalues": &basis.eigenvalues()[..basis.modes().min(12)],
    });
    let meta = path.with_extension("json");
    std::fs::write(&meta, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    eprintln!("wrote {} ({} modes) and {}", path.display(), basis.modes(), meta.display());
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool> {
    require(
        (1..=5).contains(&args.level),
        "level",
        "dynamical criteria run at levels 1 to 5",
    );
    let mut suite = Suite::new(VerifyConfig {
        level: args.level,
        quick: args.quick,
        seed: args.seed,
    });
    let reports = suite.run_all(|r| println!("{}", r.line()));
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed} of {} criteria passed", reports.len());
    if let Some(path) = &args.out {
        let doc = serde_json::json!({
            "format": "verify-report",
            "version": 1,
            "config": config::resolved("verify", &args)?,
            "passed": passed == reports.len(),
            "criteria": reports,
        });
        let mut out = output(Some(path))?;
        serde_json::to_writer_pretty(&mut out, &doc)?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok(passed == reports.len())
}

fn dispatch(cli: Cli) -> Result<bool> {
    let name = match &cli.command {
        Command::Gasket(_) => "gasket",
        Command::Eigen(_) => "eigen",
        Command::ZrpSim(_) => "zrp-sim",
        Command::OuSim(_) => "ou-sim",
        Command::Analyze(_) => "analyze",
        Command::Verify(_) => "verify",
    };
    let _ = SUBCOMMAND.set(name.to_string());
    match cli.command {
        Command::Gasket(a) => gasket(a).map(|_| true),
        Command::Eigen(a) => eigen(a).map(|_| true),
        Command::ZrpSim(a) => sim::zrp_sim(a).map(|_| true),
        Command::OuSim(a) => sim::ou_sim(a).map(|_| true),
        Command::Analyze(a) => analyze::run(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
