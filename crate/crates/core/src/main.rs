use clap::{Args, Parser, Subcommand};
use polybubble::cli::{self, RunConfig, EXIT_USAGE};
use std::path::PathBuf;
use std::process::ExitCode;

/// Verification suites and radial experiments for critical polyharmonic
/// equations.
#[derive(Parser, Debug)]
#[command(name = "polybubble", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (falls back to $POLYBUBBLE_OUT, then ./polybubble-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Command-specific tolerance (see README).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact and numeric PDE checks of the standard bubble, plus decay slopes.
    BubbleCheck(BubbleCheck),
    /// Cayley-map invariances and Green's function conjugation.
    CayleyGreen(CayleyGreen),
    /// Influence data and ratio tables of a bubble-tree configuration.
    Tree(Tree),
    /// Pohozaev identity suites.
    Pohozaev(Pohozaev),
    /// Radial continuation branch.
    Solve(Solve),
}

#[derive(Args, Debug)]
struct BubbleCheck {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Inclusive range such as 3..12.
    #[arg(long, value_parser = parse_range)]
    n_range: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_range)]
    k_range: Option<(usize, usize)>,
}

#[derive(Args, Debug)]
struct CayleyGreen {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Args, Debug)]
struct Tree {
    /// TreeConfig JSON file.
    file: Option<PathBuf>,
    /// Family-law parameters to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct Pohozaev {
    /// manufactured or bubble.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct Solve {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Coefficient values, comma separated and monotone.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 0..)]
    mu_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seed_scales: Option<Vec<f64>>,
    /// Repeat the run recorded in a manifest.json.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected LO..HI")?;
    let lo = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    if lo > hi {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

fn overlay(cli: Cli) -> RunConfig {
    let mut c = RunConfig {
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
        tol: cli.tol,
        ..Default::default()
    };
    match cli.command {
        Command::BubbleCheck(a) => {
            c.command = Some("bubble-check".into());
            (c.n, c.k, c.n_range, c.k_range) = (a.n, a.k, a.n_range, a.k_range);
        }
        Command::CayleyGreen(a) => {
            c.command = Some("cayley-green".into());
            (c.n, c.k, c.pairs) = (a.n, a.k, a.pairs);
        }
        Command::Tree(a) => {
            c.command = Some("tree".into());
            (c.tree, c.alphas, c.samples) = (a.file, a.alphas, a.samples);
        }
        Command::Pohozaev(a) => {
            c.command = Some("pohozaev".into());
            (c.suite, c.n, c.k) = (a.suite, a.n, a.k);
        }
        Command::Solve(a) => {
            c.command = Some("solve".into());
            (c.n, c.k, c.p, c.mu_grid, c.seed_scales, c.resume) =
                (a.n, a.k, a.p, a.mu_grid, a.seed_scales, a.resume);
        }
    }
    c
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let base = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        },
        None => RunConfig::default(),
    };
    let cfg = base.merge(&overlay(cli));
    let result = cli::run(&cfg);
    match &result {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.passed {
                println!("PASS");
            } else {
                eprintln!("FAIL: {} failing case(s)", o.failures.len());
                for f in &o.failures {
                    eprintln!("  {f}");
                }
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
