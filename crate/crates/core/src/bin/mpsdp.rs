//! Command-line front end: decide / solve / verify / gen.
//!
//! Exit codes (stable API): 0 feasible, solved, or verified; 1 infeasible or
//! failed verification; 2 usage or parse error; 3 runtime error; 4 iteration
//! limit.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpsdp::decision::{
    solve_decision, solve_decision_with_observer, DecisionOutcome, Mode, Resolution,
    SolverConfig, TraceSink,
};
use mpsdp::generate::{family_comments, generate, Family};
use mpsdp::instance::MixedInstance;
use mpsdp::lp::{solve_decision_lp, LpInstance};
use mpsdp::symmat::{eig_sym, SymMatrix};
use mpsdp::verify::{check_feasibility_certificate, check_infeasibility_witness};
use mpsdp::Error;

const EXIT_FEASIBLE: u8 = 0;
const EXIT_INFEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ITERATION_LIMIT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mpsdp",
    about = "Solver for mixed packing-and-covering semidefinite programs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Approximate,
}

#[derive(Args)]
struct SolverFlags {
    /// Target accuracy.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Execution path.
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// RNG seed (falls back to the MPSDP_SEED environment variable, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap (default: ten times the explicit bound).
    #[arg(long)]
    max_iters: Option<u64>,
    /// Use the width-free threshold K = 4 ln(nd)/eps (covering matrices
    /// must commute).
    #[arg(long)]
    commuting_covering: bool,
    /// Write one tab-separated line per iteration to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Cap on worker threads (the current implementation is sequential; the
    /// flag is accepted for interface stability).
    #[arg(long)]
    threads: Option<usize>,
    /// Print full dense witness matrices instead of eigenvalue summaries.
    #[arg(long)]
    full_witness: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decide feasibility of an instance file (MPSDP or MPLP).
    Decide {
        path: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Minimize mu by binary search over decision guesses.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        /// Lower end of the mu bracket (default: derived from the instance).
        #[arg(long)]
        mu_lo: Option<f64>,
        /// Upper end of the mu bracket.
        #[arg(long)]
        mu_hi: Option<f64>,
    },
    /// Check a feasibility certificate (--x) or infeasibility witness
    /// (--witness Y_PATH Z_PATH) against an instance file.
    Verify {
        path: PathBuf,
        /// Comma-separated candidate x for the feasibility certificate.
        #[arg(long, conflicts_with = "witness")]
        x: Option<String>,
        /// Witness matrix files (dense: first token n, then n*n row-major
        /// entries).
        #[arg(long, num_args = 2)]
        witness: Option<Vec<PathBuf>>,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Generate a seeded test instance.
    Gen {
        #[arg(long, value_parser = <Family as std::str::FromStr>::from_str)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn env_seed() -> u64 {
    std::env::var("MPSDP_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn exit_for_error(e: &Error) -> u8 {
    match e {
        Error::Input(_)
        | Error::DimMismatch(_, _)
        | Error::Parse { .. }
        | Error::Config(_)
        | Error::Io(_) => EXIT_USAGE,
        Error::NonFinite(_, _)
        | Error::ExpOverflow(_)
        | Error::Precondition(_)
        | Error::SolverFailure(_) => EXIT_RUNTIME,
    }
}

fn report(key: &str, value: impl std::fmt::Display) {
    println!("{key}\t{value}");
}

fn report_vec(key: &str, values: &[f64]) {
    let joined: Vec<String> = values.iter().map(|v| format!("{v:.12e}")).collect();
    report(key, joined.join(" "));
}

enum LoadedInstance {
    Matrix(MixedInstance<f64>),
    Lp(LpInstance<f64>),
}

/// Loads a file as MPSDP or MPLP depending on its header line.
fn load_any(path: &PathBuf) -> Result<LoadedInstance, Error> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let header = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .unwrap_or("");
    if header.starts_with("MPLP") {
        Ok(LoadedInstance::Lp(LpInstance::parse(std::io::Cursor::new(
            text,
        ))?))
    } else {
        Ok(LoadedInstance::Matrix(MixedInstance::parse(
            std::io::Cursor::new(text),
        )?))
    }
}

fn solver_config(flags: &SolverFlags) -> Result<SolverConfig<f64>, Error> {
    if let Some(t) = flags.threads {
        if t == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
    }
    Ok(SolverConfig {
        eps: flags.eps,
        mode: match flags.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Approximate => Mode::Approximate,
        },
        max_iters: flags.max_iters,
        seed: flags.seed.unwrap_or_else(env_seed),
        commuting_covering: flags.commuting_covering,
        ..SolverConfig::default()
    })
}

fn print_witness(name: &str, m: &SymMatrix<f64>, full: bool) -> Result<(), Error> {
    report(&format!("witness_{name}_trace"), format!("{:.12e}", m.trace()));
    let eig = eig_sym(m)?;
    report_vec(&format!("witness_{name}_eigenvalues"), &eig.eigenvalues);
    if full {
        for j in 0..m.n() {
            let row: Vec<f64> = (0..m.n()).map(|k| m.get(j, k)).collect();
            report_vec(&format!("witness_{name}_row_{j}"), &row);
        }
    }
    Ok(())
}

fn print_outcome(out: &DecisionOutcome<f64>, eps: f64, full_witness: bool) -> Result<u8, Error> {
    report("tag", out.tag());
    report("iterations", out.iterations);
    report("phases", out.phase_count);
    report("k_threshold", format!("{:.12e}", out.k_threshold));
    report("eps", eps);
    report("eps_internal", format!("{:.12e}", out.eps_internal));
    report("lambda_max_phi", format!("{:.12e}", out.lambda_max_phi));
    report("lambda_min_psi", format!("{:.12e}", out.lambda_min_psi));
    match &out.resolution {
        Resolution::Feasible { x } => {
            report_vec("x", x);
            Ok(EXIT_FEASIBLE)
        }
        Resolution::Infeasible { y, z } => {
            print_witness("y", y, full_witness)?;
            print_witness("z", z, full_witness)?;
            Ok(EXIT_INFEASIBLE)
        }
        Resolution::IterationLimit { x, detail } => {
            report("detail", detail);
            report_vec("x", x);
            Ok(EXIT_ITERATION_LIMIT)
        }
    }
}

fn cmd_decide(path: &PathBuf, flags: &SolverFlags) -> Result<u8, Error> {
    let cfg = solver_config(flags)?;
    let out = match load_any(path)? {
        LoadedInstance::Matrix(inst) => match &flags.trace {
            Some(trace_path) => {
                let file = std::fs::File::create(trace_path)?;
                let mut sink = TraceSink::new(std::io::BufWriter::new(file));
                let out = solve_decision_with_observer(&inst, &cfg, &mut sink)?;
                if let Some(e) = sink.error {
                    return Err(Error::Io(e));
                }
                out
            }
            None => solve_decision(&inst, &cfg)?,
        },
        LoadedInstance::Lp(lp) => {
            if flags.trace.is_some() {
                return Err(Error::config(
                    "--trace is only supported for matrix (MPSDP) instances",
                ));
            }
            solve_decision_lp(&lp, &cfg)?
        }
    };
    print_outcome(&out, flags.eps, flags.full_witness)
}

fn cmd_solve(
    path: &PathBuf,
    flags: &SolverFlags,
    mu_lo: Option<f64>,
    mu_hi: Option<f64>,
) -> Result<u8, Error> {
    let cfg = solver_config(flags)?;
    let inst = match load_any(path)? {
        LoadedInstance::Matrix(inst) => inst,
        LoadedInstance::Lp(lp) => lp.to_mixed()?,
    };
    let range = match (mu_lo, mu_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(Error::config(
                "--mu-lo and --mu-hi must be given together",
            ))
        }
    };
    let r = mpsdp::optimize::solve(&inst, flags.eps, &cfg, range)?;
    report("mu", format!("{:.12e}", r.mu));
    report("oracle_calls", r.oracle_calls);
    for (mu, tag) in &r.guesses {
        report("guess", format!("{mu:.12e} {tag}"));
    }
    report_vec("x", &r.x);
    Ok(EXIT_FEASIBLE)
}

/// Dense symmetric matrix file: first token `n`, then `n*n` row-major
/// entries (whitespace-separated; `#` starts a comment).
fn load_dense_matrix(path: &PathBuf) -> Result<SymMatrix<f64>, Error> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let cleaned: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let mut toks = cleaned.split_whitespace();
    let n: usize = toks
        .next()
        .ok_or_else(|| Error::input("empty matrix file"))?
        .parse()
        .map_err(|_| Error::input("first token must be the dimension n"))?;
    let entries: Vec<f64> = toks
        .map(|t| {
            t.parse()
                .map_err(|_| Error::input(format!("cannot parse matrix entry '{t}'")))
        })
        .collect::<Result<_, Error>>()?;
    if entries.len() != n * n {
        return Err(Error::input(format!(
            "expected {} entries for a {n} x {n} matrix, got {}",
            n * n,
            entries.len()
        )));
    }
    Ok(SymMatrix::from_rows(n, &entries))
}

fn cmd_verify(
    path: &PathBuf,
    x: &Option<String>,
    witness: &Option<Vec<PathBuf>>,
    eps: f64,
) -> Result<u8, Error> {
    let inst = match load_any(path)? {
        LoadedInstance::Matrix(inst) => inst,
        LoadedInstance::Lp(lp) => lp.to_mixed()?,
    };
    let r = match (x, witness) {
        (Some(xs), None) => {
            let x: Vec<f64> = xs
                .split(|c| c == ',' || c == ' ')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::input(format!("cannot parse x value '{t}'")))
                })
                .collect::<Result<_, Error>>()?;
            check_feasibility_certificate(&inst, &x, eps)?
        }
        (None, Some(paths)) => {
            let y = load_dense_matrix(&paths[0])?;
            let z = load_dense_matrix(&paths[1])?;
            check_infeasibility_witness(&inst, &y, &z, eps)?
        }
        _ => {
            return Err(Error::config(
                "verify needs exactly one of --x or --witness",
            ))
        }
    };
    report("passed", r.passed);
    report("lhs", format!("{:.12e}", r.lhs));
    report("rhs", format!("{:.12e}", r.rhs));
    report("margin", format!("{:.12e}", r.margin));
    report("detail", &r.detail);
    Ok(if r.passed { EXIT_FEASIBLE } else { EXIT_INFEASIBLE })
}

fn cmd_gen(
    family: Family,
    n: usize,
    d: usize,
    seed: Option<u64>,
    out: &PathBuf,
) -> Result<u8, Error> {
    let seed = seed.unwrap_or_else(env_seed);
    let inst: MixedInstance<f64> = generate(family, n, d, seed)?;
    let mut file = std::fs::File::create(out)?;
    use std::io::Write;
    for line in family_comments(family, n, d, seed) {
        writeln!(file, "# {line}")?;
    }
    inst.write(&mut file)?;
    report("family", family.as_str());
    report("out", out.display());
    Ok(EXIT_FEASIBLE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decide { path, flags } => cmd_decide(path, flags),
        Command::Solve {
            path,
            flags,
            mu_lo,
            mu_hi,
        } => cmd_solve(path, flags, *mu_lo, *mu_hi),
        Command::Verify {
            path,
            x,
            witness,
            eps,
        } => cmd_verify(path, x, witness, *eps),
        Command::Gen {
            family,
            n,
            d,
            seed,
            out,
        } => cmd_gen(*family, *n, *d, *seed, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for_error(&e))
        }
    }
}
