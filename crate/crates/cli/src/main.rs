use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use trihomog::cell::k_report;
use trihomog::epsdomain::{solve_eps_spectrum_extended, EpsProblem, MeshRule};
use trihomog::limit1d::{limit_mesh, solve_limit_spectrum_extended, LimitBc, LimitKind, DEFAULT_LIMIT_ELEMENTS};
use trihomog::profile::{load_profile, OscillationProfile, PerturbationParams};
use trihomog::sweep::{run_cell_k, run_converge, run_verify, EpsValue, SweepConfig, VerifyLevel, VerifyOptions, DEFAULT_CELL_CUTOFF};
use trihomog::Error;

#[derive(Parser)]
#[command(name = "trihomog", version, about = "Boundary homogenization laboratory for the triharmonic operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strange-term coefficient K by three routes.
    CellK {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CELL_CUTOFF)]
        cutoff: i32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectrum of one limit problem.
    LimitSpec {
        #[arg(long, value_parser = ["int", "strange", "dir"])]
        bc: String,
        /// `auto` computes K from `--profile` (default b = 1 + cos 2πȳ).
        #[arg(long = "K", default_value = "auto")]
        k: String,
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Add the strange term with the opposite sign.
        #[arg(long)]
        flip: bool,
        #[arg(long)]
        modes: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_LIMIT_ELEMENTS)]
        elements: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectrum of the oscillating-domain problem.
    EpsSpec {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// `1/n` or a decimal reciprocal of an integer.
        #[arg(long)]
        eps: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        elements_per_period: Option<usize>,
        #[arg(long)]
        layer_elements: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regime-classification sweep.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant suites.
    Verify {
        #[arg(long, value_parser = ["fast", "full"], default_value = "fast")]
        level: String,
        /// Check the cell suite against this mode constant instead.
        #[arg(long)]
        tamper_mode_constant: Option<f64>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Process outcome: invariant failures exit 1, input errors 2.
enum Failure {
    Invariant(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Io(_) | Error::Json(_) => Failure::Input(e.to_string()),
            other => Failure::Invariant(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn cell_k(profile: &Path, cutoff: i32, out: &Path) -> Outcome {
    let report = run_cell_k(profile, cutoff)?;
    write_json(out, &report)?;
    println!(
        "K: energy {:.17e}, boundary {:.17e}, test function {:.17e}",
        report.k_energy, report.k_boundary, report.k_testfunction
    );
    if report.agrees() {
        Ok(())
    } else {
        Err(Failure::Invariant("the three K routes disagree".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn limit_spec(bc: &str, k: &str, profile: Option<&Path>, flip: bool, modes: usize, count: usize, elements: usize, out: &Path) -> Outcome {
    let kind = LimitKind::parse(bc)?;
    let bc = match kind {
        LimitKind::Intermediate => LimitBc::intermediate(),
        LimitKind::DirichletOnW => LimitBc::dirichlet(),
        LimitKind::StrangeTerm => {
            let value = if k == "auto" {
                let p = match profile {
                    Some(path) => load_profile(path)?,
                    None => OscillationProfile::cosine(1.0, 1.0)?,
                };
                k_report(&p)?.k_energy
            } else {
                k.parse::<f64>().map_err(|_| Failure::Input(format!("bad K {k:?}")))?
            };
            if flip {
                LimitBc::strange_flipped(value)?
            } else {
                LimitBc::strange(value)?
            }
        }
    };
    let spec = solve_limit_spectrum_extended(&bc, modes, count, &limit_mesh(elements)?)?;
    write_json(out, &spec.to_file())?;
    for e in &spec.eigs {
        println!("m {:>3} idx {} λ {:.17e}", e.m, e.idx, e.lambda);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eps_spec(profile: &Path, alpha: f64, eps: &str, count: usize, epp: Option<usize>, layer: Option<usize>, out: &Path) -> Outcome {
    let p = load_profile(profile)?;
    let params = PerturbationParams::new(EpsValue::parse(eps)?.0, alpha)?;
    let base = MeshRule::for_alpha(alpha);
    let rule = MeshRule {
        elements_per_period: epp.unwrap_or(base.elements_per_period),
        layer_elements: layer.unwrap_or(base.layer_elements),
    };
    let problem = EpsProblem::with_rule(p, params, rule)?;
    let (_, r) = solve_eps_spectrum_extended(&problem, count)?;
    let file = r.to_file();
    write_json(out, &file)?;
    println!("dof {} assembly {:.1}s solve {:.1}s", file.dof, file.assembly_seconds, file.solve_seconds);
    for (j, v) in file.eigs.iter().enumerate() {
        println!("λ_{} {:.17e}", j + 1, v);
    }
    if r.values.iter().any(|&v| v < 1.0 - 1e-8) {
        return Err(Failure::Invariant("an eigenvalue fell below 1".into()));
    }
    Ok(())
}

fn converge(config: &Path, out: &Path) -> Outcome {
    let cfg = SweepConfig::load(config)?;
    let table = run_converge(&cfg)?;
    table.write(out).map_err(Error::from)?;
    println!("K {:.17e}; table written to {}", table.k, out.display());
    for r in table.rows.iter().filter(|r| r.j == 1) {
        println!(
            "α {} ε {} λ_ε {:.10e} d_int {:.3e} d_hat {:.3e} d_dir {:.3e} predicted {} classified {}",
            r.alpha,
            r.eps,
            r.lambda_eps,
            r.d_int,
            r.d_hat,
            r.d_dir,
            r.predicted.name(),
            r.classified.map_or("failed", |c| c.name())
        );
    }
    let mut problems = Vec::new();
    for s in &table.sign_checks {
        eprintln!(
            "strange-term sign at α {} ε {}: d_hat(literal −K) = {:.17e}, d_hat(flipped +K) = {:.17e}",
            s.alpha, s.eps, s.d_hat_literal, s.d_hat_flipped
        );
        if s.opposite_sign_preferred {
            problems.push(format!("α {}: the ε-spectrum is closer to the strange term with the opposite sign", s.alpha));
        }
    }
    let failed: Vec<_> = table.rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("α {} ε {}: {e}", r.alpha, r.eps))).collect();
    problems.extend(failed);
    if problems.is_empty() {
        Ok(())
    } else {
        for p in &problems {
            eprintln!("FAIL {p}");
        }
        Err(Failure::Invariant(format!("{} problem(s)", problems.len())))
    }
}

fn verify(level: &str, tamper: Option<f64>, json: Option<&Path>) -> Outcome {
    let report = run_verify(VerifyLevel::parse(level)?, &VerifyOptions { tamper_mode_constant: tamper });
    for s in &report.suites {
        println!("{} {:<36} {:>7.2}s  {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.seconds, s.detail);
    }
    if let Some(path) = json {
        write_json(path, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("failing invariants: {}", report.failed().join(", "))))
    }
}

fn init_threads() -> Outcome {
    if let Ok(v) = std::env::var("TRIHOMOG_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Failure::Input(format!("TRIHOMOG_THREADS={v:?} is not a count")))?;
        if n == 0 {
            return Err(Failure::Input("TRIHOMOG_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    init_threads()?;
    match cli.command {
        Command::CellK { profile, cutoff, out } => cell_k(&profile, cutoff, &out),
        Command::LimitSpec { bc, k, profile, flip, modes, count, elements, out } => {
            limit_spec(&bc, &k, profile.as_deref(), flip, modes, count, elements, &out)
        }
        Command::EpsSpec { profile, alpha, eps, count, elements_per_period, layer_elements, out } => {
            eps_spec(&profile, alpha, &eps, count, elements_per_period, layer_elements, &out)
        }
        Command::Converge { config, out } => converge(&config, &out),
        Command::Verify { level, tamper_mode_constant, json } => verify(&level, tamper_mode_constant, json.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(2)
        }
    }
}
