use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dampwave::pipeline::{
    attractor_sweep, decay, hypothesis_clause, regularity, run_trajectory, summarize, verify_hypotheses, write_attractor,
    write_decay, write_hypotheses, write_regularity, write_trajectory,
};
use dampwave::scenario::{Prepared, Scenario};
use dampwave::Error;

/// Verification runs for semilinear damped wave equations and their parabolic limit.
#[derive(Parser)]
#[command(name = "dampwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble and sweep parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, norm ladder, growth, smoothness and dissipativeness checks.
    VerifyHypotheses(Common),
    /// Parameter chain and exponential decay certificates on the near-attractor window.
    Decay(Common),
    /// Variation-of-constants bootstrap and the epsilon-uniform bound.
    Regularity(Common),
    /// Attractor samples and the semidistance curve as epsilon goes to zero.
    AttractorSweep(Common),
    /// Summarizes the JSON reports in a directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

enum Failure {
    Certificate(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            Error::Io(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Certificate(other.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

fn setup(c: &Common, needs_mu: bool) -> Result<Prepared, Failure> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let mut s = Scenario::load(&c.config)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    std::fs::create_dir_all(&c.out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", c.out.display())))?;
    match s.prepare(needs_mu) {
        Ok(p) => Ok(p),
        Err(e) => match hypothesis_clause(&e) {
            Some(clause) => {
                let text = serde_json::json!({
                    "command": "verify-hypotheses",
                    "report": { "failures": [clause], "error": e.to_string(), "passed": false }
                });
                let _ = std::fs::write(c.out.join("hypotheses.json"), format!("{text:#}\n"));
                Err(Failure::Certificate(format!("{clause}: {e}")))
            }
            None => Err(e.into()),
        },
    }
}

fn verdict(passed: bool, what: &str, detail: String) -> Outcome {
    if passed {
        Ok(format!("{what}: pass ({detail})"))
    } else {
        Err(Failure::Certificate(format!("{what}: fail ({detail})")))
    }
}

fn cmd_hypotheses(c: &Common) -> Outcome {
    let p = setup(c, false)?;
    let h = verify_hypotheses(&p)?;
    write_hypotheses(&c.out, &p, &h)?;
    let detail = if h.failures.is_empty() {
        format!("lambda1 = {}", p.model.lambda1())
    } else {
        format!("failing clauses: {}", h.failures.join(", "))
    };
    verdict(h.passed, "hypotheses", detail)
}

fn cmd_decay(c: &Common) -> Outcome {
    let p = setup(c, false)?;
    let full = run_trajectory(&p, p.scenario.run.epsilon)?;
    write_trajectory(&c.out, &p, &full)?;
    let out = decay(&p, &full, &p.scenario.decay.level.levels())?;
    write_decay(&c.out, &p, &out)?;
    let detail: Vec<String> = out
        .certificates
        .iter()
        .map(|k| format!("{:?}: M = {:.4}, rate = {:.4}", k.level, k.m, k.rate))
        .collect();
    verdict(out.passed, "decay", detail.join("; "))
}

fn cmd_regularity(c: &Common) -> Outcome {
    let p = setup(c, false)?;
    let out = regularity(&p)?;
    write_regularity(&c.out, &p, &out)?;
    verdict(
        out.passed,
        "regularity",
        format!(
            "bootstrap bound {}, reconstruction {}, eps-uniform bound {}, uniformity ratio {:.4}",
            out.theorem1_passed, out.voc_passed, out.theorem2_passed, out.uniformity.ratio
        ),
    )
}

fn cmd_attractor(c: &Common) -> Outcome {
    let p = setup(c, true)?;
    let out = attractor_sweep(&p)?;
    write_attractor(&c.out, &p, &out)?;
    let d: Vec<String> = out.curve.rows.iter().map(|r| format!("{:.4}", r.d_h1l2)).collect();
    verdict(
        out.passed,
        "attractor-sweep",
        format!("d = [{}], rank correlation {:?}", d.join(", "), out.curve.rank_correlation),
    )
}

fn cmd_report(out: &Path) -> Outcome {
    let s = summarize(out)?;
    std::fs::write(out.join("report.md"), &s).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::VerifyHypotheses(c) => cmd_hypotheses(c),
        Command::Decay(c) => cmd_decay(c),
        Command::Regularity(c) => cmd_regularity(c),
        Command::AttractorSweep(c) => cmd_attractor(c),
        Command::Report { out } => cmd_report(out),
    };
    match res {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(Failure::Certificate(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
