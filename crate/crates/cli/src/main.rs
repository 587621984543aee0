//! brsim: batch front-end for Brown-Resnick simulation and verification.
//!
//! Exit status: 0 when every verification passes, 1 on a statistical
//! failure, 2 on invalid input.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use clap::Parser;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "brsim", version, about = "Simulate and verify Brown-Resnick max-stable fields")]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Affects speed only.
    #[arg(long)]
    threads: Option<usize>,
}

fn invalid(out: Option<&Path>, pointer: &str, message: &str) -> ExitCode {
    eprintln!("invalid input: {pointer}: {message}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let summary = serde_json::json!({
                "pass": false,
                "error": { "pointer": pointer, "message": message },
            });
            let _ = run::write_summary(dir, &summary);
        }
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return invalid(cli.out.as_deref(), "/", &format!("cannot read {}: {e}", cli.config.display())),
    };
    let cfg = match config::parse(&text, cli.seed) {
        Ok(c) => c,
        Err(e) => return invalid(cli.out.as_deref(), &e.pointer, &e.message),
    };
    let Some(out) = cli.out.clone().or_else(|| cfg.output_dir.clone()) else {
        return invalid(None, "/output_dir", "no output directory (set `output_dir` or pass --out)");
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        return invalid(None, "/output_dir", &format!("cannot create {}: {e}", out.display()));
    }
    let work = || run::run(cfg, &out);
    let result = match cli.threads {
        Some(0) => return invalid(Some(&out), "--threads", "must be at least 1"),
        Some(n) => brownresnick::exec::with_threads(n, work),
        None => work(),
    };
    let summary = match result {
        Ok(s) => s,
        Err(e) => return invalid(Some(&out), "/", &e.to_string()),
    };
    if let Err(e) = run::write_summary(&out, &summary) {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    match summary.first_failure() {
        None => {
            println!("{}: pass ({})", summary.command, out.join("summary.json").display());
            ExitCode::SUCCESS
        }
        Some(what) => {
            eprintln!("statistical failure: {what}");
            ExitCode::from(1)
        }
    }
}
