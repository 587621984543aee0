//! Dispatches a validated config to the engine and writes the artifacts.

use crate::config::{Command, LaplaceOptions, RunConfig};
use brownresnick::analytics::TestReport;
use brownresnick::exec::Execution;
use brownresnick::limit::{run_anisotropic, run_thm17, run_thm22, RunSettings};
use brownresnick::m3::{drift_check, extract_top, mark_independence_probe, remark15_criterion, write_top_csv, DriftSettings, MarkProbeSettings};
use brownresnick::report::ExperimentReport;
use brownresnick::simulate::{simulate_batch_with, BatchSummary, FieldBatch};
use brownresnick::variogram::{CovarianceFunction, Point, Variogram};
use brownresnick::verify::{verify_cdf, verify_field, verify_laplace, verify_profiles, verify_shift, CheckOptions, LaplaceRun, SimRun};
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Engine(#[from] brownresnick::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Everything written to summary.json.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub pass: bool,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<ExperimentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extras: Option<serde_json::Value>,
}

impl Summary {
    /// First failing check as "report / check", if any.
    pub fn first_failure(&self) -> Option<String> {
        self.reports.iter().find(|r| !r.pass).map(|r| {
            let failed: Option<&TestReport> = r.marginal_ks.iter().chain(&r.checks).find(|c| !c.pass);
            let name = match failed {
                Some(c) => format!("{} (statistic {}, tolerance {})", c.name, c.statistic, c.tolerance),
                None => match r.bivariate_table.iter().find(|b| !b.pass) {
                    Some(b) => format!("bivariate{:?} at ({}, {}) (|diff| {}, tolerance {})", b.pair, b.y1, b.y2, (b.empirical - b.oracle).abs(), b.tolerance),
                    None => "unnamed".into(),
                },
            };
            format!("{} / {}", r.experiment, name)
        })
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, RunError> {
    let path = out.join(name);
    File::create(&path).map(BufWriter::new).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_samples(out: &Path, batch: &FieldBatch) -> Result<(), RunError> {
    batch.write_csv(create(out, "samples.csv")?)?;
    Ok(())
}

pub fn write_summary(out: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    std::fs::write(out.join("summary.json"), text).map_err(|source| RunError::Io {
        path: out.join("summary.json").display().to_string(),
        source,
    })
}

fn sim_run(cfg: &RunConfig) -> SimRun {
    SimRun {
        replicates: cfg.replicates,
        seed: cfg.seed(),
        stop: cfg.stop,
        exec: Execution::Parallel,
    }
}

fn check_options(cfg: &RunConfig) -> CheckOptions {
    CheckOptions {
        ks_level: cfg.tolerances.ks_level,
        se_multiplier: cfg.tolerances.se_multiplier,
        thresholds: cfg.thresholds.clone(),
    }
}

fn run_settings(cfg: &RunConfig) -> RunSettings {
    RunSettings {
        thresholds: cfg.thresholds.clone(),
        ..RunSettings::new(cfg.replicates, cfg.seed()).with_opts(cfg.convergence_options())
    }
}

/// Runs the configured command, writing artifacts into `out`.
pub fn run(cfg: RunConfig, out: &Path) -> Result<Summary, RunError> {
    let v = cfg.variogram.clone();
    let gamma = || v.as_ref().expect("validated");
    let sites = || cfg.sites.as_deref().expect("validated");
    let mut reports = Vec::new();
    let mut batch = None;
    let mut extras = None;
    match cfg.command {
        Command::Simulate => {
            let b = simulate_batch_with(Execution::Parallel, gamma(), &cfg.profile, sites(), &cfg.stop, cfg.seed(), cfg.replicates)?;
            write_samples(out, &b)?;
            batch = Some(b.summary());
        }
        Command::Cdf => {
            let ys = cfg.cdf_thresholds.as_deref().expect("validated");
            reports.push(verify_cdf(gamma(), &cfg.profile, sites(), ys, cfg.replicates, cfg.seed(), cfg.tolerances.se_multiplier)?);
        }
        Command::VerifyMargins => {
            let (r, b) = verify_field(gamma(), &cfg.profile, sites(), &cfg.pairs, &sim_run(&cfg), &check_options(&cfg))?;
            if cfg.outputs.samples_csv {
                write_samples(out, &b)?;
            }
            reports.push(r);
            batch = Some(b.summary());
        }
        Command::VerifyStationarity => {
            let [first, second] = cfg.shift_pairs.expect("validated");
            let (run, opts) = (sim_run(&cfg), check_options(&cfg));
            reports.push(verify_shift(gamma(), &cfg.profile, sites(), first, second, &run, &opts)?);
            if let Some(alt) = cfg.alt_profile {
                reports.push(verify_profiles(gamma(), [cfg.profile, alt], sites(), first, &run, &opts)?);
            }
        }
        Command::VerifyLaplace => {
            let lap = cfg.laplace.clone().unwrap_or_default();
            let LaplaceOptions { shifts, max_sites } = lap;
            let run = LaplaceRun {
                configs: cfg.replicates,
                shifts,
                max_sites,
                tol: cfg.tolerances.laplace_tol,
                seed: cfg.seed(),
            };
            reports.push(verify_laplace(gamma(), &run)?);
        }
        Command::ConvergeThm17 => {
            let g = gamma();
            let alpha = match cfg.alpha.or(g.homogeneity_exponent()) {
                Some(a) => a,
                None => return Err(brownresnick::Error::InvalidArgument("`alpha` is required when the variogram has no single exponent".into()).into()),
            };
            let cov = CovarianceFunction::exp_variogram(g.clone(), 1.0)?;
            reports.push(run_thm17(&cov, g, alpha, cfg.n.expect("validated"), sites(), &run_settings(&cfg))?);
        }
        Command::ConvergeThm22 => {
            reports.push(run_thm22(gamma(), cfg.n.expect("validated"), sites(), &run_settings(&cfg))?);
        }
        Command::ConvergeAniso => {
            let a = cfg.anisotropy.as_ref().expect("validated");
            reports.push(run_anisotropic(&a.weights, &a.alphas, cfg.n.expect("validated"), sites(), &run_settings(&cfg))?);
        }
        Command::M3Extract => {
            let (report, b) = m3_extract(&cfg, gamma(), out)?;
            reports.extend(report);
            batch = Some(b.summary());
        }
        Command::M3Drift => {
            let d = cfg.drift.clone().expect("validated");
            let settings = DriftSettings {
                radii: d.radii,
                threshold: d.threshold,
                replicates: cfg.replicates,
                seed: cfg.seed(),
                ring: d.ring,
                vanishing_tol: d.vanishing_tol,
            };
            reports.push(drift_check(gamma(), &cfg.profile, &settings, Execution::Parallel)?);
            if let Some(t) = &cfg.t_grid {
                let c = remark15_criterion(gamma(), t)?;
                extras = Some(serde_json::json!({ "drift_criterion": c }));
            }
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(Summary {
        command: cfg.command.name(),
        pass,
        config: cfg,
        reports,
        batch,
        extras,
    })
}

/// Simulates fields on the lattice, writes their top decompositions, and
/// optionally runs the mark independence probe.
fn m3_extract(cfg: &RunConfig, gamma: &Variogram, out: &Path) -> Result<(Vec<ExperimentReport>, FieldBatch), RunError> {
    let lattice = cfg.lattice.as_ref().expect("validated");
    let grid = lattice.points();
    let b = simulate_batch_with(Execution::Parallel, gamma, &cfg.profile, &grid, &cfg.stop, cfg.seed(), cfg.replicates)?;
    let tops = b.clean().map(|s| extract_top(&s.values, &grid)).collect::<Result<Vec<_>, _>>()?;
    let offsets = lattice.offsets();
    write_top_csv(&tops, &offsets, create(out, "topdecomp.csv")?)?;

    let origin: Point = vec![0.0; lattice.dim()];
    let ok = tops.iter().all(|t| t.value_at(&origin, 0.0) == Some(0.0) && t.values.iter().all(|v| *v <= 0.0));
    let mut report = ExperimentReport {
        experiment: "m3_extract".into(),
        replicates: cfg.replicates,
        checks: vec![TestReport {
            name: "top_normalization".into(),
            statistic: if ok { 0.0 } else { 1.0 },
            p_value: None,
            n: tops.len(),
            pass: ok,
            tolerance: 0.0,
        }],
        ..Default::default()
    };
    report.metrics.insert("flagged".into(), b.flagged_count() as f64);
    if !tops.is_empty() {
        report.metrics.insert("mean_max".into(), tops.iter().map(|t| t.max).sum::<f64>() / tops.len() as f64);
    }
    report.finalize();
    let mut reports = vec![report];
    if let Some(p) = &cfg.mark_probe {
        let s = MarkProbeSettings {
            band: p.band,
            replicates: p.streams.unwrap_or(cfg.replicates),
            seed: cfg.seed(),
            offsets: p.offsets.clone(),
            min_atoms: p.min_atoms,
            max_atoms: p.max_atoms,
        };
        reports.push(mark_independence_probe(gamma, &cfg.profile, lattice, &s, Execution::Parallel)?);
    }
    Ok((reports, b))
}
