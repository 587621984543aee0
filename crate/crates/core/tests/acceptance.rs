//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every criterion runs on a single worker thread, then again on two, and the
//! serialized reports of both runs must match byte for byte. Criteria listed
//! in `KNOWN_FAILURES` fail at the stated tolerances for reasons documented
//! with them; they are reported as FAIL, and the process exits non-zero only
//! when some outcome differs from the expected one.

mod common;

use brownresnick::analytics::{hr_bivariate_cdf, norm_cdf};
use brownresnick::exec::with_threads;
use brownresnick::limit::{conditional_moments, normalizers, run_thm17, run_thm22, RunSettings};
use brownresnick::m3::{extract_top, remark15_criterion, Lattice};
use brownresnick::report::ExperimentReport;
use brownresnick::rng::RngStream;
use brownresnick::stationarity::{compose, gaussian_laplace_with, shift_invariance_check_with, ComposeMode, Drift, LaplaceConfig};
use brownresnick::variogram::{CovarianceFunction, Point, RawVariogram, VarianceProfile, Variogram};
use brownresnick::verify::{verify_cdf, verify_field, verify_laplace, verify_profiles, verify_shift, CheckOptions, LaplaceRun, SimRun};
use common::{builtin_kinds, pts, SEED};
use serde_json::json;
use std::time::{Duration, Instant};

/// Criteria expected to fail, with the reason.
const KNOWN_FAILURES: [(&str, &str); 2] = [
    ("7a", "finite-n bias of the moments at n = 1e6 is 0.022..0.108 (mu) and 0.168 (r)"),
    ("8b", "the exact n = 500 bivariate law is up to 0.059 from the limit, above max(3 se, 0.02)"),
];

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

/// Outcome of one criterion: result lines plus the JSON used for the
/// determinism comparison.
struct Outcome {
    lines: Vec<Line>,
    json: String,
}

fn line(id: &'static str, title: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        title,
        pass,
        detail: detail.into(),
    }
}

fn to_json(reports: &[&ExperimentReport]) -> String {
    serde_json::to_string(reports).expect("reports serialize")
}

fn worst_bivariate(r: &ExperimentReport) -> String {
    let worst = r.bivariate_table.iter().map(|row| row.z_score.abs()).fold(0.0, f64::max);
    format!("max |z| = {worst:.2}, max |diff| = {:.4}", r.max_abs_discrepancy())
}

fn worst_check(r: &ExperimentReport) -> String {
    let worst = r.checks.iter().map(|c| c.statistic.abs()).fold(0.0, f64::max);
    format!("max |z| = {worst:.2} over {} cells", r.checks.len())
}

fn gumbel_margins() -> Outcome {
    let start = Instant::now();
    let (r, _) = verify_field(
        &Variogram::brownian(1),
        &VarianceProfile::ZeroAtOrigin,
        &pts(&[0.0, 0.5, 1.0, 2.0]),
        &[],
        &SimRun::new(5000, SEED),
        &CheckOptions::default(),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let min_p = r.marginal_ks.iter().filter_map(|k| k.p_value).fold(1.0, f64::min);
    Outcome {
        lines: vec![
            line("1", "Gumbel margins, KS at 0.01", r.pass, format!("min p = {min_p:.3}, flagged = {}", r.metrics["flagged"])),
            line("1t", "runtime under 60 s on one thread", elapsed < Duration::from_secs(60), format!("{:.1} s", elapsed.as_secs_f64())),
        ],
        json: to_json(&[&r]),
    }
}

fn exact_bivariate() -> Outcome {
    let (r, _) = verify_field(
        &Variogram::brownian(1),
        &VarianceProfile::ZeroAtOrigin,
        &pts(&[0.0, 1.0]),
        &[[0, 1]],
        &SimRun::new(20_000, SEED + 2),
        &CheckOptions::default(),
    )
    .unwrap();
    let hr = hr_bivariate_cdf(1.0, 0.0, 0.0).unwrap();
    let independent = (-2.0 * norm_cdf(0.5)).exp();
    Outcome {
        lines: vec![
            line("2", "bivariate law within 3 se of the closed form", r.pass, worst_bivariate(&r)),
            line("2o", "closed form at gamma = 1, y = (0, 0)", (hr - independent).abs() <= 1e-12, format!("{hr:.10}")),
        ],
        json: to_json(&[&r]),
    }
}

fn stationarity() -> Outcome {
    let r = verify_shift(
        &Variogram::brownian(1),
        &VarianceProfile::ZeroAtOrigin,
        &pts(&[0.0, 1.0, 2.0, 3.0]),
        [0, 1],
        [2, 3],
        &SimRun::new(20_000, SEED + 3),
        &CheckOptions::default(),
    )
    .unwrap();
    Outcome {
        lines: vec![line("3", "pairs (0,1) and (2,3) agree within 3 pooled se", r.pass, worst_check(&r))],
        json: to_json(&[&r]),
    }
}

fn variogram_only() -> Outcome {
    let v = Variogram::brownian(1);
    let r = verify_profiles(
        &v,
        [VarianceProfile::ZeroAtOrigin, VarianceProfile::Shifted { sigma0_sq: 1.0 }],
        &pts(&[0.0, 1.0]),
        [0, 1],
        &SimRun::new(20_000, SEED + 4),
        &CheckOptions::default(),
    )
    .unwrap();
    let lap = verify_laplace(&v, &LaplaceRun::new(100, SEED + 4)).unwrap();
    let prof = lap.checks.iter().find(|c| c.name == "profile_independence").unwrap();
    Outcome {
        lines: vec![
            line("4", "profiles agree within 3 pooled se", r.pass, worst_check(&r)),
            line("4l", "Laplace transform profile-free within 1e-12", prof.pass, format!("worst {:.2e}", prof.statistic)),
        ],
        json: to_json(&[&r, &lap]),
    }
}

fn laplace_criterion() -> Outcome {
    let mut reports = Vec::new();
    let mut worst = 0f64;
    let mut all = true;
    for (k, (_, v)) in builtin_kinds().into_iter().enumerate() {
        let r = verify_laplace(&v, &LaplaceRun::new(100, SEED + 50 + k as u64)).unwrap();
        let c = &r.checks[0];
        worst = worst.max(c.statistic);
        all &= c.pass;
        reports.push(r);
    }
    let v = Variogram::brownian(1);
    let control = shift_invariance_check_with("drift_removed", &pts(&[0.0, 1.0]), &[0.5, 0.5], &[vec![1.0]], 1e-10, |s, u| {
        gaussian_laplace_with(&LaplaceConfig::new(v.clone(), VarianceProfile::ZeroAtOrigin, s.to_vec(), u.to_vec())?, Drift::Removed)
    })
    .unwrap();
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    Outcome {
        lines: vec![
            line("5", "shift invariance at 1e-10 over all kinds", all, format!("worst {worst:.2e} over {} kinds", reports.len())),
            line("5n", "drift-removed control violates by > 1e-3", !control.pass && control.statistic > 1e-3, format!("{:.4}", control.statistic)),
        ],
        json: to_json(&refs) + &serde_json::to_string(&control).unwrap(),
    }
}

fn fdd_consistency() -> Outcome {
    let sites = pts(&[0.0, 1.0]);
    let grid: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().flat_map(|a| [-1.0, 0.0, 1.0].map(|b| vec![*a, b])).collect();
    let mut reports = Vec::new();
    let mut worst = 0f64;
    for (k, g) in [0.5, 1.0, 4.0].into_iter().enumerate() {
        let v = Variogram::fractional(1, 1.0, g).unwrap();
        let r = verify_cdf(&v, &VarianceProfile::ZeroAtOrigin, &sites, &grid, 100_000, SEED + 60 + k as u64, 3.0).unwrap();
        worst = r.checks.iter().map(|c| c.statistic.abs()).fold(worst, f64::max);
        reports.push(r);
    }
    let single = verify_cdf(&Variogram::brownian(1), &VarianceProfile::ZeroAtOrigin, &pts(&[1.0]), &[vec![0.0]], 100_000, SEED + 63, 3.0).unwrap();
    let (est, se) = (single.metrics["estimate[0.0]"], single.metrics["se[0.0]"]);
    let identity = (est - (-1f64).exp()).abs() <= 3.0 * se;
    let pass = reports.iter().all(|r| r.pass);
    reports.push(single);
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    Outcome {
        lines: vec![
            line("6", "two-site Monte Carlo CDF within 3 se", pass, format!("max |z| = {worst:.2}")),
            line("6i", "one-site estimate at y = 0 within 3 se of 1/e", identity, format!("{est:.5} +- {se:.5}")),
        ],
        json: to_json(&refs),
    }
}

fn conditional_moment_limits() -> Outcome {
    let cov = CovarianceFunction::exp_variogram(Variogram::brownian(1), 1.0).unwrap();
    let norm = normalizers(1_000_000, 1.0).unwrap();
    let sites = pts(&[1.0, 2.0]);
    let moments: Vec<_> = [-2.0, 0.0, 2.0].iter().map(|w| conditional_moments(&cov, &norm, *w, &sites).unwrap()).collect();
    let mu_err = moments.iter().map(|m| (m.mu_w[0] + 1.0).abs()).fold(0.0, f64::max);
    let r_err = moments.iter().map(|m| (m.r[(0, 1)] - 2.0).abs()).fold(0.0, f64::max);
    let same_r = moments.iter().all(|m| m.r == moments[0].r);
    let record = json!({
        "mu": moments.iter().map(|m| m.mu_w[0]).collect::<Vec<_>>(),
        "r": moments[0].r[(0, 1)],
    });
    Outcome {
        lines: vec![
            line("7a", "|mu + 1| <= 0.01 and |r - 2| <= 0.05 at n = 1e6", mu_err <= 0.01 && r_err <= 0.05, format!("mu err {mu_err:.4}, r err {r_err:.4}")),
            line("7b", "r bit-identical across w", same_r, format!("r = {}", moments[0].r[(0, 1)])),
        ],
        json: record.to_string(),
    }
}

fn joint_limit_convergence() -> Outcome {
    let start = Instant::now();
    let r = run_thm22(&Variogram::brownian(1), 500, &pts(&[0.0, 1.0]), &RunSettings::new(5000, SEED + 8)).unwrap();
    let elapsed = start.elapsed();
    let margins = r.marginal_ks.iter().all(|k| k.pass);
    let min_p = r.marginal_ks.iter().filter_map(|k| k.p_value).fold(1.0, f64::min);
    let biv = r.bivariate_table.iter().all(|row| row.pass);
    Outcome {
        lines: vec![
            line("8a", "margins match the exact pre-limit law, KS at 0.01", margins, format!("min p = {min_p:.3}")),
            line("8b", "bivariate within max(3 se, 0.02) of the limit", biv, worst_bivariate(&r)),
            line("8t", "runtime under 5 min", elapsed < Duration::from_secs(300), format!("{:.1} s", elapsed.as_secs_f64())),
        ],
        json: to_json(&[&r]),
    }
}

fn gaussian_maxima_direction() -> Outcome {
    let cov = CovarianceFunction::exp_variogram(Variogram::brownian(1), 1.0).unwrap();
    let gamma = Variogram::brownian(1);
    let sites = pts(&[0.0, 1.0]);
    let run = |n: u64, seed: u64| run_thm17(&cov, &gamma, 1.0, n, &sites, &RunSettings::new(200_000, seed)).unwrap();
    let (a, b) = (run(10_000, SEED + 9), run(100_000, SEED + 10));
    let (da, db) = (a.max_abs_discrepancy(), b.max_abs_discrepancy());
    Outcome {
        lines: vec![line("9", "discrepancy decreases from n = 1e4 to 1e5", db < da, format!("{da:.4} -> {db:.4}"))],
        json: to_json(&[&a, &b]),
    }
}

fn m3_exactness() -> Outcome {
    let mut rng = RngStream::new(SEED, 100);
    let lattice = Lattice::new(vec![-2.0, -1.0], vec![0.5, 0.25], vec![9, 9]).unwrap();
    let grid = lattice.points();
    let h = [1.0, -0.5];
    let moved: Vec<Point> = grid.iter().map(|g| vec![g[0] - h[0], g[1] - h[1]]).collect();
    let mut failures = 0usize;
    for _ in 0..10_000 {
        // Dyadic values force ties and keep the arithmetic exact.
        let vals: Vec<f64> = grid.iter().map(|_| (rng.uniform() * 16.0).floor() / 4.0 - 2.0).collect();
        let t = extract_top(&vals, &grid).unwrap();
        let lifted: Vec<f64> = vals.iter().map(|v| v + 0.75).collect();
        let u = extract_top(&lifted, &grid).unwrap();
        let s = extract_top(&vals, &moved).unwrap();
        let ok = t.value_at(&[0.0, 0.0], 0.0) == Some(0.0)
            && t.values.iter().all(|v| *v <= 0.0)
            && u.top == t.top
            && u.max == t.max + 0.75
            && u.values == t.values
            && s.top == vec![t.top[0] - h[0], t.top[1] - h[1]]
            && s.values == t.values;
        failures += usize::from(!ok);
    }
    let t_grid: Vec<f64> = (1..=12).map(|k| 10f64.powi(k)).collect();
    let linear = remark15_criterion(&Variogram::brownian(1), &t_grid).unwrap();
    let log4 = remark15_criterion(&RawVariogram::unchecked(1, |t| 4.0 * (1.0 + t[0].abs()).ln()), &t_grid).unwrap();
    Outcome {
        lines: vec![
            line("10", "top decomposition invariants on 1e4 paths", failures == 0, format!("{failures} failures")),
            line("10r", "drift criterion: |t| true, 4 log(1 + t) false", linear.verdict && !log4.verdict, format!("tail minima {:.3e}, {:.3}", linear.tail_min, log4.tail_min)),
        ],
        json: json!({ "failures": failures, "linear": linear, "log4": log4 }).to_string(),
    }
}

fn composition() -> Outcome {
    let a = Variogram::fractional(1, 0.6, 1.0).unwrap();
    let b = Variogram::fractional(1, 1.7, 0.5).unwrap();
    let sum = compose(a.clone(), b.clone(), ComposeMode::Sum).unwrap();
    let product = compose(a, b, ComposeMode::ProductDomain).unwrap();
    let opts = CheckOptions::default();
    let (rs, _) = verify_field(&sum, &VarianceProfile::ZeroAtOrigin, &pts(&[0.0, 0.8]), &[[0, 1]], &SimRun::new(20_000, SEED + 11), &opts).unwrap();
    let (rp, _) = verify_field(
        &product,
        &VarianceProfile::ZeroAtOrigin,
        &[vec![0.0, 0.0], vec![0.5, -0.6]],
        &[[0, 1]],
        &SimRun::new(20_000, SEED + 12),
        &opts,
    )
    .unwrap();
    let ls = verify_laplace(&sum, &LaplaceRun::new(100, SEED + 13)).unwrap();
    let lp = verify_laplace(&product, &LaplaceRun::new(100, SEED + 14)).unwrap();
    let sim = rs.bivariate_table.iter().chain(&rp.bivariate_table).all(|r| r.pass);
    let invariant = ls.checks[0].pass && lp.checks[0].pass;
    Outcome {
        lines: vec![
            line("11", "composed closed forms match simulation within 3 se", sim, format!("sum: {}; product: {}", worst_bivariate(&rs), worst_bivariate(&rp))),
            line("11l", "composed kinds shift-invariant at 1e-10", invariant, format!("worst {:.2e}, {:.2e}", ls.checks[0].statistic, lp.checks[0].statistic)),
        ],
        json: to_json(&[&rs, &rp, &ls, &lp]),
    }
}

fn main() {
    let criteria: [fn() -> Outcome; 11] = [
        gumbel_margins,
        exact_bivariate,
        stationarity,
        variogram_only,
        laplace_criterion,
        fdd_consistency,
        conditional_moment_limits,
        joint_limit_convergence,
        gaussian_maxima_direction,
        m3_exactness,
        composition,
    ];
    let mut lines = Vec::new();
    let mut mismatched = Vec::new();
    for (k, c) in criteria.iter().enumerate() {
        let single = with_threads(1, c);
        let double = with_threads(2, c);
        if single.json != double.json {
            mismatched.push(k + 1);
        }
        for l in single.lines {
            print_line(&l);
            lines.push(l);
        }
    }
    let det = line("12", "byte-identical reports on 1 and 2 threads", mismatched.is_empty(), format!("mismatched criteria: {mismatched:?}"));
    print_line(&det);
    lines.push(det);

    let unexpected: Vec<&str> = lines
        .iter()
        .filter(|l| l.pass == KNOWN_FAILURES.iter().any(|(id, _)| *id == l.id))
        .map(|l| l.id)
        .collect();
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("\n{} of {} checks passed", lines.len() - failed, lines.len());
    for (id, why) in KNOWN_FAILURES {
        println!("known failure {id}: {why}");
    }
    if !unexpected.is_empty() {
        println!("unexpected outcomes: {unexpected:?}");
        std::process::exit(1);
    }
}

fn print_line(l: &Line) {
    println!("{:<4} {} {} ({})", l.id, if l.pass { "PASS" } else { "FAIL" }, l.title, l.detail);
}
