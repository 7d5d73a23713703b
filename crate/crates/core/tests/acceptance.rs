//! Acceptance criteria, one PASS/FAIL/SKIP line each.
//!
//! Runs without the libtest harness so every line is printed; the process
//! exits non-zero when any criterion fails.
//!
//! Criterion 7 needs the California housing CSV: set `STACKCP_CALIFORNIA_CSV`
//! to its path (response column `median_house_value`, overridable with
//! `STACKCP_CALIFORNIA_RESPONSE`).

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{dual_regression_scores, rank_exact, to_dense};
use rand::Rng;
use stacked_cp::conformal::{
    full_cp_interval, run_oracle_check, stability_probe, ConformalConfig, MetaState, OracleCheckConfig, ProbeConfig,
};
use stacked_cp::experiment::{run_experiment, DataSource, ExperimentConfig, SPLIT_METHOD, STACKED_METHOD};
use stacked_cp::folding::FoldScheme;
use stacked_cp::learners::{ForestParams, Learner, LearnerSpec, Predictor};
use stacked_cp::linalg::{rank_one_inverse_update, Matrix};
use stacked_cp::pipeline::StackedRegressor;
use stacked_cp::rng;
use stacked_cp::synth::{gaussian_meta_sample, SyntheticSpec};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn split_last(z: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>, Vec<f64>, f64) {
    let n = z.rows() - 1;
    (z.select_rows(&(0..n).collect::<Vec<_>>()), y[..n].to_vec(), z.row(n).to_vec(), y[n])
}

/// 1. Bisection endpoints agree with brute-force augmented refits.
fn oracle_equivalence() -> Outcome {
    let s = run_oracle_check(&OracleCheckConfig {
        rank_one_instances: 0,
        ..OracleCheckConfig::default()
    })
    .expect("oracle check runs");
    judge(
        s.interval_failures.is_empty(),
        format!(
            "{}/{} instances within 2eps + grid step (n 30..80, M 1..4, 2000-point grid); worst gap/tolerance {:.3}",
            s.instances - s.interval_failures.len(),
            s.instances,
            s.worst_gap_ratio
        ),
    )
}

/// 2. Sherman–Morrison residuals and score equivalence with a from-scratch oracle.
fn rank_one_correctness() -> Outcome {
    let s = run_oracle_check(&OracleCheckConfig {
        instances: 0,
        rank_one_instances: 1000,
        seed: 2,
        ..OracleCheckConfig::default()
    })
    .expect("rank-one check runs");

    let mut r = rng::seeded(22);
    let cfg = ConformalConfig::with_alpha(0.1);
    let mut worst_score: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(20..60);
        let m = r.random_range(1..=4);
        let (z_all, y_all) = gaussian_meta_sample(n + 1, m, &mut r);
        let (z, y, z0, y_true) = split_last(&z_all, &y_all);
        let y0 = y_true + r.random_range(-2.0..2.0);
        let state = MetaState::fit(z.clone(), y.clone()).unwrap();
        let b = rank_one_inverse_update(state.inverse_gram(), &z0).unwrap();
        let got = stacked_cp::conformal::conformity_scores(&state, &z0, y0, &b, &cfg).unwrap();
        let rank = rank_exact(1, 10, n as u64) as usize;
        let (r0, r_hat) = dual_regression_scores(&to_dense(&z), &y, &z0, y0, rank, cfg.denom_floor);
        worst_score = worst_score.max((got.r0 - r0).abs()).max((got.r_hat - r_hat).abs());
    }
    judge(
        s.rank_one_worst_residual <= 1e-8 && worst_score <= 1e-9,
        format!(
            "max ||B(G + z0 z0^T) - I||_inf = {:.2e} over 1000 SPD instances (<= 1e-8); max score gap {:.2e} over 200 instances (<= 1e-9)",
            s.rank_one_worst_residual, worst_score
        ),
    )
}

/// 3. Coverage with exchangeable second-level data fed straight to the
/// conformal module.
fn exchangeable_validity() -> Outcome {
    let reps = 5000;
    let (n, m) = (100, 3);
    let mut parts = Vec::new();
    let mut ok = true;
    for alpha in [0.1, 0.2] {
        let cfg = ConformalConfig::with_alpha(alpha);
        let mut r = rng::child(3, &format!("validity-{alpha}"));
        let mut covered = 0;
        for _ in 0..reps {
            let (z_all, y_all) = gaussian_meta_sample(n + 1, m, &mut r);
            let (z, y, z0, y0) = split_last(&z_all, &y_all);
            let state = MetaState::fit(z, y).unwrap();
            covered += usize::from(full_cp_interval(&state, &z0, &cfg).unwrap().contains(y0));
        }
        let coverage = covered as f64 / reps as f64;
        ok &= coverage >= 1.0 - alpha - 0.02;
        parts.push(format!("alpha={alpha}: {coverage:.4} (>= {:.2})", 1.0 - alpha - 0.02));
    }
    judge(ok, format!("{reps} reps, n={n}, M={m}; {}", parts.join(", ")))
}

/// 4. Rank bound for iid uniforms.
fn rank_bound() -> Outcome {
    let (n, k, trials) = (19, 18, 100_000);
    let mut r = rng::seeded(4);
    let mut hits = 0usize;
    let mut v = vec![0.0f64; n];
    for _ in 0..trials {
        v.iter_mut().for_each(|x| *x = r.random());
        let u: f64 = r.random();
        v.sort_by(f64::total_cmp);
        hits += usize::from(u <= v[k - 1]);
    }
    let p = hits as f64 / trials as f64;
    let target = k as f64 / (n + 1) as f64;
    let floor = target - 3.0 * (target * (1.0 - target) / trials as f64).sqrt();
    judge(p >= floor, format!("P(U_20 <= V_(18)) = {p:.5} over {trials} trials (>= {floor:.5})"))
}

/// 5. End-to-end coverage of the feasible stack, and the stability slack on
/// the same generator.
fn end_to_end() -> Outcome {
    let generator = SyntheticSpec::default();
    let learners = vec![
        LearnerSpec::Ridge { lambda: 1.0 },
        LearnerSpec::Knn { k: 10 },
        LearnerSpec::Forest(ForestParams::default()),
    ];
    let (n, folds, alpha, reps, per_rep) = (500, 5, 0.1, 1000, 10);
    let cfg = ConformalConfig::with_alpha(alpha);
    let mut covered = 0usize;
    for rep in 0..reps {
        let mut r = rng::child(5, &format!("end-to-end-{rep}"));
        let train = generator.draw(n, &mut r).unwrap();
        let test = generator.draw(per_rep, &mut r).unwrap();
        let scheme = FoldScheme::sample(n, folds, r.random()).unwrap();
        let model = StackedRegressor::fit(&train, &learners, &scheme).unwrap();
        let ivs = model.intervals(test.x(), &cfg).unwrap();
        covered += ivs.iter().zip(test.y()).filter(|(iv, &y)| iv.contains(y)).count();
    }
    let coverage = covered as f64 / (reps * per_rep) as f64;
    let coverage_ok = coverage >= 1.0 - alpha - 0.03;

    let eps_grid = vec![0.01, 0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5];
    let report = stability_probe(
        &generator,
        &learners,
        &ProbeConfig {
            n,
            folds,
            alpha,
            eps_grid,
            trials: 500,
            seed: 55,
            ..ProbeConfig::default()
        },
    )
    .unwrap();
    let witness = (0..report.eps_grid.len()).find(|&i| report.delta_hat[i] <= 0.02 && report.h_hat[i] <= 0.02);
    let table: Vec<String> = (0..report.eps_grid.len())
        .map(|i| format!("{}:{}/{}", report.eps_grid[i], report.delta_hat[i], report.h_hat[i]))
        .collect();
    judge(
        coverage_ok && witness.is_some(),
        format!(
            "coverage {coverage:.4} over {reps}x{per_rep} test units (>= {:.2}) [{}]; probe eps:delta_hat/h_hat {} over {} trials, needs both <= 0.02 at one eps [{}]",
            1.0 - alpha - 0.03,
            if coverage_ok { "ok" } else { "short" },
            table.join(" "),
            report.trials,
            match witness {
                Some(i) => format!("met at eps={}", report.eps_grid[i]),
                None => "no such eps".into(),
            }
        ),
    )
}

/// 6. Bit-exact prediction invariance under training-row permutations.
fn symmetry() -> Outcome {
    let mut r = rng::seeded(6);
    let data = SyntheticSpec {
        n: 80,
        ..Default::default()
    }
    .generate()
    .unwrap();
    let queries: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| r.random()).collect()).collect();
    let specs = [
        LearnerSpec::Ridge { lambda: 1.0 },
        LearnerSpec::Knn { k: 10 },
        LearnerSpec::Forest(ForestParams::default()),
    ];
    let mut mismatches = 0;
    for spec in &specs {
        let base = spec.fit(data.x(), data.y()).unwrap();
        let want: Vec<u64> = queries.iter().map(|q| base.predict(q).unwrap().to_bits()).collect();
        let mut perm: Vec<usize> = (0..data.n()).collect();
        for _ in 0..100 {
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut r);
            let p = data.subset(&perm).unwrap();
            let model = spec.fit(p.x(), p.y()).unwrap();
            let got: Vec<u64> = queries.iter().map(|q| model.predict(q).unwrap().to_bits()).collect();
            mismatches += usize::from(got != want);
        }
    }
    judge(
        mismatches == 0,
        format!("ridge, knn, forest x 100 permutations x 10 queries; {mismatches} mismatching refits"),
    )
}

/// 7. California housing: coverage within 2 points of nominal, and shorter
/// median widths than the split baseline on at least two levels.
fn california() -> Outcome {
    let Some(path) = std::env::var_os("STACKCP_CALIFORNIA_CSV").map(PathBuf::from) else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "STACKCP_CALIFORNIA_CSV not set; no dataset file available".into(),
        };
    };
    let response = std::env::var("STACKCP_CALIFORNIA_RESPONSE").unwrap_or_else(|_| "median_house_value".into());
    let out = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(DataSource::Csv { path, response });
    cfg.dataset_name = "California".into();
    cfg.out = out.path().to_path_buf();
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return judge(false, format!("run failed: {e}")),
    };
    let mut ok = true;
    let mut shorter = 0;
    let mut parts = Vec::new();
    for &alpha in &cfg.alphas {
        let pick = |method: &str| {
            outcome
                .reports
                .iter()
                .find(|r| r.method == method && r.alpha == alpha)
                .expect("report per level")
        };
        let (s, b) = (pick(STACKED_METHOD), pick(SPLIT_METHOD));
        ok &= (s.coverage - (1.0 - alpha)).abs() <= 0.02;
        shorter += usize::from(s.median <= b.median);
        parts.push(format!(
            "alpha={alpha}: coverage {:.3}, median {:.0} vs split {:.0}",
            s.coverage, s.median, b.median
        ));
    }
    judge(
        ok && shorter >= 2,
        format!("{}; stacked shorter on {shorter}/3 levels", parts.join("; ")),
    )
}

/// 8. Two identical runs write byte-identical reports and interval files.
fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut cfg: ExperimentConfig = "synthetic = fn=friedman,n=500,d=5,noise=gaussian:1\nalpha = 0.2,0.1\nseed = 7"
        .parse()
        .unwrap();
    for d in &dirs {
        cfg.out = d.path().to_path_buf();
        run_experiment(&cfg).unwrap();
    }
    let files = ["reports.csv", "intervals_0.2.csv", "intervals_0.1.csv", "baseline_intervals_0.1.csv"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(dirs[0].path().join(f)).unwrap() != fs::read(dirs[1].path().join(f)).unwrap())
        .collect();
    judge(
        differing.is_empty(),
        format!("{} files compared, {} differ {:?}", files.len(), differing.len(), differing),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("rank-one update correctness", rank_one_correctness),
        ("validity with exchangeable input", exchangeable_validity),
        ("rank bound for uniforms", rank_bound),
        ("end-to-end stacked coverage and stability", end_to_end),
        ("learner symmetry", symmetry),
        ("California housing", california),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!(
            "[{tag}] criterion {} ({name}): {} ({:.1}s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} of {} criteria failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
