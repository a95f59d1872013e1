//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria 8 and 9 share a single ten-repeat moderator study (reduced grid)
//! behind a lazily initialized static, so the expensive pipeline runs once.

use std::sync::LazyLock;

use mcfid::config::{GridChoice, StudyConfig};
use mcfid::dataset;
use mcfid::emulator::{cost_of, sample_tally, UncertaintySpec};
use mcfid::nn;
use mcfid::nsga3;
use mcfid::pareto::{hv2d_polygon, hv2d_staircase, pareto_filter, relative_hv_loss, Front2D};
use mcfid::pipeline::{self, StudyReport};
use mcfid::problems::{moderator_truth, ModeratorPoint, ProblemId};
use mcfid::seed;
use rand::Rng;

fn moderator_study_config(out: &std::path::Path, repeats: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        problem: ProblemId::Moderator,
        levels: dataset::MODERATOR_LEVELS.to_vec(),
        grid: GridChoice::Reduced,
        nsga3: nsga3::Nsga3Config::default(),
        repeats,
        seed,
        out: out.to_path_buf(),
        jobs: None,
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: hypervolume formula fidelity

/// Shoelace area of the closed polygon (ref, p1, ..., pN) — the independent
/// oracle for the triangle-fan hypervolume on convex fronts.
fn fan_shoelace(points: &[(f64, f64)], r: (f64, f64)) -> f64 {
    let mut poly = vec![r];
    poly.extend_from_slice(points);
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc.abs()
}

#[test]
fn criterion_01_hypervolume_formula_fidelity() {
    // Exact right-triangle case.
    let corner = pareto_filter(&[(1.0, 0.0), (0.0, 1.0)]);
    assert_eq!(hv2d_polygon(&corner, (0.0, 0.0)).unwrap(), 0.5);

    let mut rng = seed::stream(2024, "acceptance-fronts", &[]);
    for trial in 0..20u64 {
        // Convex front: sorted angles on a quarter circle, randomly scaled.
        let mut mc_rng = seed::stream(2024, "acceptance-mc", &[trial]);
        let n = rng.gen_range(3..40);
        let scale = (rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0));
        let mut angles: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.02..std::f64::consts::FRAC_PI_2 - 0.02))
            .collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        let points: Vec<(f64, f64)> = angles
            .iter()
            .map(|a| (scale.0 * a.cos(), scale.1 * a.sin()))
            .collect();
        let front = pareto_filter(&points);

        let hv = hv2d_polygon(&front, (0.0, 0.0)).unwrap();
        let oracle = fan_shoelace(&front.points, (0.0, 0.0));
        assert!(
            (hv - oracle).abs() <= 1e-12 * oracle,
            "trial {trial}: polygon {hv} vs shoelace {oracle}"
        );

        // Staircase against a Monte Carlo dominated-area estimate.
        let stair = hv2d_staircase(&front, (0.0, 0.0)).unwrap();
        let box_w = front.points.iter().map(|p| p.0).fold(0.0, f64::max);
        let box_h = front.points.iter().map(|p| p.1).fold(0.0, f64::max);
        let box_area = box_w * box_h;
        // Descending y1 with ascending y2: the best y2 among points with
        // y1 >= qx is the last point of that prefix.
        let dominated = |qx: f64, qy: f64| -> bool {
            let k = front.points.partition_point(|p| p.0 >= qx);
            k > 0 && front.points[k - 1].1 >= qy
        };
        let samples = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..samples {
            let qx = mc_rng.gen_range(0.0..box_w);
            let qy = mc_rng.gen_range(0.0..box_h);
            if dominated(qx, qy) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        let mc = p * box_area;
        let sigma = box_area * (p * (1.0 - p) / samples as f64).sqrt();
        assert!(
            (stair - mc).abs() <= 3.0 * sigma,
            "trial {trial}: staircase {stair} vs MC {mc} (3 sigma {})",
            3.0 * sigma
        );
    }
    println!("ACCEPTANCE 1 PASS: polygon HV exact on corner front, matches shoelace to 1e-12 on 20 convex fronts, staircase within 3 sigma of Monte Carlo");
}

// ---------------------------------------------------------------------------
// Criterion 2: metric definitions

#[test]
fn criterion_02_metric_definitions() {
    let y = [1.0, 2.0];
    assert_eq!(nn::mse_1d(&y, &y), 0.0);
    assert_eq!(nn::r2_1d(&y, &y).unwrap(), 1.0);
    assert_eq!(nn::r2_1d(&y, &[1.5, 1.5]).unwrap(), 0.0);
    assert_eq!(nn::mse_1d(&y, &[1.0, 3.0]), 0.5);
    println!("ACCEPTANCE 2 PASS: MSE/R2 hand cases exact");
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient correctness

/// Draws a `(net, batch)` pair whose hidden pre-activations sit away from the
/// rectifier kink; central differences are meaningless when a probe step can
/// cross it.
fn kink_free_case(
    config: nn::NetConfig,
    input_dim: usize,
    batch: usize,
    trial: u64,
) -> (nn::SurrogateNet, Vec<Vec<f64>>, Vec<[f64; 2]>) {
    for attempt in 0..1000u64 {
        let net = nn::init_net(config, input_dim, 3000 + trial * 1000 + attempt);
        let mut rng = seed::stream(trial, "acceptance-grad-batch", &[attempt]);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..input_dim).map(|_| rng.gen_range(0.4..1.6)).collect())
            .collect();
        let ys: Vec<[f64; 2]> = (0..batch)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        if net.hidden_preactivation_margin(&xs) > 1e-3 {
            return (net, xs, ys);
        }
    }
    panic!("no kink-free configuration found for trial {trial}");
}

#[test]
fn criterion_03_gradient_correctness() {
    let mut checked = 0usize;
    for trial in 0..50u64 {
        let layers = 1 + (trial % 2) as usize;
        let neurons = 2 + (trial % 7) as usize; // up to 8
        let input_dim = 1 + (trial % 3) as usize;
        let config = nn::NetConfig::new(layers, neurons, 1e-3, 2);
        let batch = 1 + (trial % 4) as usize;
        let (mut net, xs, ys) = kink_free_case(config, input_dim, batch, trial);

        let analytic = net.batch_gradients(&xs, &ys);
        let h = 1e-5;
        for (i, &grad) in analytic.iter().enumerate() {
            let orig = net.get_param(i);
            net.set_param(i, orig + h);
            let up = net.batch_loss(&xs, &ys);
            net.set_param(i, orig - h);
            let down = net.batch_loss(&xs, &ys);
            net.set_param(i, orig);
            let fd = (up - down) / (2.0 * h);
            let denom = grad.abs().max(fd.abs()).max(1e-6);
            let rel = (grad - fd).abs() / denom;
            assert!(
                rel < 1e-4,
                "trial {trial} param {i}: analytic {grad} vs fd {fd} (rel {rel})"
            );
            checked += 1;
        }
    }
    println!("ACCEPTANCE 3 PASS: analytic gradients match central differences on 50 random nets ({checked} parameters)");
}

// ---------------------------------------------------------------------------
// Criterion 4: surrogate quality at high fidelity

#[test]
fn criterion_04_surrogate_quality_at_one_percent() {
    let u = UncertaintySpec::new(0.01).unwrap();
    let ds = dataset::generate_dataset(ProblemId::Moderator, u, 424242);
    let split = dataset::split(&ds, 424242).unwrap();
    let scalers = dataset::fit_scaler(&ds, &split.train);
    let grid = nn::reduced_grid();
    let result = nn::grid_search(&ds, &split, &scalers, &grid, 424242).unwrap();
    let best = result.reports[result.best_index].as_ref().unwrap();
    assert!(
        best.test_r2_aggregate >= 0.99,
        "best reduced-grid config reached R2 {}",
        best.test_r2_aggregate
    );
    println!(
        "ACCEPTANCE 4 PASS: moderator u=1% best reduced-grid config (layers={}, neurons={}) test R2 {:.6} >= 0.99",
        grid[result.best_index].hidden_layers,
        grid[result.best_index].neurons,
        best.test_r2_aggregate
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: optimizer sanity on the noise-free moderator truth

#[test]
fn criterion_05_optimizer_recovers_analytic_front() {
    // Analytic Pareto set: be = 0.09, pe in [1.0, 2.2]. Nadir and reference
    // hypervolume from a dense parameterization of that segment.
    let truth_point = |pe: f64| {
        let o = moderator_truth(&ModeratorPoint::new(0.09, pe).unwrap());
        (o.f1, o.f2)
    };
    let nadir = (truth_point(1.0).0, truth_point(2.2).1);
    let n_dense = 200_000usize;
    let dense: Vec<(f64, f64)> = (0..=n_dense)
        .map(|i| truth_point(1.0 + 1.2 * i as f64 / n_dense as f64))
        .collect();
    let analytic_hv = hv2d_staircase(&pareto_filter(&dense), nadir).unwrap();

    let spec = dataset::gene_spec(ProblemId::Moderator);
    let config = nsga3::Nsga3Config::default();
    let objective = |g: &[f64]| {
        let o = moderator_truth(&ModeratorPoint::new(g[0], g[1]).unwrap());
        [o.f1, o.f2]
    };
    let result = nsga3::run(objective, &spec, &config, 777).unwrap();

    let evolved: Vec<(f64, f64)> = result
        .pareto
        .iter()
        .map(|i| (i.objectives[0], i.objectives[1]))
        .filter(|&(a, b)| a >= nadir.0 && b >= nadir.1)
        .collect();
    let evolved_hv = hv2d_staircase(&pareto_filter(&evolved), nadir).unwrap();
    let ratio = evolved_hv / analytic_hv;
    assert!(
        ratio >= 0.99,
        "evolved front covers {ratio:.4} of the analytic hypervolume"
    );

    // Best-objective traces plateau by generation 25.
    let at25 = result.traces[25];
    let last = *result.traces.last().unwrap();
    let f1_gain = (last.best_f1 - at25.best_f1) / last.best_f1;
    let f2_gain = (last.best_f2 - at25.best_f2) / last.best_f2;
    assert!(
        f1_gain <= 1e-3 && f2_gain <= 1e-3,
        "traces still improving after generation 25: {f1_gain:.2e}, {f2_gain:.2e}"
    );
    println!(
        "ACCEPTANCE 5 PASS: NSGA-III covers {:.2}% of the analytic front hypervolume; post-gen-25 trace gains {:.1e}/{:.1e}",
        100.0 * ratio,
        f1_gain,
        f2_gain
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: noise model statistics

#[test]
fn criterion_06_noise_model_statistics() {
    let u = UncertaintySpec::new(0.05).unwrap();
    let mut rng = seed::stream(606, "acceptance-noise", &[]);
    let n = 100_000usize;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let v = sample_tally(1.0, u, &mut rng);
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / n as f64;
    let std = (sum2 / n as f64 - mean * mean).sqrt();
    assert!((mean - 1.0).abs() <= 5e-4, "mean {mean}");
    assert!((0.049..=0.051).contains(&std), "std {std}");
    println!("ACCEPTANCE 6 PASS: 1e5 draws at u=5%: mean {mean:.6}, rel std {std:.6}");
}

// ---------------------------------------------------------------------------
// Criterion 7: cost law

#[test]
fn criterion_07_cost_law() {
    for levels in [
        dataset::MODERATOR_LEVELS.as_slice(),
        dataset::CONVERTER_LEVELS.as_slice(),
    ] {
        let mut prev = 0.0;
        for &lv in levels.iter().rev() {
            let c = cost_of(UncertaintySpec::new(lv).unwrap());
            assert!(
                (c * lv * lv - 1e-4).abs() <= 1e-18,
                "cost({lv})*u^2 = {}",
                c * lv * lv
            );
            if prev != 0.0 {
                assert!(c < prev);
            }
            prev = c;
        }
    }
    // Dataset-level: the 10% moderator grid costs exactly 1/100 of the 1% grid.
    let cheap = dataset::generate_dataset(
        ProblemId::Moderator,
        UncertaintySpec::new(0.10).unwrap(),
        1,
    );
    let dear = dataset::generate_dataset(
        ProblemId::Moderator,
        UncertaintySpec::new(0.01).unwrap(),
        1,
    );
    assert_eq!(cheap.total_cost, 7.5);
    assert_eq!(dear.total_cost, 750.0);
    assert_eq!(dear.total_cost / cheap.total_cost, 100.0);
    println!("ACCEPTANCE 7 PASS: cost(u)*u^2 constant to machine precision, 10%:1% dataset cost ratio exactly 1:100");
}

// ---------------------------------------------------------------------------
// Criteria 8 and 9: end-to-end degradation trend and repeat stability
// (one shared ten-repeat study)

static STUDY: LazyLock<(tempfile::TempDir, StudyReport)> = LazyLock::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = moderator_study_config(dir.path(), 10, 20240);
    let report = pipeline::repeat_study(&cfg).expect("repeat study");
    (dir, report)
});

#[test]
fn criterion_08_degradation_trend() {
    let report = &STUDY.1;
    let at = |u: f64| report.per_level.iter().find(|r| r.u == u).unwrap();
    let noisy = at(0.10);
    let reference = at(0.01);
    let n = report.repeats as f64;

    assert!(
        noisy.hv_polygon_mean < reference.hv_polygon_mean,
        "mean HV at 10% ({}) not below 1% ({})",
        noisy.hv_polygon_mean,
        reference.hv_polygon_mean
    );
    assert!(
        noisy.loss_polygon_mean >= 5.0,
        "mean relative loss at 10% is {:.3}% (< 5 percentage points)",
        noisy.loss_polygon_mean
    );
    let pooled_se = ((noisy.hv_polygon_std.powi(2) + reference.hv_polygon_std.powi(2)) / n).sqrt();
    let diff = reference.hv_polygon_mean - noisy.hv_polygon_mean;
    assert!(
        diff > 2.0 * pooled_se,
        "HV difference {diff:.4} within 2x pooled SE {pooled_se:.4}"
    );
    println!(
        "ACCEPTANCE 8 PASS: over {} repeats, mean normalized HV {:.4}±{:.4} at u=1% vs {:.4}±{:.4} at u=10% (loss {:.2}%, diff {:.4} > 2*SE {:.4})",
        report.repeats,
        reference.hv_polygon_mean,
        reference.hv_polygon_std,
        noisy.hv_polygon_mean,
        noisy.hv_polygon_std,
        noisy.loss_polygon_mean,
        diff,
        pooled_se
    );
}

#[test]
fn criterion_09_repeat_stability() {
    let report = &STUDY.1;
    let reference = report.per_level.iter().find(|r| r.u == 0.01).unwrap();
    assert!(
        reference.hv_polygon_std < 0.05,
        "reference-level HV std {} exceeds 0.05",
        reference.hv_polygon_std
    );
    println!(
        "ACCEPTANCE 9 PASS: reference-level normalized HV std {:.4} < 0.05 over {} repeats",
        reference.hv_polygon_std, report.repeats
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism

fn collect_files(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn criterion_10_run_all_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let report_a = pipeline::cmd_run_all(&moderator_study_config(dir_a.path(), 1, 7)).unwrap();
    let report_b = pipeline::cmd_run_all(&moderator_study_config(dir_b.path(), 1, 7)).unwrap();
    assert_eq!(report_a, report_b);

    // The smoke run emits a complete five-row loss table.
    let table = std::fs::read_to_string(dir_a.path().join("loss_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 5, "loss table rows:\n{table}");

    let files_a = collect_files(dir_a.path());
    let files_b = collect_files(dir_b.path());
    assert_eq!(
        files_a.iter().map(|f| &f.0).collect::<Vec<_>>(),
        files_b.iter().map(|f| &f.0).collect::<Vec<_>>(),
        "artifact sets differ"
    );
    let mut compared = 0usize;
    for (a, b) in files_a.iter().zip(&files_b) {
        assert_eq!(a.1, b.1, "artifact {} differs between runs", a.0);
        compared += 1;
    }
    println!("ACCEPTANCE 10 PASS: two run-all invocations produced {compared} byte-identical artifacts");
}

// ---------------------------------------------------------------------------
// Criterion 11: loss-table arithmetic

#[test]
fn criterion_11_loss_table_arithmetic() {
    let loss = relative_hv_loss(0.8496, 0.8863).unwrap();
    let rounded = (loss * 1000.0).round() / 1000.0;
    assert_eq!(rounded, 4.141, "loss {loss} rounds to {rounded}");
    println!("ACCEPTANCE 11 PASS: relative_hv_loss(0.8496, 0.8863) = {loss:.6}% -> 4.141% at 3 decimals");
}

// ---------------------------------------------------------------------------

/// The staircase indicator never counts area outside the pooled unit square.
#[test]
fn normalized_hypervolumes_are_bounded() {
    let front = Front2D {
        points: vec![(1.0, 0.2), (0.7, 0.7), (0.2, 1.0)],
        sorted: true,
    };
    let hv = hv2d_staircase(&front, (0.0, 0.0)).unwrap();
    assert!(hv <= 1.0);
}
