//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines print in order and unbuffered.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;

use hardgraph::bounds::{self, BoundScenario};
use hardgraph::cli::{self, Command};
use hardgraph::corrections;
use hardgraph::factorize::{self, FactorLoss, OptimizeConfig};
use hardgraph::graph::{reference_grid, GraphMode, GraphParams, SimilarityGraph, GRID_TRIPLES};
use hardgraph::harness::{self, Experiment, LossVariant, TrainConfig};
use hardgraph::perturb::{self, PerturbConfig, PerturbLevel};
use hardgraph::probe::{ProbeSetup, DEFAULT_RIDGE};
use hardgraph::rng::SeededRng;
use hardgraph::spectrum;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn p0() -> GraphParams {
    GraphParams::new(4, 1, 1, 0.8, 0.1, 0.5).unwrap()
}

fn p1() -> GraphParams {
    GraphParams::new(100, 1, 1, 0.8, 0.1, 0.5).unwrap()
}

fn modes_for(p: &GraphParams) -> Vec<GraphMode> {
    GraphMode::ALL
        .into_iter()
        .filter(|&m| m != GraphMode::Removed || p.n_d < p.n)
        .collect()
}

fn closed_form_spectra() -> Verdict {
    let start = Instant::now();
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for p in reference_grid() {
        for mode in modes_for(&p) {
            let closed = spectrum::closed_form(&p, mode).unwrap();
            let a_bar = SimilarityGraph::build(&p, mode).unwrap().normalize().a_bar;
            let numerical = spectrum::dense_eigenvalues(&a_bar).unwrap();
            worst = worst.max(closed.max_abs_diff(&numerical).unwrap());
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        cases >= 48 && worst <= 1e-10 && elapsed < Duration::from_secs(30),
        format!(
            "{cases} (tuple, mode) cases, max |closed - dense| = {worst:.2e}, {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn bound_ordering() -> Verdict {
    let delta = 0.01;
    let mut strict = 0;
    let mut strict_fail = 0;
    let mut worst_equal: f64 = 0.0;
    for p in reference_grid() {
        for k in (p.r + 1)..(p.n_d + p.r + 1) {
            let with = bounds::bound_with(&p, delta, k).unwrap().bound_value;
            let without = bounds::bound_without(&p, delta).unwrap().bound_value;
            strict += 1;
            // Counts NaN as a failure too.
            if with.partial_cmp(&without) != Some(std::cmp::Ordering::Greater) {
                strict_fail += 1;
            }
            let equal = GraphParams { gamma: p.beta, ..p };
            let with_eq = bounds::bound_with(&equal, delta, k).unwrap().bound_value;
            let without_eq = bounds::bound_without(&equal, delta).unwrap().bound_value;
            worst_equal = worst_equal.max((with_eq - without_eq).abs());
        }
    }
    verdict(
        strict_fail == 0 && worst_equal <= 1e-12,
        format!("{strict} (tuple, k) cases with gamma > beta: {strict_fail} not strict; gamma = beta max |with - without| = {worst_equal:.2e}"),
    )
}

/// Root in `γ ∈ (β, α]` of `bound_with − bound_removed`, if it changes sign.
fn removal_root(p: &GraphParams) -> Option<f64> {
    let delta = 0.01;
    let k = p.r + 1;
    let gap = |gamma: f64| {
        let q = GraphParams { gamma, ..*p };
        bounds::bound_with(&q, delta, k).unwrap().bound_value - bounds::bound_removed(&q, delta).unwrap().bound_value
    };
    let (mut lo, mut hi) = (p.beta, p.alpha);
    if gap(lo).signum() == gap(hi).signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid).signum() == gap(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn crossovers() -> Verdict {
    // Removal: bisection root in γ against β + Δ*.
    let mut removal_cases = 0;
    let mut removal_worst: f64 = 0.0;
    let mut fixed_point_worst: f64 = 0.0;
    for p in reference_grid().into_iter().filter(|p| p.n_d < p.n) {
        let predicted = p.beta + bounds::removal_crossover_gap(&p).unwrap();
        match removal_root(&p) {
            Some(root) => {
                removal_cases += 1;
                removal_worst = removal_worst.max((root - predicted).abs());
                let at = GraphParams { gamma: predicted, ..p };
                let t = bounds::removal_crossover_threshold(&at).unwrap();
                fixed_point_worst = fixed_point_worst.max((t - (predicted - p.beta)).abs());
            }
            None => {
                // No flip inside (β, α] means the predicted crossing lies outside it.
                if predicted > p.beta && predicted <= p.alpha {
                    removal_worst = f64::INFINITY;
                }
            }
        }
    }

    // Temperature: n_d sweeps on P1-style tuples.
    let delta = 0.01;
    let mut temp_cases = 0;
    let mut temp_fail = Vec::new();
    for (alpha, beta, gamma) in GRID_TRIPLES {
        for r in [1, 2, 4] {
            for n in [100, 400] {
                let at = |n_d: usize| GraphParams {
                    n,
                    r,
                    n_d,
                    alpha,
                    beta,
                    gamma,
                };
                let wins = |n_d: usize| {
                    let q = at(n_d);
                    bounds::bound_temperature(&q, delta).unwrap().bound_value
                        < bounds::bound_with(&q, delta, r + 1).unwrap().bound_value
                };
                let last_win = (1..=n).take_while(|&d| wins(d)).last().unwrap_or(0);
                let threshold = bounds::temperature_nd_threshold(&at(1)).unwrap();
                temp_cases += 1;
                if (threshold - last_win as f64).abs() > 1.0 {
                    temp_fail.push(format!(
                        "n={n} r={r} ({alpha},{beta},{gamma}): flip after {last_win}, threshold {threshold:.3}"
                    ));
                }
            }
        }
    }
    verdict(
        removal_cases > 0 && removal_worst <= 1e-9 && fixed_point_worst <= 1e-12 && temp_fail.is_empty(),
        format!(
            "removal: {removal_cases} flips, max |root - (beta + gap)| = {removal_worst:.2e}, fixed-point residual {fixed_point_worst:.2e}; \
             temperature: {}/{temp_cases} sweeps within one n_d step{}",
            temp_cases - temp_fail.len(),
            if temp_fail.is_empty() { String::new() } else { format!(" [{}]", temp_fail.join("; ")) }
        ),
    )
}

fn correction_identities() -> Verdict {
    let grid = reference_grid();
    let mut worst_m: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for p in &grid {
        worst_m = worst_m.max(corrections::verify_margin_correction(p).unwrap());
        worst_t = worst_t.max(corrections::verify_temperature_correction(p).unwrap());
    }
    verdict(
        worst_m <= 1e-10 && worst_t <= 1e-10,
        format!(
            "{} tuples: max margin deviation {worst_m:.2e}, max temperature deviation {worst_t:.2e}",
            grid.len()
        ),
    )
}

fn random_f(n: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_simple_fn((n, k), || rng.uniform_range(-0.5, 0.5))
}

fn relative_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var / (mean * mean)
}

fn loss_equivalences() -> Verdict {
    let mut worst = [0.0_f64; 3];
    let grid = reference_grid();
    for p in &grid {
        let ng = SimilarityGraph::build(p, GraphMode::WithDifficult).unwrap().normalize();
        let margin = corrections::margin_matrix(p).unwrap();
        let m_bar = margin.normalized(&ng.degrees);
        let t = corrections::temperature_matrix(p).unwrap().entries;
        let mut offsets = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..10 {
            let f = random_f(ng.len(), 3, seed);
            offsets[0].push(factorize::spectral_loss(&f, &ng).unwrap() - factorize::mf_loss(&f, &ng.a_bar).unwrap());
            offsets[1].push(
                factorize::margin_spectral_loss(&f, &ng, &margin.entries).unwrap()
                    - factorize::margin_mf_loss(&f, &ng.a_bar, &m_bar).unwrap(),
            );
            offsets[2].push(
                factorize::temperature_spectral_loss(&f, &ng, &t).unwrap()
                    - factorize::temperature_mf_loss(&f, &ng.a_bar, &t).unwrap(),
            );
        }
        for (w, o) in worst.iter_mut().zip(&offsets) {
            *w = w.max(relative_variance(o));
        }
    }
    verdict(
        worst.iter().all(|&v| v < 1e-9),
        format!(
            "{} tuples x 10 F: max relative variance spectral {:.1e}, margin {:.1e}, temperature {:.1e}",
            grid.len(),
            worst[0],
            worst[1],
            worst[2]
        ),
    )
}

fn fd_relative_error(analytic: &Array2<f64>, mut eval: impl FnMut(usize, f64) -> f64, h: f64) -> f64 {
    let fd = Array2::from_shape_fn(analytic.dim(), |(i, j)| {
        let idx = i * analytic.ncols() + j;
        (eval(idx, h) - eval(idx, -h)) / (2.0 * h)
    });
    let diff = (&fd - analytic).mapv(|x| x * x).sum().sqrt();
    diff / analytic.mapv(|x| x * x).sum().sqrt()
}

fn gradients() -> Verdict {
    let mut factor_worst: f64 = 0.0;
    for p in [
        p0(),
        GraphParams::new(8, 2, 2, 0.8, 0.1, 0.5).unwrap(),
        GraphParams::new(4, 4, 2, 0.6, 0.05, 0.3).unwrap(),
    ] {
        let ng = SimilarityGraph::build(&p, GraphMode::WithDifficult)
            .unwrap()
            .normalize();
        let t = corrections::temperature_matrix(&p).unwrap().entries;
        let cases = [
            (ng.a_bar.clone(), FactorLoss::Frobenius),
            (corrections::margin_corrected(&p).unwrap(), FactorLoss::Frobenius),
            (&t * &ng.a_bar, FactorLoss::Weighted(factorize::temperature_weights(&t))),
        ];
        for (seed, (target, loss)) in cases.iter().enumerate() {
            let f = random_f(ng.len(), 3, 40 + seed as u64);
            let analytic = factorize::gradient(&f, loss, target).unwrap();
            let k = f.ncols();
            let err = fd_relative_error(
                &analytic,
                |idx, h| {
                    let mut g = f.clone();
                    g[[idx / k, idx % k]] += h;
                    loss.loss(&g, target).unwrap()
                },
                1e-5,
            );
            factor_worst = factor_worst.max(err);
        }
    }

    let mut harness_worst: f64 = 0.0;
    let mut rng = SeededRng::new(77);
    let views = Array2::from_shape_simple_fn((6, 5), || rng.normal());
    let weights = harness::train::init_weights(3, 5, 8);
    let config = TrainConfig {
        sigma: 0.4,
        rho: 0.6,
        ..TrainConfig::default()
    };
    let h = views.dot(&weights.t());
    let p = harness::select_pairs(&harness::cosine_similarity_matrix(&h).unwrap(), 0.2, 0.9)
        .unwrap()
        .p;
    for variant in LossVariant::ALL {
        let (_, analytic) = harness::train::batch_step_with(&weights, &views, &p, &config, variant).unwrap();
        let d = weights.ncols();
        let err = fd_relative_error(
            &analytic,
            |idx, step| {
                let mut w = weights.clone();
                w[[idx / d, idx % d]] += step;
                harness::train::batch_step_with(&w, &views, &p, &config, variant)
                    .unwrap()
                    .0
            },
            1e-6,
        );
        harness_worst = harness_worst.max(err);
    }
    verdict(
        factor_worst < 1e-6 && harness_worst < 1e-5,
        format!("factorization max relative error {factor_worst:.1e} (< 1e-6); harness, all variants, 2N=6: {harness_worst:.1e} (< 1e-5)"),
    )
}

fn optimization_residual() -> Verdict {
    let start = Instant::now();
    let a_bar = SimilarityGraph::build(&p0(), GraphMode::WithoutDifficult)
        .unwrap()
        .normalize()
        .a_bar;
    let result = factorize::optimize(&OptimizeConfig::default(), &FactorLoss::Frobenius, &a_bar).unwrap();
    let elapsed = start.elapsed();
    let loss = result.final_loss();
    verdict(
        (loss - 0.0166205).abs() <= 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "P0 without, k=2: final loss {loss:.7} (target 0.0166205 +/- 1e-5), {:.3}s (< 10s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn bound_validity() -> Verdict {
    let scenarios = [
        BoundScenario::WithoutDifficult,
        BoundScenario::WithDifficult,
        BoundScenario::Removed,
        BoundScenario::MarginTuned,
        BoundScenario::TemperatureScaled,
    ];
    let mut runs = 0;
    let mut over = Vec::new();
    let mut nonzero_clean = Vec::new();
    for p in [p0(), p1()] {
        let config = OptimizeConfig {
            k: p.r + 1,
            ..OptimizeConfig::default()
        };
        for scenario in scenarios {
            let setup = ProbeSetup::new(&p, scenario, &config).unwrap();
            for delta in [0.02, 0.05] {
                for seed in 0..20 {
                    let result = setup.run(delta, seed, DEFAULT_RIDGE).unwrap();
                    runs += 1;
                    if !result.within_bound() {
                        over.push(format!("n={} {} delta={delta} seed={seed}", p.n, scenario.label()));
                    }
                }
            }
            let clean = setup.run(0.0, 0, DEFAULT_RIDGE).unwrap();
            if clean.weighted_error != 0.0 {
                nonzero_clean.push(format!("n={} {}: {}", p.n, scenario.label(), clean.weighted_error));
            }
        }
    }
    verdict(
        over.is_empty() && nonzero_clean.is_empty(),
        format!(
            "P0 and P1, 5 scenarios x 2 deltas x 20 seeds = {runs} runs: {} over the bound{}; delta=0 non-zero errors: {}",
            over.len(),
            if over.is_empty() { String::new() } else { format!(" [{}]", over.join(", ")) },
            if nonzero_clean.is_empty() { "none".to_string() } else { nonzero_clean.join(", ") }
        ),
    )
}

fn weyl_and_semicircle() -> Verdict {
    let start = Instant::now();
    let mut weyl = Vec::new();
    for epsilon in [1e-4, 1e-3] {
        let config = PerturbConfig {
            epsilon,
            trials: 100,
            seed: 11,
            k: 2,
            level: PerturbLevel::Normalized,
        };
        let report = perturb::mc_lambda_shift(&p1(), GraphMode::WithDifficult, &config).unwrap();
        weyl.push((epsilon, report.trials.iter().filter(|t| t.holds).count()));
    }
    let law = perturb::empirical_spectral_law(512, 20, 40, 5).unwrap();
    let elapsed = start.elapsed();
    let weyl_ok = weyl.iter().all(|&(_, holds)| holds == 100);
    verdict(
        weyl_ok && law.ks_distance < 0.05 && elapsed < Duration::from_secs(120),
        format!(
            "P1 k=2 Weyl holds in {}/100 (eps 1e-4) and {}/100 (eps 1e-3); semicircle KS at N=512 x 20 = {:.4} (< 0.05); {:.1}s (< 120s)",
            weyl[0].1,
            weyl[1].1,
            law.ks_distance,
            elapsed.as_secs_f64()
        ),
    )
}

/// Mean and standard error of the mean.
fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

const TRAINING_SEEDS: u64 = 40;

struct TrainingRuns {
    /// `accuracy[seed][variant]`, variants in `LossVariant::ALL` order.
    accuracy: Vec<Vec<f64>>,
    combined_ratio: Vec<f64>,
    sweep: Vec<(f64, f64)>,
    elapsed: Duration,
}

fn training_runs() -> TrainingRuns {
    let start = Instant::now();
    let experiment = Experiment::default();
    let config = TrainConfig::default();
    let per_seed: Vec<(Vec<f64>, f64)> = (0..TRAINING_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut acc = Vec::new();
            let mut ratio = 0.0;
            for variant in LossVariant::ALL {
                let outcome = experiment.run(seed, &config, variant).unwrap();
                acc.push(outcome.final_accuracy().unwrap());
                if variant == LossVariant::Combined {
                    ratio = outcome.metrics.last().unwrap().diff_class_ratio;
                }
            }
            (acc, ratio)
        })
        .collect();
    let baseline_at = |mix_ratio: f64| {
        let e = Experiment {
            mix_ratio,
            ..experiment.clone()
        };
        let accs: Vec<f64> = (0..TRAINING_SEEDS)
            .into_par_iter()
            .map(|seed| {
                e.run(seed, &config, LossVariant::Baseline)
                    .unwrap()
                    .final_accuracy()
                    .unwrap()
            })
            .collect();
        mean_sem(&accs).0
    };
    let base_mix = experiment.mix_ratio;
    let mut sweep: Vec<(f64, f64)> = [0.0, 0.1].iter().map(|&m| (m, baseline_at(m))).collect();
    sweep.push((
        base_mix,
        mean_sem(&per_seed.iter().map(|(a, _)| a[0]).collect::<Vec<_>>()).0,
    ));
    TrainingRuns {
        accuracy: per_seed.iter().map(|(a, _)| a.clone()).collect(),
        combined_ratio: per_seed.iter().map(|(_, r)| *r).collect(),
        sweep,
        elapsed: start.elapsed(),
    }
}

fn directional(runs: &TrainingRuns) -> Verdict {
    let idx = |v: LossVariant| LossVariant::ALL.iter().position(|&x| x == v).unwrap();
    let column = |v: LossVariant| runs.accuracy.iter().map(|a| a[idx(v)]).collect::<Vec<_>>();
    let means: Vec<String> = LossVariant::ALL
        .iter()
        .map(|&v| {
            let (m, s) = mean_sem(&column(v));
            format!("{v} {m:.4}+/-{s:.4}")
        })
        .collect();
    use LossVariant::*;
    let mut all = true;
    let mut parts = Vec::new();
    for (a, b) in [
        (Combined, Margin),
        (Combined, Temperature),
        (Margin, Baseline),
        (Temperature, Baseline),
        (Removal, Baseline),
    ] {
        let diffs: Vec<f64> = column(a).iter().zip(column(b)).map(|(x, y)| x - y).collect();
        let (m, se) = mean_sem(&diffs);
        let ok = m > se;
        all &= ok;
        parts.push(format!(
            "{a}-{b} {m:+.4} (sem {se:.4}){}",
            if ok { "" } else { " FAIL" }
        ));
    }
    let monotone = runs.sweep.windows(2).all(|w| w[0].1 > w[1].1);
    let sweep: Vec<String> = runs.sweep.iter().map(|(m, a)| format!("{m}: {a:.4}")).collect();
    verdict(
        all && monotone && runs.elapsed < Duration::from_secs(300),
        format!(
            "{TRAINING_SEEDS} seeds; {}; paired: {}; baseline mix sweep {} ({}); {:.1}s (< 300s)",
            means.join(", "),
            parts.join(", "),
            sweep.join(" > "),
            if monotone { "decreasing" } else { "NOT decreasing" },
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn selection_ratio(runs: &TrainingRuns) -> Verdict {
    let high = runs.combined_ratio.iter().filter(|&&r| r >= 0.9).count();
    let n = runs.combined_ratio.len();
    let (mean, _) = mean_sem(&runs.combined_ratio);
    verdict(
        high as f64 >= 0.8 * n as f64,
        format!("combined, final epoch: ratio >= 0.9 in {high}/{n} seeds (mean {mean:.3})"),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        "# small configuration touching every subcommand\n\
         n = 4\nr = 1\nn_d = 1\nalpha = 0.8\nbeta = 0.1\ngamma = 0.5\n\
         delta = 0.02\nk = 2\nepsilon = 0.001\ntrials = 5\nseed = 3\nsteps = 500\n\
         law_n = 64\nlaw_trials = 2\nlaw_bins = 10\n\
         batch_size = 16\nepochs = 3\nper_class = 24\neval_per_class = 20\n",
    )
    .unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    for command in Command::ALL {
        let a = dir.path().join(format!("{command}-a"));
        let b = dir.path().join(format!("{command}-b"));
        let (_, files_a) = cli::run(command, &config, &a, None, false).unwrap();
        let (_, files_b) = cli::run(command, &config, &b, None, false).unwrap();
        for (fa, fb) in files_a.iter().zip(&files_b) {
            compared += 1;
            if fs::read(fa).unwrap() != fs::read(fb).unwrap() {
                differing.push(fa.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    verdict(
        differing.is_empty() && compared >= Command::ALL.len(),
        format!(
            "{compared} CSVs from {} subcommands compared byte for byte; differing: {}",
            Command::ALL.len(),
            if differing.is_empty() {
                "none".into()
            } else {
                differing.join(", ")
            }
        ),
    )
}

fn main() -> ExitCode {
    // Determinism is independent of the thread count, but the runtime limits
    // are measured with whatever parallelism the machine offers.
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!(
            "AC{id:<2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };
    report(1, "closed-form vs numerical spectra", closed_form_spectra());
    report(2, "bound ordering", bound_ordering());
    report(3, "crossover thresholds", crossovers());
    report(4, "correction identities", correction_identities());
    report(5, "loss equivalences", loss_equivalences());
    report(6, "gradients", gradients());
    report(7, "optimization residual", optimization_residual());
    report(8, "bound validity end-to-end", bound_validity());
    report(9, "Weyl and random-matrix suite", weyl_and_semicircle());
    let runs = training_runs();
    report(10, "directional training result", directional(&runs));
    report(11, "selection diagnostic", selection_ratio(&runs));
    report(12, "determinism", determinism());
    let failed = results.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
