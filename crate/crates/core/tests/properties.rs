use hardgraph::bounds::{bound_with, bound_without, compare_bounds};
use hardgraph::corrections::{verify_margin_correction, verify_temperature_correction};
use hardgraph::harness::{batch_loss, select_pairs, LossParams, LossVariant};
use hardgraph::perturb::{mc_lambda_shift, PerturbConfig, PerturbLevel};
use hardgraph::spectrum::{closed_form, dense_eigenvalues};
use hardgraph::{GraphMode, GraphParams, SeededRng, SimilarityGraph};
use ndarray::Array2;
use proptest::prelude::*;

/// Strictly ordered `0 ≤ β < γ < α < 1` with `n = κ n_d`, small enough for
/// dense checks.
fn params() -> impl Strategy<Value = GraphParams> {
    (
        1usize..=3,
        2usize..=3,
        1usize..=3,
        0.0f64..1.0,
        0.0f64..1.0,
        0.05f64..0.95,
    )
        .prop_map(|(n_d, kappa, r, u, v, alpha)| {
            let gamma = alpha * (0.05 + 0.9 * u);
            let beta = gamma * (0.9 * v);
            GraphParams::new(kappa * n_d, r, n_d, alpha, beta, gamma).unwrap()
        })
}

fn random_batch(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = SeededRng::new(seed);
    let mut s = Array2::zeros((n, n));
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        s[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let x = 2.0 * rng.uniform() - 1.0;
            s[[i, j]] = x;
            s[[j, i]] = x;
            if rng.uniform() < 0.4 {
                p[[i, j]] = 1.0;
                p[[j, i]] = 1.0;
            }
        }
    }
    (s, p)
}

fn permute(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[perm[i], perm[j]]])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn closed_form_matches_dense(params in params()) {
        for mode in GraphMode::ALL {
            let closed = closed_form(&params, mode).unwrap();
            let a_bar = SimilarityGraph::build(&params, mode).unwrap().normalize().a_bar;
            let dense = dense_eigenvalues(&a_bar).unwrap();
            prop_assert!(closed.max_abs_diff(&dense).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn corrections_restore_the_clean_matrix(params in params()) {
        prop_assert!(verify_margin_correction(&params).unwrap() <= 1e-10);
        prop_assert!(verify_temperature_correction(&params).unwrap() <= 1e-10);
    }

    #[test]
    fn bound_ordering_follows_degree_condition(params in params(), delta in 0.001f64..0.5) {
        // Cross-multiplying the two λ terms with c1 = c2 + n_d r (γ − β)
        // leaves c2 > n_d (1 − α): difficult samples loosen the bound exactly
        // when the clean degree outweighs their self-similarity mass.
        let k = params.r + 1;
        let c2 = params.degree_constants().c2;
        let expected = c2 > params.n_d as f64 * (1.0 - params.alpha);
        prop_assume!((c2 - params.n_d as f64 * (1.0 - params.alpha)).abs() > 1e-9);
        let with = bound_with(&params, delta, k).unwrap().bound_value;
        let without = bound_without(&params, delta).unwrap().bound_value;
        prop_assert_eq!(with > without, expected, "{} vs {}", with, without);
        let cmp = compare_bounds(&params, delta, k).unwrap();
        prop_assert_eq!(cmp.with_exceeds_without, expected);
        prop_assert!(cmp.reports.windows(2).all(|w| w[0].bound_value <= w[1].bound_value));
    }

    #[test]
    fn weyl_holds_every_trial(params in params(), seed in 0u64..1000, eps in 1e-5f64..1e-2) {
        let config = PerturbConfig { epsilon: eps, trials: 4, seed, k: params.r + 1, level: PerturbLevel::Normalized };
        let report = mc_lambda_shift(&params, GraphMode::WithDifficult, &config).unwrap();
        prop_assert!(report.all_hold());
    }

    #[test]
    fn loss_is_permutation_invariant(seed in 0u64..10_000, half in 2usize..6) {
        let n = 2 * half;
        let (s, p) = random_batch(n, seed);
        // Permute whole positive pairs so partners stay at (2m, 2m + 1).
        let mut order: Vec<usize> = (0..half).collect();
        SeededRng::new(seed ^ 0x5eed).shuffle(&mut order);
        let perm: Vec<usize> = order.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let lp = LossParams { tau: 0.5, sigma: 0.3, rho: 0.6 };
        for variant in LossVariant::ALL {
            let a = batch_loss(&s, &p, variant, &lp).unwrap();
            let b = batch_loss(&permute(&s, &perm), &permute(&p, &perm), variant, &lp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn empty_selection_reduces_to_baseline(seed in 0u64..10_000, half in 2usize..6) {
        let (s, _) = random_batch(2 * half, seed);
        let p = Array2::zeros(s.dim());
        let lp = LossParams { tau: 0.4, sigma: 0.7, rho: 0.3 };
        let base = batch_loss(&s, &p, LossVariant::Baseline, &lp).unwrap();
        for variant in LossVariant::ALL {
            prop_assert!((batch_loss(&s, &p, variant, &lp).unwrap() - base).abs() <= 1e-14);
        }
    }

    #[test]
    fn selection_is_symmetric_and_hollow(seed in 0u64..10_000, half in 2usize..8, lo in 0.0f64..1.0, width in 0.0f64..1.0) {
        let (s, _) = random_batch(2 * half, seed);
        let pos_high = lo;
        let pos_low = (lo + width).min(1.0);
        let sel = select_pairs(&s, pos_high, pos_low).unwrap();
        prop_assert_eq!(&sel.p, &sel.p.t());
        prop_assert!(sel.p.diag().iter().all(|&x| x == 0.0));
        prop_assert!(sel.p.iter().all(|&x| x == 0.0 || x == 1.0));
    }
}
