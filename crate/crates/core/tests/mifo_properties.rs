use proptest::prelude::*;

use mifo_core::{
    generate_synthetic, inject_missing, mean_impute, mifo_impute, mifo_impute_observed, nrmse,
    DataMatrix, MifoParams, SyntheticSpec,
};

fn small_params(ntree: usize, seed: u64) -> MifoParams {
    let mut p = MifoParams::default();
    p.forest.ntree = ntree;
    p.forest.seed = seed;
    p
}

fn holed(seed: u64, n: usize, p: usize, rate: f64) -> (DataMatrix, DataMatrix) {
    let data = generate_synthetic(&SyntheticSpec {
        n_rows: n,
        n_cols: p,
        latent_rank: 2.min(p),
        noise_sigma: 0.2,
        seed,
    })
    .unwrap();
    let pair = inject_missing(&data, rate, seed).unwrap();
    (pair.truth, pair.observed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observed_entries_survive_and_trace_is_well_formed(
        seed in any::<u64>(),
        n in 12usize..40,
        p in 2usize..6,
        rate in 0.05f64..0.3,
        max_iter in 1usize..6,
    ) {
        let (_, observed) = holed(seed, n, p, rate);
        let mut params = small_params(10, seed);
        params.max_iter = max_iter;
        let mut sweeps = Vec::new();
        let r = mifo_impute_observed(&observed, &params, |_, m| sweeps.push(m.clone())).unwrap();

        prop_assert!(r.imputed.is_complete());
        for i in 0..n {
            for j in 0..p {
                if let Some(v) = observed.get(i, j) {
                    prop_assert_eq!(r.imputed.get(i, j).unwrap().to_bits(), v.to_bits());
                }
            }
        }
        let t = &r.delta_trace;
        prop_assert!(r.iterations_run <= max_iter);
        prop_assert_eq!(t.len(), r.iterations_run);
        prop_assert_eq!(sweeps.len(), r.iterations_run);
        prop_assert!(t.iter().all(|d| *d >= 0.0));

        let k = t.len();
        let rose = k >= 2 && t[k - 1] > t[k - 2];
        prop_assert!(k < 2 || t[..k - 1].windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.converged, rose);
        if k < max_iter {
            prop_assert!(rose);
        }
        let expect = if rose { &sweeps[k - 2] } else { &sweeps[k - 1] };
        prop_assert!(r.imputed == *expect);
    }
}

#[test]
fn results_are_bitwise_reproducible_across_thread_counts() {
    let (_, observed) = holed(8, 40, 5, 0.2);
    let params = small_params(25, 3);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mifo_impute(&observed, &params).unwrap())
    };
    let (a, b, c) = (run(1), run(1), run(4));
    for other in [&b, &c] {
        assert!(a.imputed == other.imputed);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.delta_trace), bits(&other.delta_trace));
        assert_eq!(a.oob_nrmse_estimate, other.oob_nrmse_estimate);
        assert_eq!(a.per_column_oob_mse, other.per_column_oob_mse);
    }
}

#[test]
fn synthetic_runs_have_positive_trace_and_stop_in_time() {
    for seed in 1..=20 {
        let (_, observed) = holed(seed, 60, 8, 0.15);
        let r = mifo_impute(&observed, &small_params(30, seed)).unwrap();
        assert!(r.iterations_run >= 1 && r.iterations_run <= 10);
        assert!(
            r.delta_trace.iter().all(|d| *d > 0.0),
            "{:?}",
            r.delta_trace
        );
    }
}

#[test]
fn beats_mean_fill_on_low_rank_data() {
    let mut wins = 0;
    for seed in 1..=10 {
        let (truth, observed) = holed(seed, 100, 8, 0.1);
        let positions = observed.missing_positions();
        let forest = mifo_impute(&observed, &small_params(50, seed)).unwrap();
        let mifo = nrmse(&truth, &forest.imputed, &positions).unwrap();
        let mean = nrmse(&truth, &mean_impute(&observed).unwrap(), &positions).unwrap();
        if mifo < mean {
            wins += 1;
        }
    }
    assert!(wins >= 9, "mifo won {wins}/10");
}
