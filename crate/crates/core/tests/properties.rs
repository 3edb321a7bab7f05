//! Property tests for invariants of the model, formats, schedules and estimators.

mod common;

use apcd::eval::{mean_and_sem, parzen_log_density, ParzenEstimator};
use apcd::exact::Enumerator;
use apcd::formats::{
    format_metrics_record, parse_dataset, parse_metrics_record, parse_model, write_dataset, write_model,
};
use apcd::model::{log_unnormalized, suff_stats};
use apcd::schedule::{validate_schedule_pair, ScheduleSpec, ScheduleVerdict};
use apcd::stats::log_sum_exp;
use apcd::synth::{grid_topology, split_tail};
use apcd::trainer::{moving_average, MetricsRecord};
use apcd::{Configuration, PairwiseModel, StatsVector};
use common::*;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_inner_product_of_params_and_stats((seed, n) in instance(), index in any::<usize>()) {
        let mut r = rng(seed);
        let topo = random_topology(&mut r, n, 0.5);
        let model = random_model(&mut r, topo.clone(), 3.0);
        let x = bits(index % (1 << n), n);
        let cfg = Configuration::from_bits(x.clone()).unwrap();
        let s = suff_stats(&topo, &cfg).unwrap();
        prop_assert_eq!(s.to_flat(), stats(&model, &x));
        let e = log_unnormalized(&model, &cfg).unwrap();
        prop_assert!((e - model.params().dot(&s)).abs() < 1e-12);
        prop_assert!((e - energy(&model, &x)).abs() < 1e-12);
    }

    #[test]
    fn exact_quantities_match_brute_force((seed, n) in instance()) {
        let mut r = rng(seed);
        let topo = random_topology(&mut r, n, 0.5);
        let model = random_model(&mut r, topo, 2.0);
        let part = random_partition(&mut r, n);
        let data = random_data(&mut r, n, 4);
        let en = Enumerator::default();
        prop_assert!((en.log_partition(&model).unwrap() - log_partition(&model)).abs() < 1e-10);
        let mu = en.mean_params(&model).unwrap().to_flat();
        prop_assert!(max_abs_diff(&mu, &mean_params(&model)) < 1e-12);
        prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
        let ll = en.marginal_loglik(&model, &part, &data).unwrap();
        prop_assert!((ll - marginal_loglik(&model, &part, &data)).abs() < 1e-10);
        prop_assert!(ll <= 1e-12);
    }

    #[test]
    fn model_file_round_trips((seed, n) in instance()) {
        let mut r = rng(seed);
        let topo = random_topology(&mut r, n, 0.5);
        let model = random_model(&mut r, topo, 5.0);
        let part = random_partition(&mut r, n);
        let text = write_model(&model, &part, &["note".to_string()]);
        let parsed = parse_model(&text).unwrap();
        prop_assert_eq!(&parsed.model, &model);
        prop_assert_eq!(&parsed.partition, &part);
        prop_assert_eq!(write_model(&parsed.model, &parsed.partition, &["note".to_string()]), text);
    }

    #[test]
    fn dataset_round_trips((seed, n) in instance(), count in 1usize..20) {
        let mut r = rng(seed);
        let data = random_data(&mut r, n, count);
        let parsed = parse_dataset(&write_dataset(&data, &[])).unwrap();
        prop_assert_eq!(parsed, data);
    }

    #[test]
    fn metrics_record_round_trips(it in 0usize..100_000, a in proptest::option::of(-1e3f64..1e3), ll in proptest::option::of(-1e3f64..0.0)) {
        let rec = MetricsRecord {
            variant: "apcd".into(),
            iteration: it,
            timestamp: 1.25,
            a,
            b: Some(0.5),
            grad_norm_estimate: None,
            exact_loglik: ll,
            exact_grad_norm: None,
            inner_grad_norm: None,
        };
        let parsed = parse_metrics_record(&format_metrics_record(&rec), 1).unwrap();
        prop_assert_eq!(parsed, rec);
    }

    #[test]
    fn power_law_schedules_are_positive_and_non_increasing(c in 0.01f64..10.0, p in 0.01f64..1.0, t in 0usize..1_000_000) {
        let s = ScheduleSpec::power_law(c, p).unwrap();
        prop_assert!(s.value(t) > 0.0);
        prop_assert!(s.value(t + 1) <= s.value(t));
        prop_assert!(s.value(0) == c);
        let text = s.to_string();
        prop_assert_eq!(text.parse::<ScheduleSpec>().unwrap(), s);
    }

    #[test]
    fn validator_orders_by_exponent(pa in 0.51f64..1.0, pb in 0.51f64..1.0) {
        let a = ScheduleSpec::power_law(1.0, pa).unwrap();
        let b = ScheduleSpec::power_law(1.0, pb).unwrap();
        let verdict = validate_schedule_pair(&a, &b);
        if pa < pb {
            prop_assert_eq!(verdict, ScheduleVerdict::ValidEFast);
        } else if pa > pb {
            prop_assert_eq!(verdict, ScheduleVerdict::ValidESlow);
        } else {
            prop_assert!(!verdict.is_valid());
        }
    }

    #[test]
    fn grid_has_expected_edges(rows in 1usize..30, cols in 1usize..30) {
        let g = grid_topology(rows, cols).unwrap();
        prop_assert_eq!(g.num_nodes(), rows * cols);
        prop_assert_eq!(g.num_edges(), 2 * rows * cols - rows - cols);
        for &(i, j) in g.edges() {
            prop_assert!(j == i + 1 && i % cols + 1 < cols || j == i + cols);
        }
    }

    #[test]
    fn moving_average_stays_in_hull(a in 0.0f64..=1.0, x in prop::collection::vec(0.0f64..1.0, 4), y in prop::collection::vec(0.0f64..1.0, 4)) {
        let mut cur = StatsVector::from_flat(&x, 2).unwrap();
        let fresh = StatsVector::from_flat(&y, 2).unwrap();
        moving_average(&mut cur, &fresh, a);
        for ((c, xi), yi) in cur.iter().zip(&x).zip(&y) {
            prop_assert!(*c >= xi.min(*yi) - 1e-15 && *c <= xi.max(*yi) + 1e-15);
        }
    }

    #[test]
    fn split_tail_partitions(len in 0usize..50, f in 0.0f64..=1.0) {
        let items: Vec<usize> = (0..len).collect();
        let (head, tail) = split_tail(&items, f);
        prop_assert_eq!(tail.len(), (f * len as f64).floor() as usize);
        prop_assert_eq!([head, tail].concat(), items);
    }

    #[test]
    fn log_sum_exp_matches_naive(v in prop::collection::vec(-30.0f64..30.0, 1..20)) {
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(v.iter().cloned()) - naive).abs() < 1e-10);
    }

    #[test]
    fn parzen_density_matches_direct_formula(seed in any::<u64>(), sigma in 0.05f64..2.0) {
        let mut r = rng(seed);
        let samples: Vec<Vec<f64>> = random_data(&mut r, 3, 6).iter().map(|c| c.bits().iter().map(|&b| b as f64).collect()).collect();
        let x: Vec<f64> = random_data(&mut r, 3, 1)[0].bits().iter().map(|&b| b as f64).collect();
        let est = ParzenEstimator::new(samples.clone(), sigma).unwrap();
        let d = 3.0;
        let direct = samples
            .iter()
            .map(|s| {
                let sq: f64 = s.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).powf(d / 2.0)
            })
            .sum::<f64>()
            / samples.len() as f64;
        prop_assert!((parzen_log_density(&est, &x).unwrap() - direct.ln()).abs() < 1e-9);
    }

    #[test]
    fn sem_is_population_std_over_sqrt_n(v in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let (m, s) = mean_and_sem(&v);
        prop_assert!((m - mean).abs() < 1e-12);
        prop_assert!((s - (var / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scaled_model_scales_params(seed in any::<u64>(), beta in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let topo = random_topology(&mut r, 5, 0.5);
        let model = random_model(&mut r, topo, 2.0);
        let scaled: PairwiseModel = model.scaled(beta);
        for (s, p) in scaled.params().iter().zip(model.params().iter()) {
            prop_assert!((s - beta * p).abs() < 1e-15);
        }
    }
}
