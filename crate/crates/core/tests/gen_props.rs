use flexstep_core::gen::{generate_taskset, rng_from_seed, uunifast, uunifast_discard, GenConfig, MAX_REDRAWS};
use flexstep_core::model::TaskClass;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn uunifast_sums_to_target(n in 1usize..200, util in 0.001f64..50.0, seed in any::<u64>()) {
        let u = uunifast(n, util, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(u.len(), n);
        prop_assert!(u.iter().all(|&x| x > 0.0));
        let sum: f64 = u.iter().sum();
        prop_assert!((sum - util).abs() <= 1e-9 * util.max(1.0));
    }

    #[test]
    fn discard_variant_caps_each_share(n in 2usize..100, frac in 0.01f64..0.5, seed in any::<u64>()) {
        let util = frac * n as f64 * 0.5;
        if let Ok(u) = uunifast_discard(n, util, &mut rng_from_seed(seed), MAX_REDRAWS) {
            prop_assert!(u.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn class_counts_and_period_range(n in 8usize..120, seed in any::<u64>()) {
        let cfg = GenConfig::new(n, 8, n as f64 * 0.05, 0.125, 0.25, seed);
        let ts = generate_taskset(&cfg).unwrap();
        prop_assert_eq!(ts.count_class(TaskClass::DoubleCheck), (0.125 * n as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(ts.count_class(TaskClass::TripleCheck), (0.25 * n as f64 + 1e-9).floor() as usize);
        for t in &ts.tasks {
            prop_assert!(t.period >= 10.0 && t.period <= 1000.0);
            prop_assert!(t.wcet > 0.0 && t.wcet <= t.period);
        }
        prop_assert_eq!(generate_taskset(&cfg).unwrap(), ts);
    }
}
