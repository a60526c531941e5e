use pboot::engine::{partition, tree_reduce, Engine, ExecutionMode, Launcher, LocalResults, RunRequest};
use pboot::estimates::{bias, percentile_ci, standard_error};
use pboot::plan::{frequencies_to_weights, indices_to_frequencies};
use pboot::statistic::PreparedStatistic;
use pboot::{Dataset, ReplicateMatrix, ResamplePlan, RngConfig, SampleView, StatisticSpec, Stype};
use proptest::prelude::*;

fn dataset(xs: Vec<(f64, f64)>) -> Dataset {
    let (x, u): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
    Dataset::new([("x", x), ("u", u)]).unwrap()
}

fn sample() -> impl Strategy<Value = Dataset> {
    prop::collection::vec((-1e3..1e3f64, 0.5..100.0f64), 1..40).prop_map(dataset)
}

fn statistic() -> impl Strategy<Value = StatisticSpec> {
    prop_oneof![
        Just(StatisticSpec::mean()),
        Just(StatisticSpec::median()),
        Just(StatisticSpec::sd()),
        Just(StatisticSpec::ratio("x", "u")),
        Just(StatisticSpec::per_column(pboot::Summary::Mean, ["x", "u"])),
    ]
}

fn stype_for(spec: &StatisticSpec, pick: usize) -> Stype {
    let allowed: Vec<Stype> = Stype::ALL.into_iter().filter(|&s| spec.accepts(s)).collect();
    allowed[pick % allowed.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parallel_modes_reproduce_serial(
        data in sample(),
        spec in statistic(),
        resamples in 1usize..60,
        seed in any::<u64>(),
        k in 1usize..10,
        pick in 0usize..3,
    ) {
        let stype = stype_for(&spec, pick);
        let mut engine = Engine::default().with_launcher(Launcher::InProcess);
        let mut run = |mode| engine.run(&data, &spec, &RunRequest::new(resamples, stype, seed, mode));
        let serial = run(ExecutionMode::Serial);
        for mode in [ExecutionMode::Threaded(k), ExecutionMode::MultiProcess(k)] {
            let (ok, detail) = pboot::verify::compare(&serial, &run(mode));
            prop_assert!(ok, "{mode}: {detail}");
        }
    }

    #[test]
    fn tree_reduce_matches_linear_fold(
        resamples in 0usize..300,
        k in 1usize..65,
        p in 1usize..4,
        seed in any::<u64>(),
        shuffle in any::<u64>(),
    ) {
        let mut rng = pboot::rng::CounterRng::new(seed);
        let mut locals: Vec<LocalResults> = partition(resamples, k)
            .into_iter()
            .map(|b| LocalResults {
                rank: b.rank,
                start: b.start,
                p,
                values: (0..b.len * p).map(|_| rng.next_word() as f64).collect(),
            })
            .collect();
        let mut expected = Vec::new();
        for local in &locals {
            expected.extend_from_slice(&local.values);
        }
        // Arrival order must not matter.
        let mut order = pboot::rng::CounterRng::new(shuffle);
        for i in (1..locals.len()).rev() {
            locals.swap(i, order.below(i as u64 + 1) as usize);
        }
        let merged = tree_reduce(locals, k).unwrap();
        prop_assert_eq!(merged.rows(), resamples);
        prop_assert_eq!(merged.as_flat(), &expected[..]);
    }

    #[test]
    fn plan_invariants(n in 1usize..200, resamples in 1usize..40, seed in any::<u64>()) {
        let plan = ResamplePlan::generate(n, resamples, RngConfig::new(seed)).unwrap();
        prop_assert_eq!(plan.as_flat().len(), n * resamples);
        for row in plan.rows() {
            prop_assert!(row.iter().all(|&i| (i as usize) < n));
            let freq = indices_to_frequencies(row, n).unwrap();
            prop_assert_eq!(freq.iter().sum::<u64>(), n as u64);
            let w = frequencies_to_weights(&freq).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(&plan, &ResamplePlan::generate(n, resamples, RngConfig::new(seed)).unwrap());
    }

    #[test]
    fn plan_prefix_is_stable(n in 1usize..50, resamples in 1usize..30, extra in 1usize..10, seed in any::<u64>()) {
        let short = ResamplePlan::generate(n, resamples, RngConfig::new(seed)).unwrap();
        let long = ResamplePlan::generate(n, resamples + extra, RngConfig::new(seed)).unwrap();
        prop_assert_eq!(short.as_flat(), &long.as_flat()[..n * resamples]);
    }

    #[test]
    fn identity_view_gives_t0(data in sample(), spec in statistic(), pick in 0usize..3) {
        let stype = stype_for(&spec, pick);
        let stat = PreparedStatistic::new(&spec, &data).unwrap();
        let t0 = stat.t0(stype).unwrap();
        prop_assert_eq!(stat.eval(&SampleView::identity(stype, data.n())).unwrap(), t0);
    }

    #[test]
    fn mean_agrees_across_views(data in sample(), seed in any::<u64>()) {
        let n = data.n();
        let plan = ResamplePlan::generate(n, 1, RngConfig::new(seed)).unwrap();
        let spec = StatisticSpec::mean();
        let stat = PreparedStatistic::new(&spec, &data).unwrap();
        let values: Vec<f64> = Stype::ALL
            .into_iter()
            .map(|s| stat.eval(&SampleView::from_row(plan.row(0), n, s).unwrap()).unwrap()[0])
            .collect();
        let scale = values[0].abs().max(1.0);
        for v in &values[1..] {
            prop_assert!((v - values[0]).abs() <= 1e-9 * scale, "{values:?}");
        }
    }

    #[test]
    fn estimates_shift_equivariant(
        t in prop::collection::vec(-100.0..100.0f64, 40..120),
        t0 in -100.0..100.0f64,
        c in -50.0..50.0f64,
    ) {
        let m = ReplicateMatrix::new(t.len(), 1, t.clone()).unwrap();
        let shifted = ReplicateMatrix::new(t.len(), 1, t.iter().map(|v| v + c).collect()).unwrap();
        let b = bias(&[t0], &m).unwrap()[0];
        let bs = bias(&[t0 + c], &shifted).unwrap()[0];
        prop_assert!((b - bs).abs() < 1e-9);
        let se = standard_error(&m).unwrap()[0];
        let ses = standard_error(&shifted).unwrap()[0];
        prop_assert!((se - ses).abs() < 1e-9);
        let (lo, hi) = percentile_ci(&m, 0.05).unwrap()[0];
        let (los, his) = percentile_ci(&shifted, 0.05).unwrap()[0];
        prop_assert!((lo + c - los).abs() < 1e-9 && (hi + c - his).abs() < 1e-9);
        prop_assert!(lo <= hi);
    }

    #[test]
    fn estimates_scale_equivariant(
        t in prop::collection::vec(-100.0..100.0f64, 40..120),
        a in 0.1..10.0f64,
    ) {
        let m = ReplicateMatrix::new(t.len(), 1, t.clone()).unwrap();
        let scaled = ReplicateMatrix::new(t.len(), 1, t.iter().map(|v| v * a).collect()).unwrap();
        let se = standard_error(&m).unwrap()[0];
        let ses = standard_error(&scaled).unwrap()[0];
        prop_assert!((se * a - ses).abs() <= 1e-9 * ses.max(1.0));
    }
}
