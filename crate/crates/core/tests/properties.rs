use aefall::baselines::OcnnModel;
use aefall::data::{
    read_csv, slide_windows, write_csv, Class, CsvSchema, LabelRule, Sample, Scaler, SensorRecording, View, Window,
    WindowConfig,
};
use aefall::ensemble::majority_vote;
use aefall::metrics::{gmean, ConfusionCounts};
use aefall::nn::{AeModel, Arch};
use aefall::selection::{assign_folds, stratified_folds};
use aefall::synth::label_map;
use aefall::threshold::{iqr_outlier_mask, max_re, quartiles, rre, std_re};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn errors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, 1..60)
}

fn recording(rows: usize, seed: u64) -> SensorRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::Rng;
    SensorRecording {
        subject_id: "s".into(),
        sample_rate_hz: 10.0,
        samples: (0..rows)
            .map(|i| {
                let fall = rng.random_bool(0.3);
                Sample {
                    t: i as f64 / 10.0,
                    activity: if fall { "fall" } else { "walking" }.into(),
                    class: if fall { Class::Fall } else { Class::Normal },
                    values: std::array::from_fn(|_| rng.random_range(-4.0..4.0)),
                }
            })
            .collect(),
    }
}

fn raw_window(channels: Vec<Vec<f64>>) -> Window {
    Window {
        subject_id: "s".into(),
        label: Class::Normal,
        view: View::SixRaw,
        channels,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ae_output_is_sigmoid_and_error_nonnegative(
        d in 2usize..20,
        p in 1usize..8,
        seed in any::<u64>(),
        x in prop::collection::vec(-3.0f64..3.0, 20),
    ) {
        let model = AeModel::for_arch(Arch::Ae, d, p, seed).unwrap();
        prop_assert_eq!(model.dims(), vec![d, p, d]);
        let y = model.reconstruct(&x[..d]).unwrap();
        prop_assert_eq!(y.len(), d);
        prop_assert!(y.iter().all(|v| *v > 0.0 && *v < 1.0));
        prop_assert!(model.reconstruction_error(&x[..d]).unwrap() >= 0.0);
    }

    #[test]
    fn stacked_ae_has_halved_hidden_layers(d in 4usize..40, p in 1usize..4) {
        let model = AeModel::for_arch(Arch::Sae, d, p, 1).unwrap();
        prop_assert_eq!(model.dims(), vec![d, d / 2, p, d / 2, d]);
    }

    #[test]
    fn window_count_matches_enumeration(
        rows in 0usize..120,
        seconds in 0.2f64..3.0,
        overlap in 0.0f64..0.95,
        seed in any::<u64>(),
    ) {
        let rec = recording(rows, seed);
        let cfg = WindowConfig { window_seconds: seconds, overlap, label_rule: LabelRule::Majority };
        let len = cfg.window_len(rec.sample_rate_hz).unwrap();
        let stride = cfg.stride(len);
        let expected = (0..).map(|k| k * stride).take_while(|s| s + len <= rows).count();
        let windows = slide_windows(&rec, &cfg).unwrap();
        prop_assert_eq!(windows.len(), expected);
        for (k, w) in windows.iter().enumerate() {
            let slice = &rec.samples[k * stride..k * stride + len];
            let falls = slice.iter().filter(|s| s.class.is_fall()).count();
            prop_assert_eq!(w.label.is_fall(), 2 * falls > len);
            prop_assert_eq!(w.channels[3][0], slice[0].values[3]);
        }
    }

    #[test]
    fn any_rule_flags_a_superset(rows in 10usize..80, seed in any::<u64>()) {
        let rec = recording(rows, seed);
        let maj = slide_windows(&rec, &WindowConfig { window_seconds: 0.8, ..WindowConfig::default() }).unwrap();
        let any = slide_windows(&rec, &WindowConfig { window_seconds: 0.8, label_rule: LabelRule::Any, ..WindowConfig::default() }).unwrap();
        for (m, a) in maj.iter().zip(&any) {
            prop_assert!(!m.label.is_fall() || a.label.is_fall());
        }
    }

    #[test]
    fn monolithic_concatenates_channels(n in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let chans: Vec<Vec<f64>> = (0..6).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let w = raw_window(chans.clone()).monolithic().unwrap();
        prop_assert_eq!(w.channels.len(), 1);
        prop_assert_eq!(w.len(), 6 * n);
        for k in 0..6 {
            for i in 0..n {
                prop_assert_eq!(w.channels[0][k * n + i], chans[k][i]);
            }
        }
    }

    #[test]
    fn magnitudes_ignore_sign_and_axis_order(
        n in 1usize..15,
        seed in any::<u64>(),
        signs in prop::collection::vec(any::<bool>(), 6),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let chans: Vec<Vec<f64>> = (0..6).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let flipped: Vec<Vec<f64>> = (0..6)
            .map(|c| {
                let src = if c < 3 { perm[c] } else { 3 + perm[c - 3] };
                let s = if signs[c] { -1.0 } else { 1.0 };
                chans[src].iter().map(|v| s * v).collect()
            })
            .collect();
        let a = raw_window(chans).magnitudes().unwrap();
        let b = raw_window(flipped).magnitudes().unwrap();
        for c in 0..2 {
            for i in 0..n {
                prop_assert!((a.channels[c][i] - b.channels[c][i]).abs() < 1e-12);
                prop_assert!(a.channels[c][i] >= 0.0);
            }
        }
    }

    #[test]
    fn scaler_maps_training_extremes_exactly(
        data in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 2..20),
        probe in prop::collection::vec(-200.0f64..200.0, 4),
    ) {
        let s = Scaler::fit(&data).unwrap();
        prop_assert!(s.apply(&probe).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..4 {
            if s.max[i] > s.min[i] {
                let lo = data.iter().find(|x| x[i] == s.min[i]).unwrap();
                let hi = data.iter().find(|x| x[i] == s.max[i]).unwrap();
                prop_assert_eq!(s.apply(lo).unwrap()[i], 0.0);
                prop_assert_eq!(s.apply(hi).unwrap()[i], 1.0);
            }
        }
    }

    #[test]
    fn csv_round_trips(rows in 1usize..40, seed in any::<u64>()) {
        let rec = recording(rows, seed);
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&rec), &mut buf).unwrap();
        let schema = CsvSchema { labels: label_map(), sample_rate_hz: 10.0 };
        let back = read_csv(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back, vec![rec]);
    }

    #[test]
    fn rre_is_bounded_by_max_and_monotone(e in errors(), a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let max = max_re(&e).unwrap().value;
        let r_lo = rre(&e, lo).unwrap().value;
        let r_hi = rre(&e, hi).unwrap().value;
        prop_assert!(r_hi <= max);
        prop_assert!(r_lo <= r_hi);
        prop_assert_eq!(rre(&e, 1e6).unwrap().value, max);
    }

    #[test]
    fn rre_is_the_largest_inlier(e in errors(), omega in 0.0f64..4.0) {
        let mask = iqr_outlier_mask(&e, omega).unwrap();
        let kept = e.iter().zip(&mask).filter(|(_, out)| !**out).map(|(p, _)| *p).fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
        if let Some(k) = kept {
            prop_assert_eq!(rre(&e, omega).unwrap().value, k);
        }
    }

    #[test]
    fn std_re_is_at_least_the_mean(e in errors()) {
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        prop_assert!(std_re(&e).unwrap().value >= mean - 1e-9);
    }

    #[test]
    fn quartiles_are_ordered_within_range(e in errors()) {
        let (q1, q3) = quartiles(&e).unwrap();
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= q1 && q1 <= q3 && q3 <= max);
    }

    #[test]
    fn vote_is_fall_iff_not_outvoted(verdicts in prop::collection::vec(any::<bool>(), 1..12)) {
        let classes: Vec<Class> = verdicts.iter().map(|f| if *f { Class::Fall } else { Class::Normal }).collect();
        let falls = verdicts.iter().filter(|f| **f).count();
        prop_assert_eq!(majority_vote(&classes).unwrap().is_fall(), falls >= verdicts.len() - falls);
    }

    #[test]
    fn gmean_is_bounded_and_matches_rates(tp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500, fp in 0u64..500) {
        prop_assume!(tp + fn_ > 0 && tn + fp > 0);
        let m = gmean(&ConfusionCounts { tp, fp, tn, fn_ }).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.gmean));
        prop_assert!((m.gmean * m.gmean - m.tpr * (1.0 - m.fpr)).abs() < 1e-12);
        prop_assert!(m.gmean <= m.tpr.max(m.tnr) + 1e-12);
    }

    #[test]
    fn folds_are_balanced(n in 0usize..200, k in 1usize..8, seed in any::<u64>()) {
        let folds = assign_folds(n, k, &mut ChaCha8Rng::seed_from_u64(seed));
        let sizes: Vec<usize> = (0..k).map(|f| folds.iter().filter(|x| **x == f).count()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let (a, b) = stratified_folds(n, n / 3, k, seed);
        prop_assert_eq!((a.len(), b.len()), (n, n / 3));
        prop_assert_eq!(stratified_folds(n, n / 3, k, seed), (a, b));
    }

    #[test]
    fn ocnn_accepts_its_training_points(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
        ratio in 0.1f64..3.0,
    ) {
        let model = OcnnModel::fit(pts.clone(), ratio).unwrap();
        for p in &pts {
            prop_assert_eq!(model.classify(p).unwrap(), Class::Normal);
        }
        let far = vec![1e6; 3];
        prop_assert_eq!(model.classify(&far).unwrap(), Class::Fall);
    }
}
