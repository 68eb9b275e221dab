use chrono::NaiveDate;
use proptest::collection::vec;
use proptest::prelude::*;

use fairtrust::bias::{inject_framing, inject_label_drift, inject_subject_skew, make_counterfactual, Lexicon};
use fairtrust::drift::histogram::{build_histogram, jsd, psi, PROPORTION_FLOOR};
use fairtrust::drift::{drift_score, DriftNormalizer, MetricSample, ScoreFloors, ScoreWeights};
use fairtrust::ingest::features::{protected_column, Featurizer};
use fairtrust::ingest::{clean_normalize, partition_batches, DropCounts, Record, RecordSet};
use fairtrust::reward::{ProbOutput, RewardModel, Tree};
use fairtrust::trust::{ema_smooth, trust_score, TrustComponents, TrustWeights};

const SUBJECTS: [&str; 3] = ["politics", "sports", "world"];
const WORDS: [&str; 8] = ["Senate", "good", "win", "rise", "the", "Hoax!", "data", "  market"];

fn record_strategy() -> impl Strategy<Value = Record> {
    (
        0usize..10_000,
        vec(0usize..WORDS.len(), 0..6),
        0usize..SUBJECTS.len(),
        0u8..2,
        0i64..700,
        0u8..2,
    )
        .prop_map(|(id, words, subject, protected, day, label)| Record {
            id: format!("r{id}"),
            title: words.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" "),
            subject: SUBJECTS[subject].to_string(),
            source: if id % 2 == 0 { "wire" } else { "blog" }.to_string(),
            protected,
            date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + chrono::Duration::days(day),
            label,
        })
}

fn batch_strategy(max: usize) -> impl Strategy<Value = Vec<Record>> {
    vec(record_strategy(), 1..max).prop_map(|mut rs| {
        for (i, r) in rs.iter_mut().enumerate() {
            r.id = format!("r{i}");
        }
        rs
    })
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn components() -> impl Strategy<Value = [f64; 5]> {
    [unit(), unit(), unit(), unit(), unit()]
}

fn weights() -> impl Strategy<Value = TrustWeights> {
    [0.0..1.0f64, 0.0..1.0, 0.0..1.0, 0.0..1.0, 0.01..1.0].prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        let w = raw.map(|x| x / sum);
        TrustWeights {
            alpha: w[0],
            beta: w[1],
            gamma: w[2],
            delta: w[3],
            zeta: 1.0 - w[0] - w[1] - w[2] - w[3],
        }
    })
}

fn comps(a: [f64; 5]) -> TrustComponents {
    TrustComponents {
        drift: a[0],
        uncertainty: a[1],
        fairness: a[2],
        error: a[3],
        consistency: a[4],
    }
}

fn sample(a: [f64; 4]) -> MetricSample {
    MetricSample {
        psi: a[0],
        jsd: a[1],
        ae_delta: a[2],
        tae_loss: a[3],
    }
}

fn metrics() -> impl Strategy<Value = [f64; 4]> {
    [0.0..2.0f64, 0.0..0.7, -0.5..0.5, 0.0..2.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn histogram_proportions_are_floored_and_normalized(values in vec(-50.0..50.0f64, 1..200)) {
        let h = build_histogram(&values, None).unwrap();
        prop_assert_eq!(h.proportions.len() + 1, h.bin_edges.len());
        prop_assert!(h.proportions.iter().all(|&p| p >= PROPORTION_FLOOR * 0.999));
        prop_assert!((h.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psi_is_nonnegative_and_zero_on_itself(
        reference in vec(-10.0..10.0f64, 5..150),
        actual in vec(-12.0..12.0f64, 1..150),
    ) {
        let expected = build_histogram(&reference, None).unwrap();
        let observed = build_histogram(&actual, Some(&expected.bin_edges)).unwrap();
        prop_assert!(psi(&expected, &observed).unwrap() >= 0.0);
        prop_assert_eq!(psi(&expected, &expected).unwrap(), 0.0);
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(
        reference in vec(-10.0..10.0f64, 5..150),
        actual in vec(-12.0..12.0f64, 1..150),
    ) {
        let p = build_histogram(&reference, None).unwrap();
        let q = build_histogram(&actual, Some(&p.bin_edges)).unwrap();
        let pq = jsd(&p, &q).unwrap();
        let qp = jsd(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-9).contains(&pq));
        prop_assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn drift_score_is_monotone_in_each_metric(
        clean in vec(metrics(), 1..6),
        base in metrics(),
        which in 0usize..4,
        bump in 0.0..3.0f64,
    ) {
        let clean: Vec<MetricSample> = clean.into_iter().map(sample).collect();
        let normalizer = DriftNormalizer::fit(&clean, &ScoreFloors::default(), 0.5).unwrap();
        let weights = ScoreWeights::default();
        let mut raised = base;
        raised[which] += bump;
        let lo = drift_score(&sample(base), &normalizer, &weights).unwrap();
        let hi = drift_score(&sample(raised), &normalizer, &weights).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(hi >= lo, "raising metric {which} lowered D from {lo} to {hi}");
    }

    #[test]
    fn trust_never_rises_with_a_component(
        base in components(),
        w in weights(),
        which in 0usize..5,
        to in unit(),
    ) {
        let mut raised = base;
        raised[which] = raised[which].max(to);
        let t0 = trust_score(&comps(base), &w).unwrap();
        let t1 = trust_score(&comps(raised), &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&t0));
        prop_assert!(t1 <= t0 + 1e-15);
    }

    #[test]
    fn trust_with_zero_zeta_is_the_four_term_score(
        base in components(),
        raw in [0.0..1.0f64, 0.0..1.0, 0.0..1.0, 0.01..1.0],
    ) {
        let sum: f64 = raw.iter().sum();
        let w = TrustWeights {
            alpha: raw[0] / sum,
            beta: raw[1] / sum,
            gamma: raw[2] / sum,
            delta: 1.0 - (raw[0] + raw[1] + raw[2]) / sum,
            zeta: 0.0,
        };
        let four = 1.0 - (w.alpha * base[0] + w.beta * base[1] + w.gamma * base[2] + w.delta * base[3]);
        prop_assert!((trust_score(&comps(base), &w).unwrap() - four.clamp(0.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ema_stays_within_the_prefix_range(values in vec(unit(), 1..40), lambda in 0.001..=1.0f64) {
        let smoothed = ema_smooth(&values, lambda).unwrap();
        prop_assert_eq!(smoothed.len(), values.len());
        prop_assert_eq!(smoothed[0], values[0]);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, s) in values.iter().zip(&smoothed) {
            lo = lo.min(*v);
            hi = hi.max(*v);
            prop_assert!(*s >= lo - 1e-12 && *s <= hi + 1e-12);
        }
    }

    #[test]
    fn ema_fixes_constant_sequences(v in unit(), n in 1usize..30, lambda in 0.001..=1.0f64) {
        let smoothed = ema_smooth(&vec![v; n], lambda).unwrap();
        prop_assert!(smoothed.iter().all(|s| (s - v).abs() < 1e-15));
    }

    #[test]
    fn probabilities_sum_to_one(threshold in -2.0..2.0f64, left in -30.0..30.0f64, right in -30.0..30.0f64,
                                x in -5.0..5.0f64, temperature in 0.05..20.0f64) {
        let model = RewardModel {
            trees: vec![Tree::stump(0, threshold, left, right)],
            learning_rate: 0.3,
            temperature,
            n_features: 1,
            schema_hash: None,
        };
        let p: ProbOutput = model.predict_proba(&[x]).unwrap();
        prop_assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-9);
        prop_assert!(p.probs.iter().all(|q| (0.0..=1.0).contains(q)));
    }

    #[test]
    fn counterfactual_is_an_involution(r in record_strategy()) {
        let pair = make_counterfactual(&r).unwrap();
        prop_assert_eq!(&pair.original, &r);
        prop_assert_eq!(pair.flipped.protected, 1 - r.protected);
        let mut back = pair.flipped.clone();
        back.protected = r.protected;
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(make_counterfactual(&pair.flipped).unwrap().flipped, r);
    }

    #[test]
    fn counterfactual_rows_differ_only_at_the_protected_column(batch in batch_strategy(30)) {
        let dim = 32;
        let featurizer = Featurizer::fit(&batch, &batch, dim, 42).unwrap();
        for r in &batch {
            let a = featurizer.transform(r).to_row();
            let b = featurizer.transform(&make_counterfactual(r).unwrap().flipped).to_row();
            prop_assert_eq!(a.len(), featurizer.row_len());
            prop_assert!(a.iter().all(|v| v.is_finite()));
            for (j, (x, y)) in a.iter().zip(&b).enumerate() {
                if j == protected_column(dim) {
                    prop_assert_eq!(*x, 1.0 - *y);
                } else {
                    prop_assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn cleaning_is_idempotent(batch in batch_strategy(40)) {
        let once = clean_normalize(RecordSet { records: batch, dropped: DropCounts::default() });
        prop_assert!(once.records.iter().all(|r| !r.title.is_empty()));
        let twice = clean_normalize(once.clone());
        prop_assert_eq!(&twice.records, &once.records);
    }

    #[test]
    fn partition_covers_every_record_in_time_order(batch in batch_strategy(60), k in 2usize..8) {
        prop_assume!(k <= batch.len());
        let series = partition_batches(batch.clone(), k).unwrap();
        prop_assert_eq!(series.k(), k);
        let flat: Vec<&Record> = series.batches.iter().flatten().collect();
        prop_assert_eq!(flat.len(), batch.len());
        prop_assert!(flat.windows(2).all(|w| w[0].date <= w[1].date));
        let mut ids: Vec<&str> = flat.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), batch.len());
        let sizes: Vec<usize> = series.batches.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn framing_keeps_count_and_labels(batch in batch_strategy(40), rate in unit(), seed in any::<u64>()) {
        let lexicon = Lexicon::default();
        let out = inject_framing(&batch, &lexicon, rate, seed).unwrap();
        prop_assert_eq!(out.records.len(), batch.len());
        for (a, b) in batch.iter().zip(&out.records) {
            prop_assert_eq!(a.label, b.label);
            prop_assert_eq!(&a.id, &b.id);
        }
        prop_assert_eq!(inject_framing(&batch, &lexicon, rate, seed).unwrap(), out);
    }

    #[test]
    fn label_drift_keeps_count_and_titles(batch in batch_strategy(40), target in unit(), seed in any::<u64>()) {
        let out = inject_label_drift(&batch, target, seed).unwrap();
        prop_assert_eq!(out.records.len(), batch.len());
        for (a, b) in batch.iter().zip(&out.records) {
            prop_assert_eq!(&a.title, &b.title);
        }
        prop_assert_eq!(inject_label_drift(&batch, target, seed).unwrap(), out);
    }

    #[test]
    fn skew_keeps_the_originals(batch in batch_strategy(40), factor in 1.0..4.0f64, seed in any::<u64>()) {
        let members = batch.iter().filter(|r| r.subject == "politics").count();
        prop_assume!(members > 0);
        prop_assume!(members == batch.len() || factor * (members as f64) < batch.len() as f64);
        let out = inject_subject_skew(&batch, "politics", factor, seed).unwrap();
        prop_assert!(out.records.len() >= batch.len());
        for original in &batch {
            prop_assert!(out.records.contains(original));
        }
        prop_assert_eq!(inject_subject_skew(&batch, "politics", factor, seed).unwrap(), out);
    }
}
