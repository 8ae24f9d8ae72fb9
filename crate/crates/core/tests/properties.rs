//! Property tests for the invariants of each module.

use proptest::prelude::*;

use clxabsa::analysis::{calinski_harabasz, micro_f1, pca_2d, SentenceSpans, SpaceSample};
use clxabsa::corpus::{build_code_switched, load_corpus, merge, save_corpus, ParallelPair, SwitchDirection};
use clxabsa::distillation::fuse_teachers;
use clxabsa::model::{predict_tags, softmax, ProbDist, Vocab};
use clxabsa::objectives::{contrastive_loss, ContrastiveBatch};
use clxabsa::synthetic::{SyntheticConfig, SyntheticCorpus};
use clxabsa::tagging::{encode_spans, LabelTag, NUM_TAGS};
use clxabsa::trainer::train;
use clxabsa::{
    AnnotatedSentence, ContrastiveConfig, ContrastiveLevel, Dataset, DatasetRole, EncoderConfig, LossLevel,
    Polarity, SpanAnnotation, Tagger, TrainConfig,
};

fn dist() -> impl Strategy<Value = ProbDist> {
    proptest::array::uniform13(-3.0f64..3.0).prop_map(|z| softmax(&z))
}

fn tag() -> impl Strategy<Value = LabelTag> {
    (0..NUM_TAGS).prop_map(|i| LabelTag::from_index(i).unwrap())
}

fn pool(max: usize) -> impl Strategy<Value = (Vec<ProbDist>, Vec<LabelTag>)> {
    (1..=max).prop_flat_map(|k| (proptest::collection::vec(dist(), k), proptest::collection::vec(tag(), k)))
}

fn spans_in(len: usize) -> impl Strategy<Value = Vec<SpanAnnotation>> {
    proptest::collection::vec((0..len, 1usize..=3, 0usize..3), 0..=3).prop_map(move |raw| {
        let mut spans: Vec<SpanAnnotation> = Vec::new();
        for (start, width, p) in raw {
            let cand = SpanAnnotation::new(start, (start + width - 1).min(len - 1), Polarity::ALL[p]);
            if spans.iter().all(|s| cand.end < s.start || cand.start > s.end) {
                spans.push(cand);
            }
        }
        spans.sort();
        spans
    })
}

fn points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
    (2usize..=4, 2usize..=3).prop_flat_map(|(d, k)| {
        proptest::collection::vec((proptest::collection::vec(-5.0f64..5.0, d), 0..k as u8), 8..30).prop_filter_map(
            "every cluster needs a point",
            move |rows| {
                let (p, l): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
                ((0..k as u8).all(|c| l.contains(&c))).then_some((p, l))
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contrastive_is_non_negative((probs, tags) in pool(8), sentiment in any::<bool>()) {
        let level = if sentiment { ContrastiveLevel::Sentiment } else { ContrastiveLevel::Token };
        let l = contrastive_loss(&ContrastiveBatch::from_tags(probs, &tags, level).unwrap(), &ContrastiveConfig::new(level)).unwrap();
        prop_assert!(l >= -1e-12, "loss {}", l);
    }

    #[test]
    fn contrastive_permutation_invariant((probs, tags) in pool(7), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cfg = ContrastiveConfig::new(ContrastiveLevel::Token);
        let a = contrastive_loss(&ContrastiveBatch::from_tags(probs.clone(), &tags, cfg.level).unwrap(), &cfg).unwrap();
        let p2: Vec<ProbDist> = order.iter().map(|&i| probs[i]).collect();
        let t2: Vec<LabelTag> = order.iter().map(|&i| tags[i]).collect();
        let b = contrastive_loss(&ContrastiveBatch::from_tags(p2, &t2, cfg.level).unwrap(), &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn levels_coincide_on_o_and_single_tags(
        probs in proptest::collection::vec(dist(), 2..8),
        which in proptest::collection::vec(0usize..4, 8),
    ) {
        // O, S-POS, S-NEU, S-NEG
        let choices = [LabelTag::O, "S-POS".parse().unwrap(), "S-NEU".parse().unwrap(), "S-NEG".parse().unwrap()];
        let tags: Vec<LabelTag> = probs.iter().zip(&which).map(|(_, &w)| choices[w]).collect();
        let token = ContrastiveConfig::new(ContrastiveLevel::Token);
        let sent = ContrastiveConfig::new(ContrastiveLevel::Sentiment);
        let a = contrastive_loss(&ContrastiveBatch::from_tags(probs.clone(), &tags, token.level).unwrap(), &token).unwrap();
        let b = contrastive_loss(&ContrastiveBatch::from_tags(probs, &tags, sent.level).unwrap(), &sent).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn fusion_stays_on_simplex(rows in proptest::collection::vec(dist(), 3), raw in proptest::array::uniform3(0.0f64..1.0)) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        let weights: Vec<f64> = raw.iter().map(|w| (w + 1e-9 / 3.0) / total).collect();
        let fused = fuse_teachers(&[vec![rows[0]], vec![rows[1]], vec![rows[2]]], &weights).unwrap();
        prop_assert!(fused[0].iter().all(|v| *v >= 0.0));
        prop_assert!((fused[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_permutation_equivariant(rows in proptest::collection::vec(dist(), 3), raw in proptest::array::uniform3(0.01f64..1.0)) {
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let a = fuse_teachers(&[vec![rows[0]], vec![rows[1]], vec![rows[2]]], &w).unwrap();
        let b = fuse_teachers(&[vec![rows[2]], vec![rows[0]], vec![rows[1]]], &[w[2], w[0], w[1]]).unwrap();
        for k in 0..NUM_TAGS {
            prop_assert!((a[0][k] - b[0][k]).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariant(z in proptest::array::uniform13(-20.0f64..20.0), c in -50.0f64..50.0) {
        let shifted: ProbDist = std::array::from_fn(|k| z[k] + c);
        let (a, b) = (softmax(&z), softmax(&shifted));
        for k in 0..NUM_TAGS {
            prop_assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_invariant_to_monotone_logit_maps(z in proptest::array::uniform13(-3.0f64..3.0)) {
        let cube: ProbDist = std::array::from_fn(|k| z[k].powi(3) + 2.0 * z[k]);
        let a = predict_tags(&[vec![softmax(&z)]], &[vec![true]]);
        let b = predict_tags(&[vec![softmax(&cube)]], &[vec![true]]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn micro_f1_bounds_and_monotonicity(gold in spans_in(12), extra in spans_in(12)) {
        let s = |spans: Vec<SpanAnnotation>| vec![SentenceSpans { id: "x".into(), language: "en".into(), spans }];
        let base = micro_f1(&s(gold.clone()), &s(gold.clone())).unwrap();
        prop_assert!((0.0..=1.0).contains(&base.micro_f1));
        // Spurious predictions never raise precision.
        let mut noisy = gold.clone();
        noisy.extend(extra.iter().filter(|e| !gold.contains(e)));
        let with_noise = micro_f1(&s(noisy), &s(gold.clone())).unwrap();
        prop_assert!(with_noise.precision <= base.precision);
        prop_assert!((0.0..=1.0).contains(&with_noise.micro_f1));
        // Dropping a matched span never raises recall.
        if !gold.is_empty() {
            let fewer = micro_f1(&s(gold[1..].to_vec()), &s(gold.clone())).unwrap();
            prop_assert!(fewer.recall <= base.recall);
        }
    }

    #[test]
    fn ch_grows_when_clusters_contract((p, l) in points(), factor in 0.1f64..0.9) {
        let before = calinski_harabasz(&p, &l).unwrap();
        prop_assume!(before.degenerate.is_none());
        let d = p[0].len();
        let mut contracted = p.clone();
        for c in 0..=*l.iter().max().unwrap() {
            let idx: Vec<usize> = (0..p.len()).filter(|&i| l[i] == c).collect();
            let mean: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| p[i][j]).sum::<f64>() / idx.len() as f64).collect();
            for &i in &idx {
                for j in 0..d {
                    contracted[i][j] = mean[j] + factor * (p[i][j] - mean[j]);
                }
            }
        }
        let after = calinski_harabasz(&contracted, &l).unwrap();
        prop_assert!(after.value > before.value);
    }

    #[test]
    fn pca_variances_invariant_under_orthogonal_maps((p, _) in points(), angle in 0.0f64..6.28) {
        let sample = |rows: &[Vec<f64>]| -> Vec<SpaceSample> {
            rows.iter().enumerate().map(|(i, r)| SpaceSample { id: i.to_string(), language: "x".into(), representation: r.clone() }).collect()
        };
        // Rotation in the plane of the first two coordinates.
        let (c, s) = (angle.cos(), angle.sin());
        let rotated: Vec<Vec<f64>> = p.iter().map(|r| {
            let mut r2 = r.clone();
            r2[0] = c * r[0] - s * r[1];
            r2[1] = s * r[0] + c * r[1];
            r2
        }).collect();
        let a = pca_2d(&sample(&p)).unwrap();
        let b = pca_2d(&sample(&rotated)).unwrap();
        for k in 0..2 {
            prop_assert!((a.variances[k] - b.variances[k]).abs() <= 1e-9 * (1.0 + a.variances[k]));
        }
        // Coordinates agree up to the sign of each axis.
        let dx: f64 = a.points.iter().zip(&b.points).map(|(u, v)| (u.x.abs() - v.x.abs()).abs()).fold(0.0, f64::max);
        prop_assume!(a.variances[0] - a.variances[1] > 1e-3 * a.variances[0]);
        prop_assert!(dx < 1e-6, "max |x| difference {}", dx);
    }

    #[test]
    fn code_switch_preserves_context_and_sentiments(
        (slen, tlen) in (3usize..10, 3usize..10),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=2usize.min(slen / 2).min(tlen / 2));
        // n single-token spans at even positions in both sentences.
        let pols: Vec<Polarity> = (0..n).map(|_| Polarity::ALL[rng.random_range(0..3)]).collect();
        let s_spans: Vec<SpanAnnotation> = (0..n).map(|i| SpanAnnotation::new(2 * i, 2 * i, pols[i])).collect();
        let t_spans: Vec<SpanAnnotation> = (0..n).map(|i| SpanAnnotation::new(2 * i + 1, 2 * i + 1, pols[i])).collect();
        let words = |p: &str, len: usize| (0..len).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let source = AnnotatedSentence::from_spans("s", "en", words("e", slen), &s_spans).unwrap();
        let target = AnnotatedSentence::from_spans("t", "fr", words("f", tlen), &t_spans).unwrap();
        let pair = ParallelPair { source: source.clone(), target: target.clone(), alignment: (0..n).map(|i| (i, i)).collect() };
        let (ds, report) = build_code_switched(std::slice::from_ref(&pair), SwitchDirection::SourceToTarget).unwrap();
        prop_assert_eq!(report.written, 1);
        let out = &ds.sentences[0];
        let spans = out.spans();
        let sentiments = |v: &[SpanAnnotation]| { let mut s: Vec<_> = v.iter().map(|x| x.sentiment).collect(); s.sort(); s };
        prop_assert_eq!(sentiments(&spans), sentiments(&s_spans));
        for (sp, tsp) in spans.iter().zip(&t_spans) {
            prop_assert_eq!(&out.tokens[sp.start..=sp.end], &target.tokens[tsp.start..=tsp.end]);
        }
        let non_span = |s: &AnnotatedSentence| {
            let sp = s.spans();
            s.tokens.iter().enumerate().filter(|(i, _)| !sp.iter().any(|x| x.start <= *i && *i <= x.end)).map(|(_, t)| t.clone()).collect::<Vec<_>>()
        };
        prop_assert_eq!(non_span(out), non_span(&source));
    }
}

#[test]
fn corpus_save_load_round_trips_bytes() {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig { train_size: 30, ..SyntheticConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (ds, role) in [(&corpus.source, DatasetRole::Source), (&corpus.unlabeled, DatasetRole::Unlabeled)] {
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        save_corpus(ds, &a).unwrap();
        let loaded = load_corpus(&a, role).unwrap();
        save_corpus(&loaded, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(&loaded.sentences, &ds.sentences);
    }
}

#[test]
fn merge_keeps_every_sentence() {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig { train_size: 25, ..SyntheticConfig::default() }).unwrap();
    let m = merge(&[&corpus.source, &corpus.translated, &corpus.code_switched_st], 3).unwrap();
    assert_eq!(m.len(), corpus.source.len() + corpus.translated.len() + corpus.code_switched_st.len());
}

fn small_setup() -> (SyntheticCorpus, Tagger) {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig { train_size: 60, dev_size: 30, ..SyntheticConfig::default() }).unwrap();
    let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
    (corpus, Tagger::new(EncoderConfig::default(), vocab))
}

#[test]
fn alpha_zero_matches_pure_cross_entropy() {
    let (corpus, model) = small_setup();
    let base = TrainConfig { learning_rate: 3e-3, max_steps: 20, eval_interval: 10, selection_window: 10, ..TrainConfig::default() };
    let (_, ce_log) = train(model.clone(), &corpus.source, &corpus.source_dev, &base).unwrap();
    let zero = TrainConfig { level: LossLevel::Token, alpha: 0.0, ..base };
    let (_, cl_log) = train(model, &corpus.source, &corpus.source_dev, &zero).unwrap();
    assert_eq!(ce_log.losses(), cl_log.losses());
}

#[test]
fn selected_checkpoint_is_best_in_window() {
    let (corpus, model) = small_setup();
    let cfg = TrainConfig { learning_rate: 3e-3, max_steps: 60, eval_interval: 5, selection_window: 30, ..TrainConfig::default() };
    let (_, log) = train(model, &corpus.source, &corpus.source_dev, &cfg).unwrap();
    let (step, f1) = log.selected().unwrap();
    let window: Vec<(usize, f64)> = log.evals().into_iter().filter(|(s, _)| *s >= cfg.window_start()).collect();
    assert!(!window.is_empty());
    assert!(step >= cfg.window_start());
    assert!(window.iter().all(|(_, other)| f1 >= *other));
}

#[test]
fn encoder_has_no_cross_sentence_leakage() {
    let (corpus, model) = small_setup();
    let sents: Vec<&[String]> = corpus.source.iter().take(5).map(|s| s.tokens.as_slice()).collect();
    let reversed: Vec<&[String]> = sents.iter().rev().copied().collect();
    let a = model.forward(&sents).unwrap();
    let b = model.forward(&reversed).unwrap();
    for i in 0..sents.len() {
        assert_eq!(a.probs[i], b.probs[sents.len() - 1 - i]);
    }
}

#[test]
fn encoded_tags_are_well_formed_for_dataset_sentences() {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig { train_size: 50, ..SyntheticConfig::default() }).unwrap();
    for ds in [&corpus.source, &corpus.translated, &corpus.code_switched_st, &corpus.code_switched_ts] {
        for s in ds.iter() {
            assert_eq!(encode_spans(s.len(), &s.spans()).unwrap(), *s.tags.as_ref().unwrap());
        }
    }
    let _ = Dataset::new(Vec::new(), DatasetRole::Source).unwrap();
}
