use std::path::Path;

use mbrkit_core::audio::{measured_snr_db, mix_at_snr, snr_gain, AudioBuffer};
use mbrkit_core::data::{
    dedup_weight, format_hypothesis_sets, parse_hypothesis_sets, Hypothesis, HypothesisSet,
};
use mbrkit_core::harness::with_workers;
use mbrkit_core::metrics::{
    cosine_distance, edit_distance, pearson, sentence_bleu_str, BleuConfig,
};
use mbrkit_core::rerank::{map_select, weighted_select, WeightedScoreSpec};
use mbrkit_core::sampling::{
    beam_search, sample_sequence, sample_set, transform_distribution, SamplerConfig, SyntheticModel,
};
use mbrkit_core::textnorm::{basic, tokenize, Normalizer, NormalizerSpec, TokenUnit};
use mbrkit_core::{mbr_select, UtilityMatrix};
use proptest::prelude::*;

fn matrix(rows: &[Vec<f64>]) -> UtilityMatrix {
    UtilityMatrix::from_rows(rows.to_vec(), "p").unwrap()
}

/// Square matrix of dyadic values, so sums and shifts are exact.
fn dyadic_matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(
            prop::collection::vec((0u32..16).prop_map(|v| v as f64 / 4.0), n),
            n,
        )
    })
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["the", "a", "cat", "sat", "on", "mat", "dog"]),
        1..8,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,40}") {
        for spec in [NormalizerSpec::none(), NormalizerSpec::basic(), NormalizerSpec::english(None)] {
            let n = Normalizer::from_spec(&spec).unwrap();
            let once = n.normalize(&s);
            prop_assert_eq!(n.normalize(&once), once.clone(), "{:?}", spec.kind);
        }
    }

    #[test]
    fn basic_output_character_classes(s in "\\PC{0,40}") {
        let b = basic(&s);
        prop_assert!(!b.starts_with(' ') && !b.ends_with(' ') && !b.contains("  "));
        for ch in b.chars() {
            prop_assert!(
                ch == ' ' || ch == '\'' || ch.is_numeric() || (ch.is_alphabetic() && !ch.is_uppercase()),
                "{:?} in {:?}", ch, b
            );
        }
    }

    #[test]
    fn tokenize_contracts(s in "\\PC{0,40}") {
        prop_assert!(tokenize(&s, TokenUnit::Word).iter().all(|t| !t.is_empty()));
        let chars: String = tokenize(&s, TokenUnit::Char).concat();
        let stripped: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(chars, stripped);
    }

    #[test]
    fn edit_distance_symmetric_and_triangle(
        a in prop::collection::vec(0u8..5, 0..10),
        b in prop::collection::vec(0u8..5, 0..10),
        c in prop::collection::vec(0u8..5, 0..10),
    ) {
        let d = |x: &[u8], y: &[u8]| edit_distance(x, y).distance;
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert_eq!(d(&a, &a), 0);
    }

    #[test]
    fn bleu_of_self_is_100(h in words()) {
        let s = sentence_bleu_str(&h, &[&h], &BleuConfig::sentence()).unwrap();
        prop_assert!((s - 100.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_distance_scale_invariant(
        v in prop::collection::vec(-10.0f64..10.0, 1..16),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let w: Vec<f64> = v.iter().map(|x| x * c).collect();
        prop_assert!(cosine_distance(&v, &w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariant(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let r = pearson(&x, &y);
        prop_assume!(r.is_ok());
        let r = r.unwrap();
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let y2: Vec<f64> = y.iter().map(|v| a * v - b).collect();
        prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
        prop_assert!((pearson(&x, &y2).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn dedup_conserves_mass(labels in prop::collection::vec(0u8..6, 1..64)) {
        let texts: Vec<String> = labels.iter().map(|l| format!("h{l}")).collect();
        let set = HypothesisSet::from_texts("u", &texts).unwrap();
        let w = dedup_weight(&set);
        prop_assert_eq!(w.total_weight(), labels.len() as u64);
        for it in &w.items {
            prop_assert_eq!(&set.hypotheses[it.first_index].text, &it.hypothesis.text);
        }
    }

    #[test]
    fn argmax_invariant_under_shift_and_scale(
        rows in dyadic_matrix(10),
        shift in -8i32..8,
        scale_pow in -3i32..4,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let weights: Vec<u32> = (0..n).map(|i| 1 + ((seed >> (i % 60)) & 3) as u32).collect();
        let base = mbr_select(&matrix(&rows), &weights).unwrap().index;
        let k = 2f64.powi(scale_pow);
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift as f64).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
        prop_assert_eq!(mbr_select(&matrix(&shifted), &weights).unwrap().index, base);
        prop_assert_eq!(mbr_select(&matrix(&scaled), &weights).unwrap().index, base);
    }

    #[test]
    fn two_candidates_pick_larger_row_sum(v in prop::collection::vec(0.0f64..100.0, 4)) {
        let rows = vec![vec![v[0], v[1]], vec![v[2], v[3]]];
        let want = if v[2] + v[3] > v[0] + v[1] { 1 } else { 0 };
        prop_assert_eq!(mbr_select(&matrix(&rows), &[1, 1]).unwrap().index, want);
    }

    #[test]
    fn selection_commutes_with_permutation(
        rows in (2usize..9).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n)),
        perm_seed in any::<u64>(),
    ) {
        let n = rows.len();
        let sel = mbr_select(&matrix(&rows), &vec![1; n]).unwrap();
        let mut sorted = sel.objectives.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        // perm[new] = old
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&a| perm.iter().map(|&b| rows[a][b]).collect()).collect();
        let psel = mbr_select(&matrix(&permuted), &vec![1; n]).unwrap();
        prop_assert_eq!(perm[psel.index], sel.index);
    }

    #[test]
    fn transform_sums_to_one_on_subset(
        raw in prop::collection::vec(0.0f64..1.0, 2..12),
        t in 0.05f64..5.0,
        eps in 0.0f64..0.5,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let p_total: f64 = p.iter().sum();
        prop_assume!((p_total - 1.0).abs() < 1e-12);
        let q = transform_distribution(&p, t, eps).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (pi, qi) in p.iter().zip(&q) {
            prop_assert!(*qi >= 0.0);
            if *pi == 0.0 {
                prop_assert_eq!(*qi, 0.0);
            }
        }
    }

    #[test]
    fn snr_is_exact_and_gain_scales(
        sig in prop::collection::vec(-1.0f64..1.0, 16..256),
        noise_seed in any::<u64>(),
        snr in -10.0f64..30.0,
    ) {
        let n = sig.len();
        let mut s = noise_seed;
        let noise: Vec<f64> = (0..n).map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }).collect();
        let sig = AudioBuffer::new(sig, 16000).unwrap();
        let noise = AudioBuffer::new(noise, 16000).unwrap();
        prop_assume!(sig.samples.iter().any(|x| x.abs() > 1e-3));
        let mixed = mix_at_snr(&sig, &noise, snr).unwrap();
        let added = AudioBuffer::new(mixed.samples.iter().zip(&sig.samples).map(|(m, x)| m - x).collect(), 16000).unwrap();
        prop_assert!((measured_snr_db(&sig, &added).unwrap() - snr).abs() < 1e-6);
        let g1 = snr_gain(&sig, &noise, snr).unwrap();
        let g2 = snr_gain(&sig, &noise, snr + 6.02).unwrap();
        prop_assert!((g2 / g1 - 0.5).abs() < 1e-4);
    }

    #[test]
    fn weighted_select_invariant_to_score_shifts(
        scores in prop::collection::vec((-50.0f64..0.0, -80.0f64..0.0), 1..12),
        da in -100.0f64..100.0,
        dl in -100.0f64..100.0,
    ) {
        let build = |da: f64, dl: f64| {
            let hyps = scores.iter().enumerate().map(|(i, (a, l))| {
                Hypothesis::new(format!("h{i}")).with_score("asr_score", a + da).with_score("llm_score", l + dl)
            }).collect();
            HypothesisSet::new("u", hyps).unwrap()
        };
        let spec = WeightedScoreSpec::default();
        let base = weighted_select(&build(0.0, 0.0), &spec).unwrap();
        let objs = base.per_candidate_objective.clone().unwrap();
        let mut sorted = objs.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted.len() == 1 || sorted[0] - sorted[1] > 1e-6);
        prop_assert_eq!(weighted_select(&build(da, dl), &spec).unwrap().chosen_index, base.chosen_index);
    }

    #[test]
    fn map_is_weighted_with_alpha_zero(lps in prop::collection::vec(-30.0f64..0.0, 1..12)) {
        let hyps = lps.iter().enumerate().map(|(i, lp)| {
            Hypothesis::new(format!("h{i}")).with_log_prob(*lp).with_score("asr_score", *lp).with_score("llm_score", 0.0)
        }).collect();
        let set = HypothesisSet::new("u", hyps).unwrap();
        let spec = WeightedScoreSpec { alpha: 0.0, ..Default::default() };
        prop_assert_eq!(
            map_select(&set, false).unwrap().chosen_index,
            weighted_select(&set, &spec).unwrap().chosen_index
        );
    }

    #[test]
    fn hypothesis_files_round_trip(
        sets in prop::collection::vec(
            prop::collection::vec((words(), prop::option::of(-100.0f64..0.0), prop::option::of(1u64..50)), 1..5),
            1..4,
        ),
    ) {
        let sets: Vec<HypothesisSet> = sets.into_iter().enumerate().map(|(k, hs)| {
            let hyps = hs.into_iter().map(|(t, lp, c)| Hypothesis {
                text: t,
                log_prob: lp,
                token_count: c,
                ..Default::default()
            }).collect();
            HypothesisSet::new(format!("u{k}"), hyps).unwrap()
        }).collect();
        let text = format_hypothesis_sets(&sets).unwrap();
        let back = parse_hypothesis_sets(&text, Path::new("h.jsonl")).unwrap();
        prop_assert_eq!(&back, &sets);
        prop_assert_eq!(format_hypothesis_sets(&back).unwrap(), text);
    }
}

fn toy_model() -> SyntheticModel {
    SyntheticModel::from_pairs(vec![
        ("a b c".into(), 0.3),
        ("a b".into(), 0.25),
        ("b c".into(), 0.2),
        ("c".into(), 0.15),
        ("a c b".into(), 0.1),
    ])
    .unwrap()
}

#[test]
fn samples_do_not_depend_on_pool_size() {
    let model = toy_model();
    let cfg = SamplerConfig::epsilon(0.05, 1.3, 99, 40);
    let one = with_workers(1, || sample_set(&model, &cfg, "u"))
        .unwrap()
        .unwrap();
    let four = with_workers(4, || sample_set(&model, &cfg, "u"))
        .unwrap()
        .unwrap();
    assert_eq!(one, four);
    for i in [0u64, 17, 39] {
        let s = sample_sequence(&model, &cfg, i).unwrap();
        assert_eq!(s.text, one.hypotheses[i as usize].text);
    }
}

#[test]
fn full_width_beam_finds_the_mode() {
    let model = toy_model();
    let best = beam_search(&model, model.support().len()).unwrap();
    assert_eq!(best[0].0, "a b c");
    assert!((best[0].1 - 0.3f64.ln()).abs() < 1e-12);
}
