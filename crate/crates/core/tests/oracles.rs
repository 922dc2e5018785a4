//! Agreement with independent implementations: frozen sacreBLEU and
//! whisper-normalizer outputs, numpy correlations, and brute-force
//! recursions.

use std::collections::HashMap;
use std::path::Path;

use mbrkit_core::data::{dedup_weight, HypothesisSet};
use mbrkit_core::metrics::{
    corpus_bleu, edit_distance, pearson, sentence_bleu, BleuConfig, BleuLevel, Smoothing,
};
use mbrkit_core::textnorm::{Normalizer, NormalizerSpec};
use mbrkit_core::{mbr_select, UtilityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

fn fixture(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[derive(Deserialize)]
struct BleuCase {
    level: String,
    hyps: Vec<String>,
    refs: Vec<Vec<String>>,
    smoothing: String,
    smooth_value: Option<f64>,
    effective_order: bool,
    max_order: usize,
    score: f64,
}

fn split(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn bleu_matches_sacrebleu() {
    let mut seen = (0, 0);
    for line in fixture("bleu_sacrebleu.jsonl").lines() {
        let c: BleuCase = serde_json::from_str(line).unwrap();
        let smoothing = match c.smoothing.as_str() {
            "exp" => Smoothing::Exp,
            "floor" => Smoothing::Floor(c.smooth_value.unwrap()),
            "none" => Smoothing::None,
            s => panic!("smoothing {s}"),
        };
        let cfg = BleuConfig {
            max_order: c.max_order,
            smoothing,
            level: if c.level == "sentence" {
                BleuLevel::Sentence
            } else {
                BleuLevel::Corpus
            },
            effective_order: c.effective_order,
        };
        let hyps: Vec<Vec<&str>> = c.hyps.iter().map(|h| split(h)).collect();
        let refs: Vec<Vec<Vec<&str>>> = c
            .refs
            .iter()
            .map(|rs| rs.iter().map(|r| split(r)).collect())
            .collect();
        let got = if c.level == "sentence" {
            seen.0 += 1;
            sentence_bleu(&hyps[0], &refs[0], &cfg).unwrap()
        } else {
            seen.1 += 1;
            corpus_bleu(&hyps, &refs, &cfg).unwrap()
        };
        assert!((got - c.score).abs() < 1e-4, "{line}\ngot {got}");
    }
    assert_eq!(seen, (50, 5));
}

#[derive(Deserialize)]
struct NormCase {
    input: String,
    expected: String,
}

/// The bundled rule table minus the contraction and title rules, which the
/// spelling-only oracle does not apply.
fn spelling_only() -> Normalizer {
    let rules = include_str!("../data/english_rules.tsv");
    let start = rules.find("# [spellings]").expect("spellings section");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spellings.tsv");
    std::fs::write(&path, &rules[start..]).unwrap();
    Normalizer::from_spec(&NormalizerSpec::english(Some(path))).unwrap()
}

#[test]
fn english_spellings_match_whisper() {
    let norm = spelling_only();
    let mut n = 0;
    for line in fixture("english_norm_parity.jsonl").lines() {
        let c: NormCase = serde_json::from_str(line).unwrap();
        assert_eq!(norm.normalize(&c.input), c.expected, "{:?}", c.input);
        n += 1;
    }
    assert_eq!(n, 40);
}

fn recursive_distance(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let sub = recursive_distance(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = recursive_distance(&a[1..], b, memo) + 1;
    let ins = recursive_distance(a, &b[1..], memo) + 1;
    let d = sub.min(del).min(ins);
    memo.insert((a.len(), b.len()), d);
    d
}

#[test]
fn edit_distance_matches_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let a: Vec<u8> = (0..rng.gen_range(0..=8))
            .map(|_| rng.gen_range(0..4))
            .collect();
        let b: Vec<u8> = (0..rng.gen_range(0..=8))
            .map(|_| rng.gen_range(0..4))
            .collect();
        let want = recursive_distance(&a, &b, &mut HashMap::new());
        let got = edit_distance(&a, &b);
        assert_eq!(got.distance, want, "{a:?} {b:?}");
        assert_eq!(got.ref_len, b.len());
    }
}

#[test]
fn pearson_matches_numpy() {
    let cases: [(&[f64], &[f64], f64); 4] = [
        (
            &[1., 2., 3., 4., 5.],
            &[2., 1., 4., 3., 5.],
            0.7999999999999999,
        ),
        (
            &[0.1, 0.5, 0.2, 0.9],
            &[10., 20., 15., 30.],
            0.9911125806211109,
        ),
        (
            &[1000001., 1000002., 1000004., 1000003.],
            &[3., 1., 2., 5.],
            0.07559289460184544,
        ),
        (
            &[5., 4., 3., 2., 1., 0.],
            &[0.0, 0.1, 0.4, 0.9, 1.6, 2.5],
            -0.9598832852883319,
        ),
    ];
    for (x, y, r) in cases {
        assert!((pearson(x, y).unwrap() - r).abs() < 1e-9, "{x:?}");
    }
}

/// Argmax of the mean utility over the expanded multiset, lowest position
/// winning ties; returns the chosen position.
fn expanded_argmax(labels: &[usize], u: &[Vec<f64>]) -> usize {
    let n = labels.len() as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &a) in labels.iter().enumerate() {
        let obj = labels.iter().map(|&b| u[a][b]).sum::<f64>() / n;
        if obj > best.1 {
            best = (i, obj);
        }
    }
    best.0
}

#[test]
fn weighted_mbr_matches_expanded_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..500 {
        let distinct = rng.gen_range(1..=16);
        let total = rng.gen_range(distinct..=64);
        // Dyadic utilities keep sums exact, so ties are real ties.
        let u: Vec<Vec<f64>> = (0..distinct)
            .map(|_| {
                (0..distinct)
                    .map(|_| rng.gen_range(0..4) as f64 * 0.25)
                    .collect()
            })
            .collect();
        let mut labels: Vec<usize> = (0..distinct).collect();
        labels.extend((distinct..total).map(|_| rng.gen_range(0..distinct)));
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let texts: Vec<String> = labels.iter().map(|l| format!("c{l}")).collect();
        let set = HypothesisSet::from_texts("u", &texts).unwrap();
        let weighted = dedup_weight(&set);
        let order: Vec<usize> = weighted
            .items
            .iter()
            .map(|it| it.hypothesis.text[1..].parse().unwrap())
            .collect();
        let rows = order
            .iter()
            .map(|&a| order.iter().map(|&b| u[a][b]).collect())
            .collect();
        let matrix = UtilityMatrix::from_rows(rows, "test").unwrap();
        let sel = mbr_select(&matrix, &weighted.weights()).unwrap();
        let want = labels[expanded_argmax(&labels, &u)];
        assert_eq!(order[sel.index], want, "trial {trial}");
    }
}
