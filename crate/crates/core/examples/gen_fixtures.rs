//! Regenerates the bundled fixtures:
//!
//! * `fixtures/synthetic_50.tsv`, a 50-string model whose most probable
//!   string is a degenerate output and whose MBR optimum is the consensus
//!   string.
//! * `fixtures/asr_sim/`, a simulated ASR corpus: LibriSpeech-style
//!   references, 64 epsilon-sampled hypotheses per utterance drawn from a
//!   per-utterance synthetic recognizer, beam outputs at widths 1, 5 and 20,
//!   LLM/ASR scores and a bag-of-words embedding table.
//!
//! Run with `cargo run -p mbrkit-core --example gen_fixtures -- <fixtures dir>`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mbrkit_core::audio::fnv1a;
use mbrkit_core::data::{
    write_hypothesis_sets, write_manifest, Hypothesis, HypothesisSet, Utterance,
};
use mbrkit_core::metrics::EmbeddingTable;
use mbrkit_core::sampling::{beam_search, sample_set, SamplerConfig, SyntheticModel};
use mbrkit_core::textnorm::basic;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUBJECTS: &[&str] = &[
    "the old man",
    "my brother",
    "the captain",
    "a young woman",
    "the children",
    "his mother",
    "the stranger",
    "our neighbor",
    "the doctor",
    "the little girl",
    "the soldiers",
    "her father",
    "the king",
    "the farmer",
    "the boy",
    "everyone in the village",
];
const VERBS: &[&str] = &[
    "walked toward",
    "looked at",
    "spoke about",
    "thought of",
    "waited for",
    "ran past",
    "searched for",
    "turned away from",
    "remembered",
    "carried",
    "admired",
    "painted",
    "followed",
    "heard",
    "found",
];
const OBJECTS: &[&str] = &[
    "the river",
    "the house on the hill",
    "a red color in the sky",
    "the great forest",
    "the honor of the family",
    "the letter",
    "the gray horse",
    "the center of the town",
    "an empty room",
    "the harbor",
    "the favorite song",
    "the night train",
    "the garden wall",
    "the heavy door",
    "a piece of bread",
    "the light of the moon",
];
const TAILS: &[&str] = &[
    "before the sun went down",
    "and said nothing at all",
    "while the rain fell on the roof",
    "because there was no other way",
    "as if he had never seen it before",
    "for a long time",
    "with a strange feeling of peace",
    "in the cold morning air",
    "until the bells began to ring",
    "and then went home",
    "without a word",
    "when the night was over",
];
const OPENERS: &[&str] = &[
    "",
    "",
    "",
    "then",
    "at last",
    "once again",
    "in the evening",
    "suddenly",
    "of course",
];

/// Sound-alike and spelling confusions a recognizer tends to make.
const CONFUSIONS: &[(&str, &[&str])] = &[
    ("there", &["their", "they're"]),
    ("to", &["too", "two"]),
    ("for", &["four", "far"]),
    ("hear", &["here"]),
    ("heard", &["herd"]),
    ("no", &["know"]),
    ("new", &["knew"]),
    ("sea", &["see"]),
    ("one", &["won"]),
    ("by", &["buy", "bye"]),
    ("night", &["knight"]),
    ("son", &["sun"]),
    ("would", &["wood"]),
    ("peace", &["piece"]),
    ("piece", &["peace"]),
    ("red", &["read"]),
    ("way", &["weigh"]),
    ("wall", &["ball", "hall"]),
    ("rain", &["reign", "rein"]),
    ("roof", &["proof"]),
    ("river", &["liver", "rivers"]),
    ("house", &["horse", "mouse"]),
    ("horse", &["house", "hoarse"]),
    ("letter", &["ladder", "better"]),
    ("bread", &["bred", "breath"]),
    ("moon", &["noon"]),
    ("man", &["men", "mind"]),
    ("boy", &["buoy"]),
    ("king", &["kin", "keen"]),
    ("brother", &["bother"]),
    ("walked", &["worked", "talked"]),
    ("looked", &["locked", "look"]),
    ("thought", &["taught", "fought"]),
    ("found", &["fond", "sound"]),
    ("train", &["rain", "trains"]),
    ("song", &["son", "sung"]),
    ("door", &["dour", "drawer"]),
    ("cold", &["called", "gold"]),
    ("bells", &["bills", "belts"]),
    ("waited", &["weighted", "wanted"]),
    ("color", &["colour"]),
    ("honor", &["honour"]),
    ("gray", &["grey"]),
    ("center", &["centre"]),
    ("harbor", &["harbour"]),
    ("favorite", &["favourite"]),
    ("neighbor", &["neighbour"]),
];

const HALLUCINATIONS: &[&str] = &[
    "Thank you for watching.",
    "Thanks for watching!",
    "Please subscribe.",
];
const FILLERS: &[&str] = &["the", "and", "a", "uh", "so"];

/// One reference sentence, lowercase words.
fn sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut parts: Vec<&str> = Vec::new();
    let opener = *OPENERS.choose(rng).unwrap();
    if !opener.is_empty() {
        parts.push(opener);
    }
    parts.push(SUBJECTS.choose(rng).unwrap());
    parts.push(VERBS.choose(rng).unwrap());
    parts.push(OBJECTS.choose(rng).unwrap());
    let tails = rng.gen_range(0..=3);
    for _ in 0..tails {
        parts.push(TAILS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.3) {
        parts.push("and");
        parts.push(SUBJECTS.choose(rng).unwrap());
        parts.push(VERBS.choose(rng).unwrap());
        parts.push(OBJECTS.choose(rng).unwrap());
    }
    parts
        .join(" ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Recognizer-style surface form: capitalized, with final punctuation.
fn surface(words: &[String], punct: &str) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        s = first.to_uppercase() + &s[1..];
    }
    if !s.is_empty() {
        s.push_str(punct);
    }
    s
}

fn confuse(word: &str, rng: &mut ChaCha8Rng) -> String {
    match CONFUSIONS.iter().find(|(w, _)| *w == word) {
        Some((_, alts)) => alts.choose(rng).unwrap().to_string(),
        None => {
            let (_, alts) = CONFUSIONS.choose(rng).unwrap();
            alts.choose(rng).unwrap().to_string()
        }
    }
}

/// A variant with `k` recognition errors.
fn corrupt(words: &[String], k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut w = words.to_vec();
    for _ in 0..k {
        if w.is_empty() {
            break;
        }
        let i = rng.gen_range(0..w.len());
        match rng.gen_range(0..10) {
            0..=5 => w[i] = confuse(&w[i], rng),
            6..=7 => {
                w.remove(i);
            }
            _ => w.insert(i, FILLERS.choose(rng).unwrap().to_string()),
        }
    }
    w
}

/// Per-utterance recognizer: a distribution over transcripts. Some
/// utterances get a spiky degenerate mode (early stop or hallucinated tail).
fn recognizer(words: &[String], rng: &mut ChaCha8Rng) -> Vec<(String, f64)> {
    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let mut add = |s: String, p: f64| *mass.entry(s).or_insert(0.0) += p;

    let spelling_variant: Vec<String> = words
        .iter()
        .map(|w| match CONFUSIONS.iter().find(|(c, _)| c == w) {
            Some((_, alts))
                if alts[0].len() > w.len() && alts[0].contains('u') || alts[0] == "grey" =>
            {
                alts[0].to_string()
            }
            _ => w.clone(),
        })
        .collect();

    let degenerate = rng.gen_bool(0.35);
    let correct_mass = if degenerate {
        rng.gen_range(0.03..0.12)
    } else {
        rng.gen_range(0.06..0.3)
    };
    // Hard utterances: much of the mass sits on a consistent misrecognition.
    let systematic = rng.gen_bool(0.3).then(|| corrupt(words, 1, rng));
    if let Some(sys) = &systematic {
        add(surface(sys, "."), correct_mass * rng.gen_range(0.8..1.5));
    }
    add(surface(words, "."), correct_mass);
    if spelling_variant != words {
        add(surface(&spelling_variant, "."), correct_mass * 0.3);
    }
    add(surface(words, ","), correct_mass * 0.15);
    if degenerate {
        let spike = rng.gen_range(0.25..0.4);
        if rng.gen_bool(0.5) && words.len() > 4 {
            let cut = rng.gen_range(words.len() / 3..=words.len() / 2).max(2);
            add(surface(&words[..cut], "."), spike);
        } else {
            let h = HALLUCINATIONS.choose(rng).unwrap();
            add(format!("{} {h}", surface(words, ".")), spike);
        }
    }
    let noise_level = rng.gen_range(0.6..1.6);
    for _ in 0..rng.gen_range(25..45) {
        let k = 1 + (rng.gen::<f64>() * noise_level * 3.0) as usize;
        let p = rng.gen_range(0.2..1.0) * (-(k as f64) * 0.7).exp();
        let base = match &systematic {
            Some(sys) if rng.gen_bool(0.6) => sys,
            _ => words,
        };
        add(surface(&corrupt(base, k, rng), "."), p);
    }
    let total: f64 = mass.values().sum();
    let mut pairs: Vec<(String, f64)> = mass.into_iter().map(|(s, p)| (s, p / total)).collect();
    pairs.shuffle(rng);
    pairs
}

fn unigram_scorer(refs: &[Vec<String>]) -> impl Fn(&str) -> f64 {
    let mut counts: HashMap<String, f64> = HashMap::new();
    let mut total = 0.0;
    for r in refs {
        for w in r {
            *counts.entry(w.clone()).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    let vocab = counts.len() as f64 + 1.0;
    move |text: &str| {
        let norm = basic(text);
        let words: Vec<&str> = norm.split_whitespace().collect();
        let lp: f64 = words
            .iter()
            .map(|w| ((counts.get(*w).copied().unwrap_or(0.0) + 0.5) / (total + 0.5 * vocab)).ln())
            .sum();
        lp - 2.0
    }
}

fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 48];
    v[0] = 0.25;
    for w in basic(text).split_whitespace() {
        let h = fnv1a(w.as_bytes());
        v[1 + (h % 47) as usize] += if (h >> 32) & 1 == 0 { 1.0 } else { 0.7 };
    }
    v
}

fn synthetic_50() -> String {
    let consensus = "the quick brown fox jumps over the lazy dog today";
    let words: Vec<&str> = consensus.split(' ').collect();
    let alts = [
        ("quick", &["quack", "quiet", "thick"][..]),
        ("brown", &["brow", "round", "crown"][..]),
        ("fox", &["box", "socks", "fog"][..]),
        ("jumps", &["jump", "dumps", "bumps"][..]),
        ("over", &["clover", "ever", "offer"][..]),
        ("lazy", &["hazy", "crazy", "daisy"][..]),
        ("dog", &["dug", "log", "fog"][..]),
        ("today", &["to day", "to stay", "away"][..]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut strings: Vec<String> =
        vec![consensus.to_string(), "thank you for watching".to_string()];
    while strings.len() < 50 {
        let mut w: Vec<String> = words.iter().map(|s| s.to_string()).collect();
        let k = if rng.gen_bool(0.5) { 1 } else { 2 };
        for _ in 0..k {
            let (orig, choices) = alts.choose(&mut rng).unwrap();
            let pos = w.iter().position(|x| x == orig);
            if let Some(pos) = pos {
                w[pos] = choices.choose(&mut rng).unwrap().to_string();
            }
        }
        let s = w.join(" ");
        if !strings.contains(&s) {
            strings.push(s);
        }
    }
    // Spike on the degenerate string, modest mass on the consensus, the rest
    // spread over the one- and two-error variants.
    let mut probs = vec![0.07, 0.18];
    let raw: Vec<f64> = (0..48).map(|k| 1.0 / (1.0 + 0.08 * k as f64)).collect();
    let sum: f64 = raw.iter().sum();
    probs.extend(raw.iter().map(|r| 0.75 * r / sum));
    let mut out = String::from("# probability<TAB>tokens\n");
    for (s, p) in strings.iter().zip(&probs) {
        let _ = writeln!(out, "{p}\t{s}");
    }
    out
}

fn main() -> mbrkit_core::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(root.join("synthetic_50.tsv"), synthetic_50()).unwrap();

    let dir = root.join("asr_sim");
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n_utts = 100;
    let refs: Vec<Vec<String>> = (0..n_utts).map(|_| sentence(&mut rng)).collect();
    let llm = unigram_scorer(&refs);

    let mut manifest = Vec::new();
    let mut samples = Vec::new();
    let mut beams: BTreeMap<usize, Vec<HypothesisSet>> = BTreeMap::new();
    let mut table = EmbeddingTable::new(48)?;
    for (k, words) in refs.iter().enumerate() {
        let id = format!("sim-{:04}", k + 1);
        let reference = words.join(" ").to_uppercase();
        table.insert(reference.clone(), embed(&reference))?;
        manifest.push(Utterance {
            id: id.clone(),
            audio_path: None,
            reference: Some(reference),
            language: "en".into(),
        });
        let model = SyntheticModel::from_pairs(recognizer(words, &mut rng))?;
        let cfg = SamplerConfig::epsilon(0.01, 1.0, 1000 + k as u64, 64);
        let mut set = sample_set(&model, &cfg, &id)?;
        for h in &mut set.hypotheses {
            let asr = h.log_prob.unwrap();
            h.external_scores.insert("asr_score".into(), asr);
            h.external_scores.insert("llm_score".into(), llm(&h.text));
            if !table.contains(&h.text) {
                table.insert(h.text.clone(), embed(&h.text))?;
            }
        }
        samples.push(set);
        for width in [1usize, 5, 20] {
            let hyps = beam_search(&model, width)?
                .into_iter()
                .map(|(text, lp)| {
                    if !table.contains(&text) {
                        table.insert(text.clone(), embed(&text)).unwrap();
                    }
                    let count = text.split_whitespace().count() as u64;
                    Hypothesis::new(text)
                        .with_log_prob(lp)
                        .with_token_count(count)
                })
                .collect();
            beams
                .entry(width)
                .or_default()
                .push(HypothesisSet::new(id.clone(), hyps)?);
        }
    }
    write_manifest(dir.join("manifest.tsv"), &manifest)?;
    write_hypothesis_sets(dir.join("samples.jsonl"), &samples)?;
    for (width, sets) in &beams {
        write_hypothesis_sets(dir.join(format!("beam{width}.jsonl")), sets)?;
    }
    std::fs::write(dir.join("embeddings.tsv"), table.format()).unwrap();
    report(&dir);
    Ok(())
}

fn report(dir: &Path) {
    eprintln!("wrote fixtures under {}", dir.display());
}
