use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::{write_output, Resources, RunConfig, VERSION};
use crate::data::{load_decode_results, load_manifest, DecodeResult, Method, Utterance};
use crate::error::{Error, Result};
use crate::mbr::Tokenization;
use crate::metrics::{
    corpus_bleu, cosine_distance, edit_distance, sentence_bleu, BleuConfig, EmbeddingTable,
};
use crate::textnorm::{tokenize, Normalizer, TokenUnit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub config_digest: String,
    pub version: String,
    pub unit: TokenUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusRow {
    pub label: String,
    pub method: Method,
    pub utterances: usize,
    pub errors: usize,
    pub ref_tokens: usize,
    /// Micro-averaged WER or CER.
    pub error_rate: f64,
    pub corpus_bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_semdist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceRow {
    pub utterance_id: String,
    pub label: String,
    pub method: Method,
    pub chosen_index: usize,
    pub chosen_text: String,
    pub errors: usize,
    pub ref_tokens: usize,
    /// Absent when the normalized reference is empty.
    pub error_rate: Option<f64>,
    pub sentence_bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semdist: Option<f64>,
    pub ref_words: usize,
    pub bucket: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub label: String,
    pub bucket: String,
    pub utterances: usize,
    pub errors: usize,
    pub ref_tokens: usize,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub corpus: Vec<CorpusRow>,
    pub buckets: Vec<BucketRow>,
    pub rows: Vec<UtteranceRow>,
}

fn bleu_tokens(text: &str, tokenization: Tokenization, normalizer: &Normalizer) -> Vec<String> {
    match tokenization {
        Tokenization::PreTokenized => tokenize(text, TokenUnit::Word),
        Tokenization::Word => tokenize(&normalizer.normalize(text), TokenUnit::Word),
        Tokenization::Char => tokenize(&normalizer.normalize(text), TokenUnit::Char),
    }
}

/// Lower bound `x` of the `(x, x + width]` bucket holding `words`; empty
/// references land in `(-width, 0]`.
fn bucket_lower(words: usize, width: usize) -> i64 {
    if words == 0 {
        -(width as i64)
    } else {
        (width * ((words - 1) / width)) as i64
    }
}

fn bucket_name(lower: i64, width: usize) -> String {
    format!("({lower},{}]", lower + width as i64)
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Scores decode results against manifest references.
pub fn evaluate_results(
    cfg: &RunConfig,
    manifest: &[Utterance],
    results: &[DecodeResult],
    embeddings: Option<&EmbeddingTable>,
) -> Result<EvalReport> {
    let normalizer = Normalizer::from_spec(&cfg.resolved_normalizer(&cfg.normalizer))
        .map_err(|e| Error::Config(e.to_string()))?;
    let tokenization = cfg
        .evaluate
        .bleu_tokenization
        .unwrap_or(Tokenization::from_unit(cfg.unit));
    let width = cfg.evaluate.bucket_width;
    let by_id: HashMap<&str, &Utterance> = manifest.iter().map(|u| (u.id.as_str(), u)).collect();
    let position: HashMap<&str, usize> = manifest
        .iter()
        .enumerate()
        .map(|(k, u)| (u.id.as_str(), k))
        .collect();
    let sentence_cfg = BleuConfig::sentence();

    let mut order: Vec<&DecodeResult> = results.iter().collect();
    let mut labels: Vec<(String, Method)> = Vec::new();
    for r in results {
        if !labels.iter().any(|(l, _)| l == &r.label) {
            labels.push((r.label.clone(), r.method));
        }
    }
    let label_pos = |l: &str| {
        labels
            .iter()
            .position(|(x, _)| x == l)
            .unwrap_or(usize::MAX)
    };
    for r in &order {
        if !position.contains_key(r.utterance_id.as_str()) {
            return Err(Error::invalid(format!(
                "result for unknown utterance {:?}",
                r.utterance_id
            )));
        }
    }
    order.sort_by_key(|r| (position[r.utterance_id.as_str()], label_pos(&r.label)));
    if let Some(w) = order
        .windows(2)
        .find(|w| w[0].utterance_id == w[1].utterance_id && w[0].label == w[1].label)
    {
        return Err(Error::invalid(format!(
            "utterance {:?} has more than one {:?} result",
            w[0].utterance_id, w[0].label
        )));
    }

    let mut rows = Vec::with_capacity(order.len());
    let mut bleu_pairs: BTreeMap<usize, (Vec<Vec<String>>, Vec<Vec<Vec<String>>>)> =
        BTreeMap::new();
    for r in order {
        let utt = by_id[r.utterance_id.as_str()];
        let reference = utt
            .reference
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("utterance {:?} has no reference", utt.id)))?;
        let norm_ref = normalizer.normalize(reference);
        let ref_tokens = tokenize(&norm_ref, cfg.unit);
        let hyp_tokens = tokenize(&normalizer.normalize(&r.chosen_text), cfg.unit);
        let stats = edit_distance(&hyp_tokens, &ref_tokens);
        let hyp_bleu = bleu_tokens(&r.chosen_text, tokenization, &normalizer);
        let ref_bleu = bleu_tokens(reference, tokenization, &normalizer);
        let sentence = sentence_bleu(&hyp_bleu, std::slice::from_ref(&ref_bleu), &sentence_cfg)?;
        let semdist = match embeddings {
            Some(t) => Some(cosine_distance(t.get(&r.chosen_text)?, t.get(reference)?)?),
            None => None,
        };
        let ref_words = tokenize(&norm_ref, TokenUnit::Word).len();
        let entry = bleu_pairs.entry(label_pos(&r.label)).or_default();
        entry.0.push(hyp_bleu);
        entry.1.push(vec![ref_bleu]);
        rows.push(UtteranceRow {
            utterance_id: r.utterance_id.clone(),
            label: r.label.clone(),
            method: r.method,
            chosen_index: r.chosen_index,
            chosen_text: r.chosen_text.clone(),
            errors: stats.distance,
            ref_tokens: stats.ref_len,
            error_rate: stats.rate(),
            sentence_bleu: sentence,
            semdist,
            ref_words,
            bucket: bucket_name(bucket_lower(ref_words, width), width),
        });
    }

    let corpus_cfg = BleuConfig::corpus();
    let mut corpus = Vec::with_capacity(labels.len());
    let mut buckets = Vec::new();
    for (k, (label, method)) in labels.iter().enumerate() {
        let mine: Vec<&UtteranceRow> = rows.iter().filter(|r| &r.label == label).collect();
        let errors: usize = mine.iter().map(|r| r.errors).sum();
        let ref_tokens: usize = mine.iter().map(|r| r.ref_tokens).sum();
        if ref_tokens == 0 {
            return Err(Error::Undefined(format!(
                "{label}: every reference is empty"
            )));
        }
        let (hyps, refs) = &bleu_pairs[&k];
        let mean_semdist = embeddings.map(|_| {
            // Reduced in manifest order.
            mine.iter().map(|r| r.semdist.unwrap_or(0.0)).sum::<f64>() / mine.len() as f64
        });
        corpus.push(CorpusRow {
            label: label.clone(),
            method: *method,
            utterances: mine.len(),
            errors,
            ref_tokens,
            error_rate: errors as f64 / ref_tokens as f64,
            corpus_bleu: corpus_bleu(hyps, refs, &corpus_cfg)?,
            mean_semdist,
        });
        let mut by_bucket: BTreeMap<i64, (usize, usize, usize)> = BTreeMap::new();
        for r in &mine {
            let e = by_bucket
                .entry(bucket_lower(r.ref_words, width))
                .or_default();
            e.0 += 1;
            e.1 += r.errors;
            e.2 += r.ref_tokens;
        }
        for (lower, (n, errs, toks)) in by_bucket {
            buckets.push(BucketRow {
                label: label.clone(),
                bucket: bucket_name(lower, width),
                utterances: n,
                errors: errs,
                ref_tokens: toks,
                error_rate: (toks > 0).then(|| errs as f64 / toks as f64),
            });
        }
    }
    Ok(EvalReport {
        metadata: ReportMetadata {
            config_digest: cfg.digest(),
            version: VERSION.to_string(),
            unit: cfg.unit,
        },
        corpus,
        buckets,
        rows,
    })
}

impl EvalReport {
    pub fn corpus_row(&self, label: &str) -> Option<&CorpusRow> {
        self.corpus.iter().find(|r| r.label == label)
    }

    pub fn to_text(&self) -> String {
        let rate = match self.metadata.unit {
            TokenUnit::Word => "WER",
            TokenUnit::Char => "CER",
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mbrkit {}  config {}",
            self.metadata.version,
            &self.metadata.config_digest[..16]
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<24} {:>6} {:>8} {:>8} {:>8}",
            "method", "utts", rate, "BLEU", "SemDist"
        );
        for r in &self.corpus {
            let _ = writeln!(
                s,
                "{:<24} {:>6} {:>8.4} {:>8.2} {:>8}",
                r.label,
                r.utterances,
                r.error_rate,
                r.corpus_bleu,
                r.mean_semdist
                    .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{rate} by reference length (words)");
        for b in &self.buckets {
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>6} {:>8}",
                b.label,
                b.bucket,
                b.utterances,
                b.error_rate
                    .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
            );
        }
        s
    }

    pub fn corpus_tsv(&self) -> String {
        let mut s = String::from("label\tmethod\tutterances\terrors\tref_tokens\terror_rate\tcorpus_bleu\tmean_semdist\n");
        for r in &self.corpus {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
                r.label,
                r.method.as_str(),
                r.utterances,
                r.errors,
                r.ref_tokens,
                r.error_rate,
                r.corpus_bleu,
                opt(r.mean_semdist)
            );
        }
        s
    }

    pub fn rows_tsv(&self) -> String {
        let mut s = String::from(
            "utterance_id\tlabel\tmethod\tchosen_index\terrors\tref_tokens\terror_rate\tsentence_bleu\tsemdist\tref_words\tbucket\tchosen_text\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{}",
                r.utterance_id,
                r.label,
                r.method.as_str(),
                r.chosen_index,
                r.errors,
                r.ref_tokens,
                opt(r.error_rate),
                r.sentence_bleu,
                opt(r.semdist),
                r.ref_words,
                r.bucket,
                clean(&r.chosen_text)
            );
        }
        s
    }

    pub fn buckets_tsv(&self) -> String {
        let mut s = String::from("label\tbucket\tutterances\terrors\tref_tokens\terror_rate\n");
        for b in &self.buckets {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                b.label,
                b.bucket,
                b.utterances,
                b.errors,
                b.ref_tokens,
                opt(b.error_rate)
            );
        }
        s
    }

    /// Writes `report.txt`, `report.json`, `corpus.tsv`, `rows.tsv` and
    /// `buckets.tsv` into the output directory.
    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))? + "\n";
        Ok(vec![
            write_output(cfg, "report.txt", &self.to_text())?,
            write_output(cfg, "report.json", &json)?,
            write_output(cfg, "corpus.tsv", &self.corpus_tsv())?,
            write_output(cfg, "rows.tsv", &self.rows_tsv())?,
            write_output(cfg, "buckets.tsv", &self.buckets_tsv())?,
        ])
    }
}

/// Loads results (default `<output_dir>/results.jsonl`), evaluates and
/// writes the report files.
pub fn cmd_evaluate(cfg: &RunConfig, results: Option<PathBuf>) -> Result<EvalReport> {
    cfg.validate()?;
    let manifest = load_manifest(cfg.require(&cfg.manifest, "manifest")?)?;
    let results_path = results.unwrap_or_else(|| cfg.output_path("results.jsonl"));
    let results = load_decode_results(&results_path)?;
    let resources = Resources::load(cfg)?;
    let report = evaluate_results(cfg, &manifest, &results, resources.embeddings.as_deref())?;
    report.write(cfg)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HypothesisSet;

    fn utt(id: &str, reference: &str) -> Utterance {
        Utterance {
            id: id.into(),
            audio_path: None,
            reference: Some(reference.into()),
            language: "en".into(),
        }
    }

    fn result(id: &str, label: &str, text: &str) -> DecodeResult {
        let set = HypothesisSet::from_texts(id, &[text]).unwrap();
        DecodeResult::new(&set, Method::Mbr, 0, 0.0, None).with_label(label)
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket_lower(1, 5), 0);
        assert_eq!(bucket_lower(5, 5), 0);
        assert_eq!(bucket_lower(6, 5), 5);
        assert_eq!(bucket_lower(0, 5), -5);
        assert_eq!(bucket_name(5, 5), "(5,10]");
    }

    #[test]
    fn perfect_output_scores_perfectly() {
        let cfg = RunConfig::default();
        let manifest = vec![
            utt("a", "the cat sat on the mat"),
            utt("b", "hello there my old friend"),
        ];
        let results: Vec<DecodeResult> = manifest
            .iter()
            .map(|u| result(&u.id, "mbr", u.reference.as_deref().unwrap()))
            .collect();
        let mut emb = EmbeddingTable::new(2).unwrap();
        emb.insert("the cat sat on the mat", vec![1.0, 0.0])
            .unwrap();
        emb.insert("hello there my old friend", vec![0.0, 1.0])
            .unwrap();
        let report = evaluate_results(&cfg, &manifest, &results, Some(&emb)).unwrap();
        let c = report.corpus_row("mbr").unwrap();
        assert_eq!(c.error_rate, 0.0);
        assert!((c.corpus_bleu - 100.0).abs() < 1e-9);
        assert_eq!(c.mean_semdist, Some(0.0));
        let total: usize = report.buckets.iter().map(|b| b.utterances).sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn row_matches_metrics() {
        let cfg = RunConfig::default();
        let manifest = vec![utt("a", "A b c.")];
        let report = evaluate_results(&cfg, &manifest, &[result("a", "x", "a x c")], None).unwrap();
        let row = &report.rows[0];
        assert_eq!((row.errors, row.ref_tokens), (1, 3));
        let expected = sentence_bleu(
            &["a", "x", "c"],
            &[vec!["a", "b", "c"]],
            &BleuConfig::sentence(),
        )
        .unwrap();
        assert_eq!(row.sentence_bleu, expected);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let cfg = RunConfig::default();
        let mut u = utt("a", "x");
        u.reference = None;
        assert!(evaluate_results(&cfg, &[u], &[result("a", "m", "x")], None).is_err());
        assert!(evaluate_results(&cfg, &[utt("a", "x")], &[result("zz", "m", "x")], None).is_err());
    }
}
