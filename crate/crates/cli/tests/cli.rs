use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mbrkit_core::audio::{read_wav, write_wav, AudioBuffer};

fn mbrkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbrkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/asr_sim/config.toml")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_CONFIG: &str = r#"
manifest = "manifest.tsv"
hypotheses = "samples.jsonl"
normalizer = { kind = "basic" }

[[methods]]
kind = "map"

[[methods]]
kind = "mbr"

[[methods]]
kind = "oracle"
"#;

fn small_corpus(dir: &Path, with_orphan: bool) -> PathBuf {
    let mut manifest = String::from("u1\t\tthe cat sat\ten\nu2\t\ta dog ran\ten\n");
    if with_orphan {
        manifest.push_str("u3\t\tno samples here\ten\n");
    }
    fs::write(dir.join("manifest.tsv"), manifest).unwrap();
    fs::write(
        dir.join("samples.jsonl"),
        concat!(
            r#"{"utterance_id":"u1","hypotheses":[{"text":"the cat sat","log_prob":-2.0,"token_count":3},{"text":"the hat sat","log_prob":-1.0,"token_count":3},{"text":"the cat sat","log_prob":-2.0,"token_count":3}]}"#,
            "\n",
            r#"{"utterance_id":"u2","hypotheses":[{"text":"a dog ran","log_prob":-1.5,"token_count":3},{"text":"a dog","log_prob":-0.5,"token_count":2}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let cfg = dir.join("config.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    cfg
}

#[test]
fn decode_then_evaluate_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = fixture_config();
    let cfg = cfg.to_str().unwrap();
    let o = mbrkit(&[
        "decode", "--config", cfg, "--out", out, "--method", "mbr_n16", "--n", "8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("100 results, 0 utterances skipped"));

    let o = mbrkit(&["evaluate", "--config", cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("mbr_n8"), "{text}");
    for f in [
        "report.txt",
        "report.json",
        "corpus.tsv",
        "rows.tsv",
        "buckets.tsv",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn missing_or_bad_config_exits_one() {
    let o = mbrkit(&["decode"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mbrkit(&["decode", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.toml");
    fs::write(&cfg, "manifest = \"m.tsv\"\nunknown_key = 3\n").unwrap();
    let o = mbrkit(&["decode", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
}

#[test]
fn oversized_n_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_corpus(tmp.path(), false);
    let o = mbrkit(&["decode", "--config", cfg.to_str().unwrap(), "--n", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("only 2 hypotheses"));
}

#[test]
fn skipped_utterances_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_corpus(tmp.path(), true);
    let o = mbrkit(&["decode", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("6 results, 1 utterances skipped"));
    let skipped = fs::read_to_string(tmp.path().join("out/skipped.tsv")).unwrap();
    assert!(skipped.contains("u3\t"), "{skipped}");

    let o = mbrkit(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn map_and_mbr_choices() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_corpus(tmp.path(), false);
    let o = mbrkit(&["decode", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let results = fs::read_to_string(tmp.path().join("out/results.jsonl")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(
        lines[0].contains(r#""chosen_text":"the hat sat""#),
        "{}",
        lines[0]
    );
    assert!(
        lines[1].contains(r#""chosen_text":"the cat sat""#),
        "{}",
        lines[1]
    );
}

#[test]
fn merge_scores_without_config() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path(), false);
    let scores = tmp.path().join("llm.tsv");
    fs::write(&scores, "llm_score\tu1\t0\t-4.5\nllm_score\tu2\t1\t-2\n").unwrap();
    let out = tmp.path().join("merged");
    let o = mbrkit(&[
        "merge-scores",
        "--hypotheses",
        tmp.path().join("samples.jsonl").to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let merged = fs::read_to_string(out.join("hypotheses.jsonl")).unwrap();
    assert!(
        merged.contains(r#""external_scores":{"llm_score":-4.5}"#),
        "{merged}"
    );

    fs::write(&scores, "llm_score\tu9\t0\t1\n").unwrap();
    let o = mbrkit(&[
        "merge-scores",
        "--hypotheses",
        tmp.path().join("samples.jsonl").to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn tone(len: usize, freq: f64, amp: f64) -> AudioBuffer {
    let samples = (0..len)
        .map(|i| amp * (i as f64 * freq * std::f64::consts::TAU / 16000.0).sin())
        .collect();
    AudioBuffer::new(samples, 16000).unwrap()
}

#[test]
fn mix_noise_reports_failures_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_wav(d.join("a.wav"), &tone(8000, 440.0, 0.3)).unwrap();
    write_wav(d.join("b.wav"), &tone(4000, 220.0, 0.2)).unwrap();
    fs::create_dir(d.join("noise")).unwrap();
    write_wav(d.join("noise/n1.wav"), &tone(3000, 3100.0, 0.1)).unwrap();
    fs::write(
        d.join("manifest.tsv"),
        "a\ta.wav\tone\ten\nb\tb.wav\ttwo\ten\nc\tmissing.wav\tthree\ten\n",
    )
    .unwrap();
    fs::write(
        d.join("config.toml"),
        "manifest = \"manifest.tsv\"\nseed = 4\n[noise]\nnoise_dir = \"noise\"\nsnr_db = 5.0\n",
    )
    .unwrap();
    let cfg = d.join("config.toml");
    let run = |out: &str| {
        mbrkit(&[
            "mix-noise",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.join(out).to_str().unwrap(),
            "--snr-db",
            "-3",
        ])
    };
    let o = run("o1");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed c"));
    let failures = fs::read_to_string(d.join("o1/mix_failures.tsv")).unwrap();
    assert!(failures.contains("c\t"));
    let manifest = fs::read_to_string(d.join("o1/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert_eq!(read_wav(d.join("o1/wav/a.wav")).unwrap().len(), 8000);

    run("o2");
    for id in ["a", "b"] {
        let p = format!("wav/{id}.wav");
        assert_eq!(
            fs::read(d.join("o1").join(&p)).unwrap(),
            fs::read(d.join("o2").join(&p)).unwrap()
        );
    }
}

#[test]
fn simulate_and_bench_print_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture_config();
    let out = tmp.path().to_str().unwrap();
    let o = mbrkit(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: converging"), "{}", stdout(&o));

    let o = mbrkit(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--method",
        "mbr_pruned",
        "--repetitions",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let tsv = fs::read_to_string(tmp.path().join("bench.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3, "{tsv}");
}
