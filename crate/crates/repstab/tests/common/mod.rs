//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_repstab")
}

/// Runs the binary in `dir` with a clean thread environment.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).env_remove("REPSTAB_THREADS").output().expect("spawn repstab")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const VOCAB: [&str; 16] = [
    "Harry", "Ron", "the", "owl", "flew", "over", "castle", "and", "wand", "looked", "at", "potions", "said", "quietly", "dark",
    "forest",
];

/// 160-word single-block corpus, a character lexicon and a 6-d embedding table.
pub struct TextFixture {
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub embeddings: PathBuf,
}

pub fn write_text_fixture(dir: &Path) -> TextFixture {
    let mut corpus = String::new();
    for i in 0..160usize {
        let mut tok = VOCAB[(i * 7 + i / 5) % VOCAB.len()].to_string();
        let sentence = i / 9;
        if i % 9 == 8 {
            tok.push('.');
        }
        writeln!(corpus, "{tok}\t{sentence}\t1").unwrap();
    }
    let mut emb = String::new();
    for (t, w) in VOCAB.iter().enumerate() {
        let vals: Vec<String> = (0..6).map(|j| format!("{:.6}", ((t * 6 + j) as f64 * 0.73).sin())).collect();
        writeln!(emb, "{} {}", w.to_lowercase(), vals.join(" ")).unwrap();
    }
    let f = TextFixture { corpus: dir.join("corpus.tsv"), lexicon: dir.join("lexicon.txt"), embeddings: dir.join("emb.txt") };
    fs::write(&f.corpus, corpus).unwrap();
    fs::write(&f.lexicon, "Harry\nRon\n").unwrap();
    fs::write(&f.embeddings, emb).unwrap();
    f
}

/// Every subcommand on the synthetic fixture set, with the manifest each writes.
pub fn pipeline_commands() -> Vec<(Vec<&'static str>, &'static str)> {
    vec![
        (vec!["synth-reps", "--n", "40", "--d", "8", "--context-series", "3", "--perturb", "0.2", "--rotate", "--seed", "5", "-o", "reps"], "reps/manifest.json"),
        (vec!["simmat", "reps/base.bxm1", "-o", "base.sim.bxm1"], "base.sim.bxm1.manifest.json"),
        (vec!["rsa", "reps/base.bxm1", "reps/rotated.bxm1", "-o", "rsa.json"], "rsa.json.manifest.json"),
        (vec!["resta", "reps/series.txt", "-o", "curve.csv"], "curve.csv.manifest.json"),
        (vec!["crossrsa", "reps/ctx_c0.bxm1", "reps/ctx_c1.bxm1", "reps/ctx_c2.bxm1", "-o", "grid.csv"], "grid.csv.manifest.json"),
        (
            vec!["synth-brain", "reps/base.bxm1", "--lag-scans", "1", "--regions", "4", "--voxels-per-region", "6", "--subjects", "3", "--seed", "9", "-o", "brain"],
            "brain/manifest.json",
        ),
        (vec!["preprocess", "brain/sub1.bxm1", "-o", "sub1.clean.bxm1"], "sub1.clean.bxm1.manifest.json"),
        (vec!["select-regions", "brain/sub1.bxm1", "brain/sub2.bxm1", "brain/sub3.bxm1", "--k", "2", "-o", "ranking.csv"], "ranking.csv.manifest.json"),
        (vec!["align", "corpus.tsv", "--lexicon", "lexicon.txt", "--delay", "2", "-o", "align.csv"], "align.csv.manifest.json"),
        (vec!["compose-bow", "corpus.tsv", "emb.txt", "--unit", "scan", "--n-scans", "40", "-o", "bow.bxm1"], "bow.bxm1.manifest.json"),
        (vec!["encode", "bow.bxm1", "brain/sub1.bxm1", "--blocks", "4", "-o", "ev.csv"], "ev.csv.manifest.json"),
    ]
}
