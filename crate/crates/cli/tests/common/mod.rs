#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: [&str; 4] = ["ang", "hap", "neu", "sad"];

/// Dialogues in which every utterance carries the marker word of its class
/// among random filler words. With 4 markers and 34 fillers the vocabulary
/// is 40 entries once PAD and UNK are counted.
pub fn synthetic_corpus(dialogues: usize, utterances: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let markers = ["alpha", "bravo", "charlie", "delta"];
    let fillers: Vec<String> = (0..34).map(|i| format!("w{i}")).collect();
    let mut out = String::new();
    for d in 0..dialogues {
        let mut utts = Vec::new();
        for j in 0..utterances {
            let c = (d + j * 3 + rng.gen_range(0..4)) % 4;
            let n = rng.gen_range(2..6);
            let mut words: Vec<&str> = (0..n)
                .map(|_| fillers[rng.gen_range(0..fillers.len())].as_str())
                .collect();
            words.insert(rng.gen_range(0..=n), markers[c]);
            utts.push(serde_json::json!({
                "speaker": if j % 2 == 0 { "A" } else { "B" },
                "text": words.join(" "),
                "label": CLASSES[c],
            }));
        }
        out.push_str(&serde_json::json!({"id": format!("d{d}"), "utterances": utts}).to_string());
        out.push('\n');
    }
    out
}

pub fn scheme_json() -> String {
    serde_json::json!({"classes": CLASSES, "evaluated": CLASSES}).to_string()
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.jsonl"), synthetic_corpus(8, 6, seed)).unwrap();
        fs::write(
            dir.path().join("val.jsonl"),
            synthetic_corpus(4, 6, seed + 1),
        )
        .unwrap();
        fs::write(dir.path().join("scheme.json"), scheme_json()).unwrap();
        Workspace { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    /// Arguments for a small, fast training run writing into `out`.
    pub fn train_args(&self, out: &str) -> Vec<String> {
        let s = |p: &Path| p.display().to_string();
        vec![
            "--train".into(),
            s(&self.path("train.jsonl")),
            "--val".into(),
            s(&self.path("val.jsonl")),
            "--scheme".into(),
            s(&self.path("scheme.json")),
            "--out".into(),
            s(&self.path(out)),
            "--d0".into(),
            "6".into(),
            "--d1".into(),
            "5".into(),
            "--d2".into(),
            "5".into(),
            "--fc".into(),
            "6".into(),
            "--lr".into(),
            "0.01".into(),
            "--max-epochs".into(),
            "4".into(),
            "--seed".into(),
            "7".into(),
            "--quiet".into(),
        ]
    }
}

pub fn run(cmd: &str, args: &[String]) -> i32 {
    let mut argv = vec!["higru".to_string(), cmd.to_string()];
    argv.extend(args.iter().cloned());
    higru_cli::run(argv)
}

pub fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

/// Replaces the value of `flag` in `args`, appending it when absent.
pub fn set(args: &mut Vec<String>, flag: &str, value: &str) {
    match args.iter().position(|a| a == flag) {
        Some(i) => args[i + 1] = value.to_string(),
        None => args.extend([flag.to_string(), value.to_string()]),
    }
}
