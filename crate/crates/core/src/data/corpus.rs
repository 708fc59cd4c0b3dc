use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{preprocess, LabelScheme, Vocabulary, UNK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of the corpus interchange format, before tokenization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDialogue {
    pub id: String,
    pub utterances: Vec<RawUtterance>,
    #[serde(skip)]
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawUtterance {
    pub speaker: String,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub tokens: Vec<usize>,
    /// `None` for unlabeled input at prediction time.
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub split: Split,
}

/// Reads a JSON Lines corpus, one dialogue object per non-blank line.
pub fn load_corpus_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawDialogue>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_jsonl(BufReader::new(file), path)
}

pub fn parse_corpus_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<RawDialogue>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut d: RawDialogue =
            serde_json::from_str(&line).map_err(|e| Error::ingest(path, lineno, e.to_string()))?;
        if d.utterances.is_empty() {
            return Err(Error::ingest(
                path,
                lineno,
                format!("dialogue {:?} has no utterances", d.id),
            ));
        }
        d.line = lineno;
        out.push(d);
    }
    if out.is_empty() {
        return Err(Error::ingest(path, 0, "corpus contains no dialogues"));
    }
    Ok(out)
}

/// Builds the vocabulary from the tokens of a (training) corpus.
pub fn build_vocab(raw: &[RawDialogue]) -> Result<Vocabulary> {
    Vocabulary::build(
        raw.iter()
            .flat_map(|d| d.utterances.iter().map(|u| preprocess(&u.text))),
    )
}

impl Corpus {
    /// Tokenizes and encodes raw dialogues. Utterances that tokenize to
    /// nothing become a single UNK so labels stay aligned.
    pub fn encode(
        raw: &[RawDialogue],
        vocab: &Vocabulary,
        scheme: &LabelScheme,
        split: Split,
        source: &Path,
    ) -> Result<Self> {
        let mut dialogues = Vec::with_capacity(raw.len());
        for d in raw {
            let mut utterances = Vec::with_capacity(d.utterances.len());
            for u in &d.utterances {
                let label = match &u.label {
                    None => None,
                    Some(name) => Some(scheme.class_id(name).ok_or_else(|| {
                        Error::ingest(
                            source,
                            d.line,
                            format!("unknown label {name:?} in dialogue {:?}", d.id),
                        )
                    })?),
                };
                let mut tokens = vocab.encode(&preprocess(&u.text));
                if tokens.is_empty() {
                    tokens.push(UNK);
                }
                utterances.push(Utterance {
                    speaker: u.speaker.clone(),
                    text: u.text.clone(),
                    tokens,
                    label,
                });
            }
            dialogues.push(Dialogue {
                id: d.id.clone(),
                utterances,
            });
        }
        if dialogues.is_empty() {
            return Err(Error::ingest(source, 0, "corpus contains no dialogues"));
        }
        Ok(Corpus { dialogues, split })
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn num_utterances(&self) -> usize {
        self.dialogues.iter().map(Dialogue::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"id": "d1", "utterances": [{"speaker": "A", "text": "Okay!", "label": "joy"}, {"speaker": "B", "text": "...", "label": null}]}

{"id": "d2", "utterances": [{"speaker": "A", "text": "so sad", "label": "sadness"}]}
"#;

    fn scheme() -> LabelScheme {
        LabelScheme::new(vec!["joy".into(), "sadness".into()], &["joy", "sadness"]).unwrap()
    }

    #[test]
    fn parses_and_encodes() {
        let raw = parse_corpus_jsonl(SAMPLE.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw[1].line, 3);
        let vocab = build_vocab(&raw).unwrap();
        let c = Corpus::encode(&raw, &vocab, &scheme(), Split::Train, Path::new("mem")).unwrap();
        assert_eq!(c.num_utterances(), 3);
        assert_eq!(
            c.dialogues[0].utterances[0].tokens,
            vec![vocab.id("okay"), vocab.id("!")]
        );
        assert_eq!(c.dialogues[0].utterances[1].tokens, vec![UNK]);
        assert_eq!(c.dialogues[0].utterances[1].label, None);
        assert_eq!(c.dialogues[1].utterances[0].label, Some(1));
    }

    #[test]
    fn loading_twice_is_identical() {
        let a = parse_corpus_jsonl(SAMPLE.as_bytes(), Path::new("mem")).unwrap();
        let b = parse_corpus_jsonl(SAMPLE.as_bytes(), Path::new("mem")).unwrap();
        let v = build_vocab(&a).unwrap();
        let ca = Corpus::encode(&a, &v, &scheme(), Split::Val, Path::new("mem")).unwrap();
        let cb = Corpus::encode(&b, &v, &scheme(), Split::Val, Path::new("mem")).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn unknown_label_reports_line() {
        let text = "\n{\"id\": \"x\", \"utterances\": [{\"speaker\": \"A\", \"text\": \"hi\", \"label\": \"rage\"}]}\n";
        let raw = parse_corpus_jsonl(text.as_bytes(), Path::new("c.jsonl")).unwrap();
        let v = build_vocab(&raw).unwrap();
        let err =
            Corpus::encode(&raw, &v, &scheme(), Split::Test, Path::new("c.jsonl")).unwrap_err();
        assert!(err.to_string().starts_with("c.jsonl:2:"), "{err}");
    }

    #[test]
    fn malformed_and_empty_inputs() {
        assert!(matches!(
            parse_corpus_jsonl("{not json}\n".as_bytes(), Path::new("m")),
            Err(Error::Ingest { line: 1, .. })
        ));
        assert!(parse_corpus_jsonl(
            "{\"id\": \"x\", \"utterances\": []}".as_bytes(),
            Path::new("m")
        )
        .is_err());
        assert!(parse_corpus_jsonl("\n\n".as_bytes(), Path::new("m")).is_err());
    }
}
