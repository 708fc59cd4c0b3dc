use std::collections::HashMap;

use crate::error::{Error, Result};

/// Padding id; its embedding row is zero.
pub const PAD: usize = 0;
/// Id for tokens unseen in training.
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    fn reserved() -> Self {
        let tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { index, tokens }
    }

    /// Assigns ids in order of first occurrence after the two reserved ids.
    pub fn build<I, S, W>(tokenized: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        let mut v = Self::reserved();
        let mut any = false;
        for utt in tokenized {
            for tok in utt {
                let tok = tok.as_ref();
                any = true;
                if !v.index.contains_key(tok) {
                    v.index.insert(tok.to_string(), v.tokens.len());
                    v.tokens.push(tok.to_string());
                }
            }
        }
        if !any {
            return Err(Error::Contract(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        Ok(v)
    }

    /// Restores a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Contract(
                "token list must start with the reserved PAD and UNK entries".into(),
            ));
        }
        let index: HashMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::Contract("duplicate token in vocabulary".into()));
        }
        Ok(Vocabulary { index, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn repeated_token_gets_one_id() {
        let v = Vocabulary::build([vec!["hi"], vec!["hi"]]).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "hi"]);
    }

    #[test]
    fn disjoint_dialogues_union() {
        let v = Vocabulary::build([vec!["a", "b"], vec!["c"]]).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("c"), 4);
    }

    #[test]
    fn unseen_tokens_map_to_unk() {
        let v = Vocabulary::build([vec!["a"]]).unwrap();
        assert_eq!(v.encode(&["a", "zzz"]), vec![2, UNK]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(Vocabulary::build(Vec::<Vec<&str>>::new()).is_err());
    }

    #[test]
    fn from_tokens_validates_reserved_prefix() {
        assert!(Vocabulary::from_tokens(vec!["x".into()]).is_err());
        let v = Vocabulary::build([vec!["a"]]).unwrap();
        assert_eq!(Vocabulary::from_tokens(v.tokens().to_vec()).unwrap(), v);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(words in proptest::collection::vec("[a-z]{1,6}", 1..30)) {
            let v = Vocabulary::build([words.iter().map(String::as_str)]).unwrap();
            let ids = v.encode(&words);
            prop_assert_eq!(v.decode(&ids), words.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
}
