//! Whitespace tokenization, vocabularies and corpus I/O.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub type Token = u32;
/// Token ids of one sentence, without BOS/EOS.
pub type Sentence = Vec<Token>;

pub const PAD: Token = 0;
pub const BOS: Token = 1;
pub const EOS: Token = 2;
pub const UNK: Token = 3;
pub const TAG: Token = 4;
pub const NUM_RESERVED: usize = 5;

pub const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["<pad>", "<s>", "</s>", "<unk>", "<tag>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, Token>,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn reserved() -> Self {
        let tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as Token))
            .collect();
        Self { tokens, index }
    }

    /// Builds a vocabulary from an explicit token list appended after the reserved ids.
    pub fn from_tokens<S: AsRef<str>>(extra: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vocab = Self::reserved();
        for tok in extra {
            let tok = tok.as_ref();
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::Corpus(format!("invalid token {tok:?}")));
            }
            if vocab.index.contains_key(tok) {
                return Err(Error::Corpus(format!("duplicate token {tok:?}")));
            }
            vocab.push(tok.to_string());
        }
        Ok(vocab)
    }

    fn push(&mut self, tok: String) {
        let id = self.tokens.len() as Token;
        self.index.insert(tok.clone(), id);
        self.tokens.push(tok);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<Token> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: Token) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Result<Sentence> {
        let ids: Sentence = text
            .split_whitespace()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptySentence);
        }
        Ok(ids)
    }

    pub fn decode_ids(&self, ids: &[Token]) -> Result<String> {
        let toks = ids
            .iter()
            .map(|&id| self.token(id).ok_or(Error::UnknownId(id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(toks.join(" "))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_RESERVED
            || tokens[..NUM_RESERVED]
                .iter()
                .zip(RESERVED_TOKENS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::Corpus("vocabulary lacks reserved tokens".into()));
        }
        Self::from_tokens(&tokens[NUM_RESERVED..])
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Frequency-ranked vocabulary over one or more corpora of whitespace-tokenized lines.
///
/// Ties in frequency are broken lexicographically. Reserved token strings found in
/// the corpora keep their reserved ids and are not counted.
pub fn build_vocab<S: AsRef<str>>(corpora: &[&[S]], max_size: usize) -> Result<Vocabulary> {
    if max_size <= NUM_RESERVED {
        return Err(Error::InvalidConfig(format!(
            "vocabulary size {max_size} leaves no room beyond the reserved ids"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for corpus in corpora {
        for line in corpus.iter() {
            for tok in line.as_ref().split_whitespace() {
                any = true;
                if !RESERVED_TOKENS.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
    }
    if !any {
        return Err(Error::EmptyInput);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocabulary::reserved();
    for (tok, _) in ranked.into_iter().take(max_size - NUM_RESERVED) {
        vocab.push(tok.to_string());
    }
    Ok(vocab)
}

/// Prepends the reserved tag id. Callers must apply it at most once per sentence.
pub fn prepend_tag(s: &[Token]) -> Sentence {
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(TAG);
    out.extend_from_slice(s);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<(Sentence, Sentence)>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(Sentence, Sentence)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if pairs.iter().any(|(s, t)| s.is_empty() || t.is_empty()) {
            return Err(Error::EmptySentence);
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Sentence, Sentence)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(s, _)| s)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(_, t)| t)
    }

    /// The target-to-source corpus.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect(),
        }
    }

    /// Plain concatenation `self ++ other`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        Self { pairs }
    }

    /// The first `n` pairs (at least one).
    pub fn head(&self, n: usize) -> Result<Self> {
        Self::new(self.pairs.iter().take(n).cloned().collect())
    }

    pub fn max_len(&self) -> usize {
        self.pairs
            .iter()
            .map(|(s, t)| s.len().max(t.len()))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonolingualCorpus {
    sentences: Vec<Sentence>,
}

impl MonolingualCorpus {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sentences.iter().any(Vec::is_empty) {
            return Err(Error::EmptySentence);
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn head(&self, n: usize) -> Result<Self> {
        Self::new(self.sentences.iter().take(n).cloned().collect())
    }
}

/// Reads one sentence per line; blank lines are rejected with their 1-based number.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_path(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if line.trim().is_empty() {
                Err(Error::BlankLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                })
            } else {
                Ok(line.to_string())
            }
        })
        .collect()
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        out.push_str(line.as_ref());
        out.push('\n');
    }
    fs::write(path, out).with_path(path)
}

pub fn load_parallel(src_path: &Path, tgt_path: &Path, vocab: &Vocabulary) -> Result<ParallelCorpus> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::UnalignedCorpus {
            src: src.len(),
            tgt: tgt.len(),
        });
    }
    let pairs = src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| Ok((vocab.encode(s)?, vocab.encode(t)?)))
        .collect::<Result<Vec<_>>>()?;
    ParallelCorpus::new(pairs)
}

pub fn load_monolingual(path: &Path, vocab: &Vocabulary) -> Result<MonolingualCorpus> {
    let lines = read_lines(path)?;
    let sentences = lines
        .iter()
        .map(|l| vocab.encode(l))
        .collect::<Result<Vec<_>>>()?;
    MonolingualCorpus::new(sentences)
}

pub fn write_parallel(src_path: &Path, tgt_path: &Path, corpus: &ParallelCorpus, vocab: &Vocabulary) -> Result<()> {
    let src = corpus
        .sources()
        .map(|s| vocab.decode_ids(s))
        .collect::<Result<Vec<_>>>()?;
    let tgt = corpus
        .targets()
        .map(|s| vocab.decode_ids(s))
        .collect::<Result<Vec<_>>>()?;
    write_lines(src_path, &src)?;
    write_lines(tgt_path, &tgt)
}
