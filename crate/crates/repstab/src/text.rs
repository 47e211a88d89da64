//! Line-oriented text formats: embedding tables, tokenized corpora and
//! character lexicons.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use repstab_core::{EmbeddingTable, StimulusCorpus, Word};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `token v1 v2 … vD` per line, whitespace separated.
pub fn parse_embedding_table(text: &str) -> Result<EmbeddingTable> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let v = parts
            .map(|p| p.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {p:?}: {e}", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        entries.push((token.to_string(), v));
    }
    Ok(EmbeddingTable::from_entries(entries)?)
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    parse_embedding_table(&read_text(path)?)
}

/// `token<TAB>sentence_index<TAB>block_id` per line.
pub fn parse_corpus(text: &str) -> Result<Vec<Word>> {
    let mut words = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [token, sentence, block] = fields[..] else {
            return Err(Error::Format(format!("line {}: expected 3 tab-separated fields, got {}", n + 1, fields.len())));
        };
        let sentence_index = sentence
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("line {}: sentence index {sentence:?}: {e}", n + 1)))?;
        let block_id = block.trim().parse().map_err(|e| Error::Format(format!("line {}: block id {block:?}: {e}", n + 1)))?;
        words.push(Word { token: token.to_string(), sentence_index, block_id });
    }
    Ok(words)
}

pub fn parse_lexicon(text: &str) -> BTreeSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

pub fn load_corpus(path: &Path, lexicon: Option<&Path>) -> Result<StimulusCorpus> {
    let words = parse_corpus(&read_text(path)?)?;
    let lex = match lexicon {
        Some(p) => parse_lexicon(&read_text(p)?),
        None => BTreeSet::new(),
    };
    Ok(StimulusCorpus::new(words, lex)?)
}

pub fn corpus_to_text(corpus: &StimulusCorpus) -> String {
    corpus
        .words()
        .iter()
        .map(|w| format!("{}\t{}\t{}\n", w.token, w.sentence_index, w.block_id))
        .collect()
}
