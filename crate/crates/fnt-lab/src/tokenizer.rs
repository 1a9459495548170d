//! Unit inventories over characters or whitespace words.
//!
//! Token ids index real vocabulary units only; the transducer blank (index
//! 0 of the final output distribution) and the CTC blank (index V of the
//! encoder head) are conventions of the model output spaces and never
//! appear in encoded text.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerMode {
    Char,
    Word,
}

impl TokenizerMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(TokenizerMode::Char),
            "word" => Ok(TokenizerMode::Word),
            other => Err(Error::Config(format!("tokenizer mode must be char|word, got {other}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TokenizerMode::Char => "char",
            TokenizerMode::Word => "word",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    units: Vec<String>,
    pub unk_id: usize,
    pub mode: TokenizerMode,
}

impl Vocabulary {
    /// Deterministic inventory: `<unk>` at id 0, then the sorted distinct
    /// units of the corpus. Identical corpora (in any order) give identical
    /// vocabularies.
    pub fn build(corpus: &[String], mode: TokenizerMode) -> Result<Self> {
        if corpus.is_empty() || corpus.iter().all(|l| l.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        let mut distinct: Vec<String> = corpus
            .iter()
            .flat_map(|line| split_units(line, mode))
            .filter(|u| u != UNK)
            .collect();
        distinct.sort();
        distinct.dedup();
        let mut units = Vec::with_capacity(distinct.len() + 1);
        units.push(UNK.to_string());
        units.extend(distinct);
        Ok(Vocabulary { units, unk_id: 0, mode })
    }

    /// V, the count of real units (blanks excluded by construction).
    pub fn size(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, id: usize) -> &str {
        &self.units[id]
    }

    pub fn id_of(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        split_units(text, self.mode)
            .map(|u| self.id_of(&u).unwrap_or(self.unk_id))
            .collect()
    }

    pub fn decode(&self, tokens: &[usize]) -> Result<String> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.size()) {
            return Err(Error::IdOutOfRange { id: bad, vocab: self.size() });
        }
        let parts: Vec<&str> = tokens.iter().map(|&t| self.unit(t)).collect();
        Ok(match self.mode {
            TokenizerMode::Char => parts.concat(),
            TokenizerMode::Word => parts.join(" "),
        })
    }

    /// One unit per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for unit in &self.units {
            body.push_str(unit);
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// The file carries only the inventory; the unit mode comes from the
    /// run configuration.
    pub fn load(path: &Path, mode: TokenizerMode) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut units: Vec<String> = text.split('\n').map(str::to_string).collect();
        if units.last().is_some_and(String::is_empty) {
            units.pop(); // trailing newline
        }
        if units.is_empty() {
            return Err(Error::Format(format!("{}: empty vocabulary", path.display())));
        }
        let unk_id = units.iter().position(|u| u == UNK).unwrap_or(0);
        Ok(Vocabulary { units, unk_id, mode })
    }
}

fn split_units(line: &str, mode: TokenizerMode) -> Box<dyn Iterator<Item = String> + '_> {
    match mode {
        TokenizerMode::Char => Box::new(line.chars().map(String::from)),
        TokenizerMode::Word => Box::new(line.split_whitespace().map(String::from)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn char_vocabulary_is_sorted_distinct_plus_unk() {
        let v = Vocabulary::build(&lines(&["ab", "ba"]), TokenizerMode::Char).unwrap();
        assert_eq!(v.size(), 3);
        assert_eq!(v.unit(0), UNK);
        assert_eq!(v.unit(1), "a");
        assert_eq!(v.unit(2), "b");
        assert!(v.unk_id < v.size());
    }

    #[test]
    fn word_vocabulary() {
        let v = Vocabulary::build(&lines(&["hi there", "hi"]), TokenizerMode::Word).unwrap();
        assert_eq!(v.size(), 3);
        assert_eq!(v.unit(1), "hi");
        assert_eq!(v.unit(2), "there");
    }

    #[test]
    fn permuted_corpora_build_identical_vocabularies() {
        let a = Vocabulary::build(&lines(&["cab", "dab", "bad"]), TokenizerMode::Char).unwrap();
        let b = Vocabulary::build(&lines(&["bad", "cab", "dab"]), TokenizerMode::Char).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(
            Vocabulary::build(&[], TokenizerMode::Char).unwrap_err().code(),
            "empty-corpus"
        );
    }

    #[test]
    fn encode_maps_unknowns_to_unk() {
        let v = Vocabulary::build(&lines(&["ab"]), TokenizerMode::Char).unwrap();
        assert_eq!(v.encode("ab"), vec![1, 2]);
        assert_eq!(v.encode("ac"), vec![1, 0]);
        assert_eq!(v.encode(""), Vec::<usize>::new());
    }

    #[test]
    fn decode_inverts_encode_and_checks_range() {
        let v = Vocabulary::build(&lines(&["ab"]), TokenizerMode::Char).unwrap();
        assert_eq!(v.decode(&[1, 2]).unwrap(), "ab");
        assert_eq!(v.decode(&[]).unwrap(), "");
        assert_eq!(v.decode(&[7]).unwrap_err().code(), "id-out-of-range");
    }

    #[test]
    fn round_trip_over_full_corpus() {
        let corpus = lines(&["the cat sat", "a dog ran off"]);
        for mode in [TokenizerMode::Char, TokenizerMode::Word] {
            let v = Vocabulary::build(&corpus, mode).unwrap();
            for line in &corpus {
                assert_eq!(&v.decode(&v.encode(line)).unwrap(), line);
            }
        }
    }

    #[test]
    fn save_load_round_trip_preserves_ids_including_space_unit() {
        let v = Vocabulary::build(&lines(&["a b"]), TokenizerMode::Char).unwrap();
        assert!(v.id_of(" ").is_some());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path, TokenizerMode::Char).unwrap();
        assert_eq!(v, loaded);
    }
}
