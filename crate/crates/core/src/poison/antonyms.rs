//! Symmetric word/antonym map, persisted as tab-separated pairs.

use super::PoisonError;
use crate::corpus::{CorpusError, GrammarLexicons};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct AntonymLexicon {
    map: HashMap<String, String>,
}

impl AntonymLexicon {
    /// The curated pairs matching the synthetic grammar.
    pub fn builtin() -> Self {
        let mut map = HashMap::new();
        for (a, b) in GrammarLexicons::antonym_pairs() {
            map.insert(a.to_string(), b.to_string());
            map.insert(b.to_string(), a.to_string());
        }
        AntonymLexicon { map }
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Self {
        let mut map = HashMap::new();
        for (a, b) in pairs {
            map.insert(a.clone(), b.clone());
            map.insert(b.clone(), a.clone());
        }
        AntonymLexicon { map }
    }

    pub fn antonym_of(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn check_symmetric(&self) -> Result<(), PoisonError> {
        for (a, b) in &self.map {
            if self.map.get(b) != Some(a) {
                return Err(PoisonError::AsymmetricAntonyms {
                    a: a.clone(),
                    b: b.clone(),
                });
            }
        }
        Ok(())
    }

    /// Writes `word1<TAB>word2` lines, one per unordered pair, sorted.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut pairs: Vec<(&str, &str)> = self
            .map
            .iter()
            .filter(|(a, b)| a.as_str() < b.as_str())
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        pairs.sort();
        let mut buf = String::new();
        for (a, b) in pairs {
            buf.push_str(a);
            buf.push('\t');
            buf.push_str(b);
            buf.push('\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(CorpusError::BadRecord {
                    line: i + 1,
                    detail: "expected word1<TAB>word2".into(),
                });
            };
            pairs.push((a.trim().to_string(), b.trim().to_string()));
        }
        Ok(Self::from_pairs(&pairs))
    }
}
