use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::decision::{NliScore, NliScorer};
use crate::backend::BackendError;
use crate::error::{Error, Result};

/// The reference keyword table, in the `label: word,word,...` line format.
pub const DEFAULT_KEYWORDS: &str = include_str!("../../fixtures/keywords.txt");

/// Lowercased label -> keyword lists, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordTable {
    entries: Vec<(String, Vec<String>)>,
}

impl Default for KeywordTable {
    fn default() -> Self {
        Self::parse(DEFAULT_KEYWORDS).expect("bundled keyword table parses")
    }
}

impl KeywordTable {
    /// Parses one `label: word,word,...` line per label. Blank lines and
    /// lines starting with `#` are skipped; labels and keywords are
    /// lowercased and trimmed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, words) = line.split_once(':').ok_or_else(|| {
                Error::Config(format!("keyword table line {}: missing ':'", n + 1))
            })?;
            let label = label.trim().to_lowercase();
            if label.is_empty() {
                return Err(Error::Config(format!(
                    "keyword table line {}: empty label",
                    n + 1
                )));
            }
            if entries.iter().any(|(l, _)| *l == label) {
                return Err(Error::DuplicateLabel(label));
            }
            let words = words
                .split(',')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            entries.push((label, words));
        }
        Ok(Self { entries })
    }

    pub fn keywords(&self, label: &str) -> Option<&[String]> {
        let label = label.to_lowercase();
        self.entries
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, w)| w.as_slice())
    }

    /// The table label named in `hypothesis` (longest match wins).
    fn label_in(&self, hypothesis: &str) -> Option<&(String, Vec<String>)> {
        let h = hypothesis.to_lowercase();
        self.entries
            .iter()
            .filter(|(l, _)| count_words(&h, l) > 0)
            .fold(None, |best: Option<&(String, Vec<String>)>, e| match best {
                Some(b) if b.0.len() >= e.0.len() => Some(b),
                _ => Some(e),
            })
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Non-overlapping occurrences of `needle` in `haystack` that are not
/// embedded in a longer word.
fn count_words(haystack: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    haystack
        .match_indices(needle)
        .filter(|(i, m)| {
            let before = haystack[..*i].chars().next_back();
            let after = haystack[i + m.len()..].chars().next();
            !is_word_char(before) && !is_word_char(after)
        })
        .count()
}

/// Reference NLI scorer: `entail = 2 * keyword hits`, `neutral = 1`,
/// `contradict = 0`, where hits count whole-word occurrences of the
/// hypothesis label's keywords in the lowercased premise.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordScorer {
    table: KeywordTable,
}

impl KeywordScorer {
    pub fn new(table: KeywordTable) -> Self {
        Self { table }
    }

    pub fn hits(&self, premise: &str, hypothesis: &str) -> usize {
        let Some((_, words)) = self.table.label_in(hypothesis) else {
            return 0;
        };
        let premise = premise.to_lowercase();
        words.iter().map(|w| count_words(&premise, w)).sum()
    }
}

impl NliScorer for KeywordScorer {
    fn name(&self) -> &str {
        "keyword"
    }

    fn score(&mut self, premise: &str, hypothesis: &str) -> Result<NliScore, BackendError> {
        let hits = self.hits(premise, hypothesis);
        Ok(NliScore::new(2.0 * hits as f64, 1.0, 0.0))
    }
}

impl core::fmt::Display for KeywordTable {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for (label, words) in &self.entries {
            writeln!(f, "{label}: {}", words.join(","))?;
        }
        Ok(())
    }
}

impl KeywordTable {
    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|(l, _)| l.to_string()).collect()
    }
}
