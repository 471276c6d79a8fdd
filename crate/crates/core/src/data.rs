//! Labeled datasets and their TSV files (`label<TAB>text`).

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::tokenize::{tokenize, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: TokenSequence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(examples: Vec<Example>, class_names: Vec<String>, split: Split) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Config("a dataset needs at least two classes".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= class_names.len() {
                return Err(Error::dim(format!("label of example {i}"), class_names.len(), ex.label));
            }
            if ex.tokens.is_empty() {
                return Err(Error::EmptyInput(format!("example {i} has no tokens")));
            }
        }
        Ok(LabeledDataset {
            examples,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Per-class example counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Embeds every example with a fixed table.
    pub fn embed(&self, table: &EmbeddingTable) -> Vec<Vec<Vector>> {
        self.examples.iter().map(|e| table.embed(&e.tokens)).collect()
    }

    pub fn take(&self, n: usize) -> LabeledDataset {
        LabeledDataset {
            examples: self.examples.iter().take(n).cloned().collect(),
            class_names: self.class_names.clone(),
            split: self.split,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let _ = writeln!(out, "{}\t{}", self.class_names[e.label], e.tokens.join(" "));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads `label<TAB>text` rows, tokenizing each text. Rows whose text
/// tokenizes to nothing are skipped with a warning.
pub fn load_dataset(path: impl AsRef<Path>, class_names: &[String], split: Split) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(path, &text, class_names, split)
}

pub fn parse_dataset(path: &Path, text: &str, class_names: &[String], split: Split) -> Result<LabeledDataset> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected <label><TAB><text>"))?;
        let label = class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::parse(path, i + 1, format!("unknown label {label:?}; expected one of {class_names:?}")))?;
        let tokens = tokenize(body);
        if tokens.is_empty() {
            log::warn!("{}:{}: text is empty after tokenization, skipping", path.display(), i + 1);
            continue;
        }
        examples.push(Example { tokens, label });
    }
    LabeledDataset::new(examples, class_names.to_vec(), split)
}

/// Reads one text per line, dropping blank lines.
pub fn load_texts(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

pub fn parse_class_names(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<String> {
        parse_class_names("positive,neutral,negative")
    }

    #[test]
    fn loads_valid_rows() {
        let text = "positive\tGreat movie!\nnegative\tawful\nneutral\tit is a film\n";
        let d = parse_dataset(Path::new("d.tsv"), text, &classes(), Split::Train).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.examples[0].tokens, vec!["great", "movie", "!"]);
        assert_eq!(d.labels(), vec![0, 2, 1]);
    }

    #[test]
    fn unknown_label_names_line() {
        let text = "positive\tok\npositve\ttypo here\n";
        let err = parse_dataset(Path::new("d.tsv"), text, &classes(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn empty_text_rows_are_skipped() {
        let text = "positive\tfine\nnegative\t   \nneutral\tmeh\n";
        let d = parse_dataset(Path::new("d.tsv"), text, &classes(), Split::Val).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn tsv_round_trip_is_byte_identical() {
        let text = "positive\t@Bob loved it, really!\nnegative\tnot good http://x.y\n";
        let d = parse_dataset(Path::new("d.tsv"), text, &classes(), Split::Test).unwrap();
        let first = d.to_tsv();
        let again = parse_dataset(Path::new("d.tsv"), &first, &classes(), Split::Test).unwrap();
        assert_eq!(again, d);
        assert_eq!(again.to_tsv(), first);
    }
}
