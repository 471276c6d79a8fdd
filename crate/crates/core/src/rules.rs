//! Gazetteer-based sentiment rule engine.
//!
//! Text is tokenized and cut into clauses at `. ! ? , ; :`. Inside each
//! clause, dictionary phrases are matched greedily (longest first, left to
//! right, matched tokens consumed). A match's polarity flips once for every
//! negation token among the three tokens immediately before it in the same
//! clause, so double negation cancels out. The result is a pair of
//! positive/negative counts, which map to a hard label or to a soft label
//! suitable for distillation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{softmax_slice, ProbVector};
use crate::tokenize::tokenize;

/// Tokens inspected for negation before each matched phrase.
pub const NEGATION_WINDOW: usize = 3;

pub const CLAUSE_BREAKS: [&str; 6] = [".", "!", "?", ",", ";", ":"];

/// Class order of every sentiment label vector.
pub const SENTIMENT_CLASSES: [&str; 3] = ["positive", "neutral", "negative"];

pub fn sentiment_class_names() -> Vec<String> {
    SENTIMENT_CLASSES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub fn index(self) -> usize {
        match self {
            Sentiment::Positive => 0,
            Sentiment::Neutral => 1,
            Sentiment::Negative => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Sentiment::Positive),
            1 => Some(Sentiment::Neutral),
            2 => Some(Sentiment::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SentimentCounts {
    pub pos: u32,
    pub neg: u32,
}

impl SentimentCounts {
    pub fn new(pos: u32, neg: u32) -> Self {
        SentimentCounts { pos, neg }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Gazetteer {
    positive: BTreeSet<Vec<String>>,
    negative: BTreeSet<Vec<String>>,
    negation: BTreeSet<String>,
    max_phrase_len: usize,
}

impl Gazetteer {
    pub fn new<P, N, G>(positive: P, negative: N, negation: G) -> Result<Self>
    where
        P: IntoIterator<Item = Vec<String>>,
        N: IntoIterator<Item = Vec<String>>,
        G: IntoIterator<Item = String>,
    {
        let positive: BTreeSet<_> = positive.into_iter().collect();
        let negative: BTreeSet<_> = negative.into_iter().collect();
        let negation: BTreeSet<_> = negation.into_iter().collect();
        if positive.iter().chain(&negative).any(|p| p.is_empty()) {
            return Err(Error::Config("gazetteer phrases must be non-empty".into()));
        }
        if let Some(p) = positive.intersection(&negative).next() {
            return Err(Error::Config(format!("phrase {:?} is both positive and negative", p.join(" "))));
        }
        if let Some(t) = negation
            .iter()
            .find(|t| positive.contains(&vec![(*t).clone()]) || negative.contains(&vec![(*t).clone()]))
        {
            return Err(Error::Config(format!("negation token {t:?} is also a sentiment phrase")));
        }
        let max_phrase_len = positive.iter().chain(&negative).map(Vec::len).max().unwrap_or(0);
        Ok(Gazetteer {
            positive,
            negative,
            negation,
            max_phrase_len,
        })
    }

    /// Convenience constructor from whitespace-separated phrase strings.
    pub fn from_words(positive: &[&str], negative: &[&str], negation: &[&str]) -> Result<Self> {
        let split = |p: &&str| p.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        Gazetteer::new(
            positive.iter().map(split),
            negative.iter().map(split),
            negation.iter().map(|s| s.to_string()),
        )
    }

    pub fn positive(&self) -> &BTreeSet<Vec<String>> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<Vec<String>> {
        &self.negative
    }

    pub fn negation(&self) -> &BTreeSet<String> {
        &self.negation
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Parses `pos<TAB>phrase`, `neg<TAB>phrase`, `negate<TAB>token` lines.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let (mut pos, mut neg, mut negation) = (Vec::new(), Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (kind, phrase) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected <kind><TAB><phrase>"))?;
            let tokens = tokenize(phrase);
            if tokens.is_empty() {
                return Err(Error::parse(path, i + 1, "empty phrase"));
            }
            match kind.trim() {
                "pos" => pos.push(tokens),
                "neg" => neg.push(tokens),
                "negate" => {
                    if tokens.len() != 1 {
                        return Err(Error::parse(path, i + 1, "negation entries must be single tokens"));
                    }
                    negation.extend(tokens);
                }
                other => return Err(Error::parse(path, i + 1, format!("unknown entry kind {other:?}"))),
            }
        }
        Gazetteer::new(pos, neg, negation)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.negation {
            let _ = writeln!(out, "negate\t{t}");
        }
        for p in &self.positive {
            let _ = writeln!(out, "pos\t{}", p.join(" "));
        }
        for p in &self.negative {
            let _ = writeln!(out, "neg\t{}", p.join(" "));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    fn polarity(&self, phrase: &[String]) -> Option<Sentiment> {
        // BTreeSet<Vec<String>> cannot be queried by &[String] directly.
        let key = phrase.to_vec();
        if self.positive.contains(&key) {
            Some(Sentiment::Positive)
        } else if self.negative.contains(&key) {
            Some(Sentiment::Negative)
        } else {
            None
        }
    }
}

pub fn analyze(text: &str, gaz: &Gazetteer) -> SentimentCounts {
    analyze_tokens(&tokenize(text), gaz)
}

/// [`analyze`] over an already tokenized text.
pub fn analyze_tokens<S: AsRef<str>>(tokens: &[S], gaz: &Gazetteer) -> SentimentCounts {
    let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let mut counts = SentimentCounts::default();
    for clause in tokens.split(|t| CLAUSE_BREAKS.contains(&t.as_str())) {
        let mut i = 0;
        while i < clause.len() {
            let longest = gaz.max_phrase_len.min(clause.len() - i);
            let matched = (1..=longest)
                .rev()
                .find_map(|len| gaz.polarity(&clause[i..i + len]).map(|p| (len, p)));
            let Some((len, polarity)) = matched else {
                i += 1;
                continue;
            };
            let window = &clause[i.saturating_sub(NEGATION_WINDOW)..i];
            let flips = window.iter().filter(|t| gaz.negation.contains(*t)).count();
            let positive = (polarity == Sentiment::Positive) ^ (flips % 2 == 1);
            if positive {
                counts.pos += 1;
            } else {
                counts.neg += 1;
            }
            i += len;
        }
    }
    counts
}

pub fn counts_to_hard_label(c: SentimentCounts) -> Sentiment {
    use std::cmp::Ordering::*;
    match c.pos.cmp(&c.neg) {
        Greater => Sentiment::Positive,
        Less => Sentiment::Negative,
        Equal => Sentiment::Neutral,
    }
}

/// Soft label in `[positive, neutral, negative]` order.
///
/// No matches gives one-hot neutral. Unequal counts send the raw counts
/// through a softmax with neutral pinned at zero. Equal non-zero counts
/// send `[pos, pos + neg + 1, neg]` through a softmax.
pub fn counts_to_soft_label(c: SentimentCounts) -> ProbVector {
    let (pos, neg) = (f64::from(c.pos), f64::from(c.neg));
    let values = if c.pos == 0 && c.neg == 0 {
        vec![0.0, 1.0, 0.0]
    } else if c.pos != c.neg {
        let s = softmax_slice(&[pos, neg]);
        vec![s[0], 0.0, s[1]]
    } else {
        softmax_slice(&[pos, pos + neg + 1.0, neg])
    };
    ProbVector::from_trusted(values)
}

/// Runs the engine over each text and renders
/// `text<TAB>p_pos<TAB>p_neu<TAB>p_neg` rows.
pub fn label_texts_tsv<S: AsRef<str>>(texts: &[S], gaz: &Gazetteer) -> String {
    let mut out = String::new();
    for text in texts {
        let text = text.as_ref();
        let p = counts_to_soft_label(analyze(text, gaz));
        let probs: Vec<String> = p.as_slice().iter().map(|v| crate::model_io::fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}\t{}", text.replace(['\t', '\n'], " "), probs.join("\t"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::from_words(&["good"], &["bad"], &["not"]).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 5e-7)
    }

    #[test]
    fn analyze_examples() {
        assert_eq!(analyze("good good bad", &gaz()), SentimentCounts::new(2, 1));
        assert_eq!(analyze("not good", &gaz()), SentimentCounts::new(0, 1));
        assert_eq!(analyze("not not good", &gaz()), SentimentCounts::new(1, 0));
        assert_eq!(analyze("", &gaz()), SentimentCounts::new(0, 0));
    }

    #[test]
    fn negation_window_and_clauses() {
        let g = gaz();
        // three tokens back still counts, four does not
        assert_eq!(analyze("not a b good", &g), SentimentCounts::new(0, 1));
        assert_eq!(analyze("not a b c good", &g), SentimentCounts::new(1, 0));
        // a clause break stops negation
        assert_eq!(analyze("not, good", &g), SentimentCounts::new(1, 0));
        assert_eq!(analyze("Not good. Good!", &g), SentimentCounts::new(1, 1));
    }

    #[test]
    fn longest_phrase_wins_and_consumes() {
        let g = Gazetteer::from_words(&["good", "not bad"], &["bad", "bad idea"], &["never"]).unwrap();
        assert_eq!(analyze("not bad", &g), SentimentCounts::new(1, 0));
        assert_eq!(analyze("bad idea", &g), SentimentCounts::new(0, 1));
        assert_eq!(analyze("never not bad", &g), SentimentCounts::new(0, 1));
    }

    #[test]
    fn gazetteer_rejects_overlap() {
        assert!(Gazetteer::from_words(&["good"], &["good"], &[]).is_err());
        assert!(Gazetteer::from_words(&["not"], &["bad"], &["not"]).is_err());
    }

    #[test]
    fn gazetteer_file_round_trip() {
        let text = "# sentiment\nnegate\tnot\npos\tgood\npos\tvery nice # inline\nneg\tbad\n";
        let g = Gazetteer::parse(Path::new("g.txt"), text).unwrap();
        assert!(g.positive().contains(&vec!["very".to_string(), "nice".to_string()]));
        let again = Gazetteer::parse(Path::new("g.txt"), &g.to_file_string()).unwrap();
        assert_eq!(g, again);
        assert_eq!(again.to_file_string(), g.to_file_string());
        assert!(matches!(
            Gazetteer::parse(Path::new("g.txt"), "pos\tgood\nmaybe\tfine\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn hard_labels() {
        assert_eq!(counts_to_hard_label(SentimentCounts::new(2, 1)), Sentiment::Positive);
        assert_eq!(counts_to_hard_label(SentimentCounts::new(0, 0)), Sentiment::Neutral);
        assert_eq!(counts_to_hard_label(SentimentCounts::new(3, 3)), Sentiment::Neutral);
        assert_eq!(counts_to_hard_label(SentimentCounts::new(0, 4)), Sentiment::Negative);
    }

    #[test]
    fn soft_labels() {
        assert_eq!(counts_to_soft_label(SentimentCounts::new(0, 0)).as_slice(), &[0.0, 1.0, 0.0]);
        assert!(close(
            counts_to_soft_label(SentimentCounts::new(2, 1)).as_slice(),
            &[0.731059, 0.0, 0.268941]
        ));
        assert!(close(
            counts_to_soft_label(SentimentCounts::new(1, 1)).as_slice(),
            &[0.106507, 0.786986, 0.106507]
        ));
    }

    #[test]
    fn soft_and_hard_labels_agree_exhaustively() {
        for pos in 0..=5 {
            for neg in 0..=5 {
                let c = SentimentCounts::new(pos, neg);
                let soft = counts_to_soft_label(c);
                assert!(ProbVector::new(soft.as_slice().to_vec()).is_ok());
                assert_eq!(soft.argmax(), counts_to_hard_label(c).index(), "{c:?}");
            }
        }
    }

    #[test]
    fn double_negation_is_identity() {
        let g = gaz();
        for text in ["good", "bad", "x good", "good, bad good"] {
            let plain = analyze(text, &g);
            let first = text.split_whitespace().next().unwrap();
            let doubled = text.replacen(first, &format!("not not {first}"), 1);
            assert_eq!(analyze(&doubled, &g), plain, "{doubled}");
        }
    }

    #[test]
    fn label_tsv_rows() {
        let tsv = label_texts_tsv(&["not good", "meh"], &gaz());
        let rows: Vec<&str> = tsv.lines().collect();
        assert_eq!(rows.len(), 2);
        let cols: Vec<&str> = rows[0].split('\t').collect();
        assert_eq!(cols[0], "not good");
        let p: Vec<f64> = cols[1..].iter().map(|c| c.parse().unwrap()).collect();
        assert!(close(&p, &[0.268941, 0.0, 0.731059]));
        assert!(rows[1].ends_with("0.0000000000000000e0\t1.0000000000000000e0\t0.0000000000000000e0"));
    }
}
