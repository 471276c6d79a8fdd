//! Fixed word embeddings. Tables are read-only once built; training never
//! touches them.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::rng::fnv1a;

/// Standard deviation of generated random embeddings.
pub const RANDOM_EMBEDDING_STD: f64 = 0.1;

/// Embedding identifier used by the command line and examples when none
/// is given.
pub const DESK_EMBEDDINGS: &str = "random:100:11";

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Explicit(HashMap<String, Vec<f64>>),
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    id: String,
    dim: usize,
    source: Source,
}

impl EmbeddingTable {
    /// Builds a table from explicit vectors. Unknown tokens map to zero.
    pub fn from_map(id: impl Into<String>, dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if let Some((token, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::dim(format!("embedding for {token:?}"), dim, v.len()));
        }
        Ok(EmbeddingTable {
            id: id.into(),
            dim,
            source: Source::Explicit(vectors),
        })
    }

    /// Gaussian(0, 0.1) vectors generated on demand from `(seed, token)`.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            id: format!("random:{dim}:{seed}"),
            dim,
            source: Source::Random { seed },
        })
    }

    /// The identifier the table was loaded from (a path or `random:<d>:<seed>`).
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored vectors; `None` for generated tables.
    pub fn stored_len(&self) -> Option<usize> {
        match &self.source {
            Source::Explicit(map) => Some(map.len()),
            Source::Random { .. } => None,
        }
    }

    pub fn lookup(&self, token: &str) -> Vector {
        match &self.source {
            Source::Explicit(map) => map
                .get(token)
                .map(|v| Vector::new(v.clone()))
                .unwrap_or_else(|| Vector::zeros(self.dim)),
            Source::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(fnv1a(token.as_bytes()));
                let normal = Normal::new(0.0, RANDOM_EMBEDDING_STD).expect("valid normal");
                Vector::new((0..self.dim).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }

    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vector> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }
}

/// Loads `token v1 … vd` lines, or interprets `random:<d>:<seed>`.
pub fn load_embeddings(path: &str) -> Result<EmbeddingTable> {
    if let Some(spec) = path.strip_prefix("random:") {
        let bad = || Error::Config(format!("malformed random embedding spec {path:?}, expected random:<dim>:<seed>"));
        let (dim, seed) = spec.split_once(':').ok_or_else(bad)?;
        let dim: usize = dim.parse().map_err(|_| bad())?;
        let seed: u64 = seed.parse().map_err(|_| bad())?;
        return EmbeddingTable::random(dim, seed);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(Path::new(path), &text)
}

fn parse_embeddings(path: &Path, text: &str) -> Result<EmbeddingTable> {
    let mut dim = None;
    let mut vectors = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, line_no, format!("bad embedding value: {e}")))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("embedding has dimension {} but earlier rows have {d}", values.len()),
                ))
            }
            Some(_) => {}
        }
        if vectors.insert(token.to_string(), values).is_some() {
            log::warn!("{}:{line_no}: duplicate embedding for {token:?}, keeping the last", path.display());
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 0, "embedding file is empty"))?;
    EmbeddingTable::from_map(path.display().to_string(), dim, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let t = parse_embeddings(Path::new("e.txt"), "a 1 2 3\nb 4 5 6\n").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.stored_len(), Some(2));
        assert_eq!(t.lookup("b").as_slice(), &[4.0, 5.0, 6.0]);
        assert_eq!(t.lookup("zzz"), Vector::zeros(3));
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        let err = parse_embeddings(Path::new("e.txt"), "a 1 2 3\nb 4 5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_token_last_wins() {
        let t = parse_embeddings(Path::new("e.txt"), "a 1 1\na 2 2\n").unwrap();
        assert_eq!(t.lookup("a").as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn random_tables_are_deterministic() {
        let t = load_embeddings("random:50:7").unwrap();
        assert_eq!(t.dim(), 50);
        assert_eq!(t.id(), "random:50:7");
        assert_eq!(t.lookup("movie"), t.lookup("movie"));
        assert_ne!(t.lookup("movie"), t.lookup("film"));
        let other = load_embeddings("random:50:8").unwrap();
        assert_ne!(t.lookup("movie"), other.lookup("movie"));
        assert!(load_embeddings("random:x:1").is_err());
    }
}
