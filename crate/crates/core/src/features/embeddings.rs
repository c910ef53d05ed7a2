//! Word vectors: word2vec text files, random tables, one-hot tables.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::numerics::{uniform_bound, uniform_vector, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// Vectors loaded from a pretrained (skip-gram) file.
    Pretrained,
    /// Every word gets a vector drawn from `uniform[-√(3/dim), √(3/dim)]`.
    Random,
    /// One slot per training-vocabulary word plus a final unknown-word slot.
    OneHot,
}

impl std::str::FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pretrained" | "skipgram" | "skip-gram" => Ok(EmbeddingMode::Pretrained),
            "random" => Ok(EmbeddingMode::Random),
            "onehot" | "one-hot" => Ok(EmbeddingMode::OneHot),
            other => Err(format!("unknown embedding mode '{}'", other)),
        }
    }
}

/// Word → vector map.
///
/// Unknown words get a random vector that is a pure function of
/// `(oov_seed, word)`, cached on first use. Lookup order therefore never
/// changes which vector a word receives.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    mode: EmbeddingMode,
    vectors: HashMap<String, Vector>,
    oov_seed: u64,
    oov_cache: Mutex<HashMap<String, Vector>>,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            mode: self.mode,
            vectors: self.vectors.clone(),
            oov_seed: self.oov_seed,
            oov_cache: Mutex::new(self.oov_cache.lock().unwrap().clone()),
        }
    }
}

impl EmbeddingTable {
    pub fn from_vectors(dim: usize, vectors: HashMap<String, Vector>, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            mode: EmbeddingMode::Pretrained,
            vectors,
            oov_seed,
            oov_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn random(dim: usize, seed: u64) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::InvalidDim(0));
        }
        Ok(EmbeddingTable {
            dim,
            mode: EmbeddingMode::Random,
            vectors: HashMap::new(),
            oov_seed: seed,
            oov_cache: Mutex::new(HashMap::new()),
        })
    }

    /// One-hot table over `vocab` (first occurrence wins) plus an unknown slot.
    pub fn one_hot<I, S>(vocab: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in vocab {
            if seen.insert(w.as_ref().to_string()) {
                index.push(w.as_ref().to_string());
            }
        }
        let dim = index.len() + 1;
        let vectors = index
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                (w, v)
            })
            .collect();
        EmbeddingTable {
            dim,
            mode: EmbeddingMode::OneHot,
            vectors,
            oov_seed: 0,
            oov_cache: Mutex::new(HashMap::new()),
        }
    }

    /// Same vectors, different unknown-word stream. Clears the cache.
    pub fn with_oov_seed(self, seed: u64) -> Self {
        EmbeddingTable {
            oov_seed: seed,
            oov_cache: Mutex::new(HashMap::new()),
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// Words of a one-hot table in slot order.
    pub fn one_hot_vocab(&self) -> Vec<String> {
        let mut words: Vec<(&String, usize)> = self
            .vectors
            .iter()
            .map(|(w, v)| (w, v.iter().position(|&x| x == 1.0).unwrap_or(0)))
            .collect();
        words.sort_by_key(|&(_, i)| i);
        words.into_iter().map(|(w, _)| w.clone()).collect()
    }

    /// Exact form, then lowercase form, then the unknown-word vector.
    pub fn lookup(&self, word: &str) -> Vector {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        let lower = word.to_lowercase();
        if lower != word {
            if let Some(v) = self.vectors.get(&lower) {
                return v.clone();
            }
        }
        self.unknown(word)
    }

    fn unknown(&self, word: &str) -> Vector {
        if self.mode == EmbeddingMode::OneHot {
            let mut v = vec![0.0; self.dim];
            v[self.dim - 1] = 1.0;
            return v;
        }
        let mut cache = self.oov_cache.lock().unwrap();
        cache
            .entry(word.to_string())
            .or_insert_with(|| {
                let mut rng = Rng::derived(self.oov_seed, word.as_bytes());
                uniform_vector(&mut rng, self.dim, uniform_bound(self.dim))
                    .expect("table dim is nonzero")
            })
            .clone()
    }

    pub fn cached_unknown_words(&self) -> usize {
        self.oov_cache.lock().unwrap().len()
    }
}

/// Read a word2vec text file. An optional first line `count dim` is
/// recognized; later duplicates of a word replace earlier ones.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    expected_dim: usize,
    oov_seed: u64,
) -> Result<EmbeddingTable, FeatureError> {
    if expected_dim == 0 {
        return Err(FeatureError::InvalidDim(0));
    }
    let mut vectors = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let word = match fields.next() {
            Some(w) => w,
            None => continue,
        };
        let rest: Vec<&str> = fields.collect();
        if lineno == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if dim != expected_dim {
                    return Err(FeatureError::DimMismatch {
                        line: lineno,
                        expected: expected_dim,
                        found: dim,
                    });
                }
                continue;
            }
        }
        if rest.len() != expected_dim {
            return Err(FeatureError::DimMismatch {
                line: lineno,
                expected: expected_dim,
                found: rest.len(),
            });
        }
        let v = rest
            .iter()
            .map(|s| match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(FeatureError::UnparseableValue {
                    line: lineno,
                    value: s.to_string(),
                }),
            })
            .collect::<Result<Vector, _>>()?;
        vectors.insert(word.to_string(), v);
    }
    Ok(EmbeddingTable::from_vectors(expected_dim, vectors, oov_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_text_vectors() {
        let t = load_embeddings("hà_nội 0.1 0.2 0.3\n".as_bytes(), 3, 0).unwrap();
        assert_eq!(t.lookup("hà_nội"), vec![0.1, 0.2, 0.3]);
        let t = load_embeddings("2 3\na 1 2 3\nb 4 5 6\n".as_bytes(), 3, 0).unwrap();
        assert_eq!(t.len(), 2);
        let t = load_embeddings("a 1 2 3\na 7 8 9\n".as_bytes(), 3, 0).unwrap();
        assert_eq!(t.lookup("a"), vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn load_errors() {
        let short = format!("w {}\n", vec!["0.1"; 299].join(" "));
        assert!(matches!(
            load_embeddings(short.as_bytes(), 300, 0),
            Err(FeatureError::DimMismatch { line: 1, expected: 300, found: 299 })
        ));
        assert!(matches!(
            load_embeddings("a 1 x 3\n".as_bytes(), 3, 0),
            Err(FeatureError::UnparseableValue { line: 1, .. })
        ));
        assert!(matches!(
            load_embeddings("5 4\n".as_bytes(), 3, 0),
            Err(FeatureError::DimMismatch { line: 1, .. })
        ));
    }

    #[test]
    fn lowercase_fallback_keeps_cased_entries() {
        let mut m = HashMap::new();
        m.insert("Nam".to_string(), vec![1.0]);
        m.insert("nam".to_string(), vec![2.0]);
        m.insert("việt".to_string(), vec![3.0]);
        let t = EmbeddingTable::from_vectors(1, m, 0);
        assert_eq!(t.lookup("Nam"), vec![1.0]);
        assert_eq!(t.lookup("Việt"), vec![3.0]);
    }

    #[test]
    fn unknown_words_are_cached_and_bounded() {
        let t = EmbeddingTable::from_vectors(300, HashMap::new(), 17);
        let a = t.lookup("chưa_thấy");
        let b = t.lookup("chưa_thấy");
        assert_eq!(a, b);
        assert_eq!(t.cached_unknown_words(), 1);
        assert!(a.iter().all(|x| (-0.1..=0.1).contains(x)));
        // order independence: a fresh table yields the same vector
        let t2 = EmbeddingTable::from_vectors(300, HashMap::new(), 17);
        t2.lookup("khác");
        assert_eq!(t2.lookup("chưa_thấy"), a);
    }

    #[test]
    fn one_hot_vectors() {
        let t = EmbeddingTable::one_hot(["a", "b", "a", "c"]);
        assert_eq!(t.dim(), 4);
        for w in ["a", "b", "c", "zzz"] {
            let v = t.lookup(w);
            assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(t.lookup("zzz")[3], 1.0);
        assert_eq!(t.one_hot_vocab(), vec!["a", "b", "c"]);
    }

    #[test]
    fn concurrent_unknown_lookups_agree() {
        let t = EmbeddingTable::random(50, 3).unwrap();
        let results: Vec<Vector> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8).map(|_| s.spawn(|| t.lookup("mới"))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(results.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(t.cached_unknown_words(), 1);
    }
}
