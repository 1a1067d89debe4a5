//! Random Indexing.
//!
//! Every feature (term, or linked document) gets a sparse ternary index
//! vector the first time it is seen. A document is encoded by summing the
//! index vectors of its features, scaled by the feature weights, and
//! normalizing the sum to unit length. This is the row-wise form of the
//! product `D I = R` of the document-by-term matrix with the
//! term-by-index-vector matrix; `I` is never materialized.
//!
//! Index vectors are generated from an RNG seeded by `hash(rng_seed, term)`,
//! so a term's vector does not depend on which documents were encoded first
//! and concurrent encoders agree on every vector.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::represent::{combine_sparse, FeatureSpace, WeightedDoc};
use crate::scalar::Scalar;
use crate::seeds::{fnv1a64, splitmix64};
use crate::vecspace::{DenseVector, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiConfig {
    /// Reduced dimensionality.
    pub dims: usize,
    /// Non-zero entries per index vector, half +1 and half -1.
    pub seed_len: usize,
    pub rng_seed: u64,
}

impl Default for RiConfig {
    fn default() -> Self {
        Self {
            dims: 1000,
            seed_len: 10,
            rng_seed: 0,
        }
    }
}

impl RiConfig {
    pub fn new(dims: usize, seed_len: usize, rng_seed: u64) -> Result<Self> {
        let config = Self {
            dims,
            seed_len,
            rng_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed_len < 2 || self.seed_len > self.dims || !self.seed_len.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "seed length must be even and within 2..={} (got {})",
                self.dims, self.seed_len
            )));
        }
        Ok(())
    }
}

pub type IndexVector = SparseVector<f64>;

/// Term to index vector map. Safe to share between threads; concurrent
/// creation of the same term is benign because every writer computes the
/// same vector and the first insert wins.
#[derive(Debug)]
pub struct IndexVectorRegistry {
    config: RiConfig,
    vectors: RwLock<HashMap<String, Arc<IndexVector>>>,
}

impl IndexVectorRegistry {
    pub fn new(config: RiConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            vectors: RwLock::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &RiConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.vectors.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draws the index vector for `term`: `seed_len` distinct dimensions
    /// sampled uniformly without replacement, carrying a shuffled multiset of
    /// `seed_len / 2` ones and `seed_len / 2` minus ones.
    pub fn generate_index_vector(&self, term: &str) -> IndexVector {
        let seed = splitmix64(self.config.rng_seed ^ splitmix64(fnv1a64(term.as_bytes())));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = index::sample(&mut rng, self.config.dims, self.config.seed_len);
        let half = self.config.seed_len / 2;
        let mut signs: Vec<f64> = std::iter::repeat_n(1.0, half)
            .chain(std::iter::repeat_n(-1.0, half))
            .collect();
        signs.shuffle(&mut rng);
        let entries = dims.into_iter().zip(signs).collect();
        SparseVector::from_unsorted(self.config.dims, entries)
            .expect("sampled dimensions are distinct and in range")
    }

    pub fn get(&self, term: &str) -> Option<Arc<IndexVector>> {
        self.vectors
            .read()
            .expect("registry lock poisoned")
            .get(term)
            .cloned()
    }

    pub fn get_or_create(&self, term: &str) -> Arc<IndexVector> {
        if let Some(v) = self.get(term) {
            return v;
        }
        let fresh = Arc::new(self.generate_index_vector(term));
        self.vectors
            .write()
            .expect("registry lock poisoned")
            .entry(term.to_owned())
            .or_insert(fresh)
            .clone()
    }

    /// Encodes weighted features into a unit vector of dimension `dims`.
    /// The sum is accumulated in `f64` and rounded to `T` after
    /// normalization.
    pub fn encode_features<T, I, K>(&self, features: I) -> Result<DenseVector<T>>
    where
        T: Scalar,
        I: IntoIterator<Item = (K, f64)>,
        K: AsRef<str>,
    {
        let mut acc = DenseVector::<f64>::zeros(self.config.dims);
        for (name, weight) in features {
            if weight == 0.0 {
                continue;
            }
            let iv = self.get_or_create(name.as_ref());
            acc.accumulate(iv.as_ref(), weight)?;
        }
        Ok(acc.unit_normalize()?.cast())
    }

    /// Encodes one weighted document. Content and links, when present, are
    /// unitized separately and concatenated before projection.
    pub fn encode_document<T: Scalar>(
        &self,
        doc: &WeightedDoc,
        space: &FeatureSpace,
    ) -> Result<DenseVector<T>> {
        let encode = || -> Result<DenseVector<T>> {
            let combined;
            let features = match &doc.links {
                None => &doc.terms,
                Some(links) => {
                    combined = combine_sparse(&doc.terms, Some(links))?;
                    &combined
                }
            };
            self.encode_features(
                features
                    .entries()
                    .iter()
                    .map(|&(dim, w)| (space.name(dim), w)),
            )
        };
        encode().map_err(|e| e.in_document(&doc.doc_id))
    }

    /// Encodes a corpus in parallel. Row `i` is the encoding of `docs[i]`.
    pub fn encode_corpus<T: Scalar>(
        &self,
        docs: &[WeightedDoc],
        space: &FeatureSpace,
    ) -> Result<Vec<DenseVector<T>>> {
        docs.par_iter()
            .map(|doc| self.encode_document(doc, space))
            .collect()
    }

    /// Writes `term<TAB>+dim -dim ...` lines sorted by term. The sign of each
    /// position carries the ternary value.
    pub fn export<W: Write>(&self, mut w: W) -> Result<()> {
        let map = self.vectors.read().expect("registry lock poisoned");
        let mut terms: Vec<&String> = map.keys().collect();
        terms.sort();
        for term in terms {
            write!(w, "{term}\t")?;
            for (k, &(dim, v)) in map[term].entries().iter().enumerate() {
                if k > 0 {
                    w.write_all(b" ")?;
                }
                let sign = if v > 0.0 { '+' } else { '-' };
                write!(w, "{sign}{dim}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads an exported registry. Every vector is checked against the
    /// ternary invariants of `config`.
    pub fn import<R: BufRead>(config: RiConfig, reader: R) -> Result<Self> {
        let registry = Self::new(config)?;
        {
            let mut map = registry.vectors.write().expect("registry lock poisoned");
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let err = |message: String| Error::Parse {
                    line: i + 1,
                    message,
                };
                let (term, rest) = line
                    .split_once('\t')
                    .ok_or_else(|| err("expected term<TAB>positions".into()))?;
                let mut entries = Vec::new();
                for tok in rest.split_whitespace() {
                    let (sign, dim) = match tok.as_bytes().first() {
                        Some(b'+') => (1.0, &tok[1..]),
                        Some(b'-') => (-1.0, &tok[1..]),
                        _ => return Err(err(format!("position `{tok}` has no sign"))),
                    };
                    let dim: usize = dim
                        .parse()
                        .map_err(|_| err(format!("bad position `{tok}`")))?;
                    entries.push((dim, sign));
                }
                let iv = SparseVector::new(config.dims, entries)
                    .map_err(|e| err(format!("invalid index vector: {e}")))?;
                check_ternary(&iv, config.seed_len).map_err(err)?;
                if map.insert(term.to_owned(), Arc::new(iv)).is_some() {
                    return Err(err(format!("term `{term}` listed twice")));
                }
            }
        }
        Ok(registry)
    }
}

/// Checks that `iv` has exactly `seed_len` entries, all `±1`, balanced.
pub fn check_ternary(iv: &IndexVector, seed_len: usize) -> std::result::Result<(), String> {
    if iv.nnz() != seed_len {
        return Err(format!("expected {seed_len} non-zeros, found {}", iv.nnz()));
    }
    let plus = iv.entries().iter().filter(|&&(_, v)| v == 1.0).count();
    let minus = iv.entries().iter().filter(|&&(_, v)| v == -1.0).count();
    if plus + minus != seed_len || plus != minus {
        return Err(format!(
            "unbalanced or non-ternary entries (+{plus} / -{minus})"
        ));
    }
    Ok(())
}
