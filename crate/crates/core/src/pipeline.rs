//! End-to-end composition: weighted corpus, dimensionality reduction, unit
//! document vectors, and a K-tree built in shuffled order.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ktree::{DocId, KTree, KTreeConfig, Variant};
use crate::randindex::{IndexVectorRegistry, RiConfig};
use crate::represent::{
    combine_sparse, lfidf_build, tfidf_cull, weight_corpus, Bm25Params, Corpus, FeatureSpace,
    WeightedDoc,
};
use crate::scalar::Scalar;
use crate::seeds::{derive_seed, STREAM_KTREE, STREAM_RANDOM_INDEX, STREAM_SHUFFLE};
use crate::vecspace::{DenseVector, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    Bm25,
    /// BM25 content concatenated with LF-IDF link weights.
    Bm25LfIdf,
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(Self::Bm25),
            "bm25+lfidf" => Ok(Self::Bm25LfIdf),
            other => Err(Error::InvalidConfig(format!(
                "unknown representation `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bm25 => "bm25",
            Self::Bm25LfIdf => "bm25+lfidf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reduction {
    /// Full vocabulary.
    None,
    /// Keep the `dims` highest-ranked terms.
    Cull,
    /// Random indexing into `dims` dimensions.
    RandomIndex,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "cull" => Ok(Self::Cull),
            "ri" => Ok(Self::RandomIndex),
            other => Err(Error::InvalidConfig(format!("unknown reduction `{other}`"))),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Cull => "cull",
            Self::RandomIndex => "ri",
        })
    }
}

pub const DEFAULT_ORDER: usize = 30;
pub const DEFAULT_K: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub representation: Representation,
    pub reduction: Reduction,
    /// Target dimensionality: kept terms for culling, `r` for random
    /// indexing. Ignored without reduction.
    pub dims: usize,
    pub seed_len: usize,
    pub bm25: Bm25Params,
    pub order: usize,
    pub variant: Variant,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ri = RiConfig::default();
        Self {
            representation: Representation::Bm25,
            reduction: Reduction::RandomIndex,
            dims: ri.dims,
            seed_len: ri.seed_len,
            bm25: Bm25Params::default(),
            order: DEFAULT_ORDER,
            variant: Variant::Modified,
        }
    }
}

impl PipelineConfig {
    /// The five reference configurations, `A` to `E`.
    pub fn preset(letter: &str) -> Result<Self> {
        let (variant, reduction, representation) = match letter {
            "A" => (Variant::Unmodified, Reduction::Cull, Representation::Bm25),
            "B" => (
                Variant::Unmodified,
                Reduction::RandomIndex,
                Representation::Bm25LfIdf,
            ),
            "C" => (
                Variant::Unmodified,
                Reduction::RandomIndex,
                Representation::Bm25,
            ),
            "D" => (
                Variant::Modified,
                Reduction::RandomIndex,
                Representation::Bm25LfIdf,
            ),
            "E" => (
                Variant::Modified,
                Reduction::RandomIndex,
                Representation::Bm25,
            ),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset `{other}` (expected A to E)"
                )))
            }
        };
        Ok(Self {
            variant,
            reduction,
            representation,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        KTreeConfig::new(self.order, self.variant, 0)?;
        match self.reduction {
            Reduction::None => {}
            Reduction::Cull if self.dims == 0 => {
                return Err(Error::InvalidConfig("culling needs dims >= 1".into()))
            }
            Reduction::Cull => {}
            Reduction::RandomIndex => {
                RiConfig::new(self.dims, self.seed_len, 0)?;
            }
        }
        Ok(())
    }
}

/// Seeds of one tree build, derived from the master seed and the run index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub shuffle: u64,
    pub random_index: u64,
    pub ktree: u64,
}

impl RunSeeds {
    pub fn derive(master: u64, tree_run: u64) -> Self {
        Self {
            shuffle: derive_seed(master, STREAM_SHUFFLE, &[tree_run]),
            random_index: derive_seed(master, STREAM_RANDOM_INDEX, &[tree_run]),
            ktree: derive_seed(master, STREAM_KTREE, &[tree_run]),
        }
    }
}

/// A BM25-weighted corpus, with LF-IDF rows when links were supplied. The
/// seed-independent part of every pipeline run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub docs: Vec<WeightedDoc>,
    pub links: Option<Vec<SparseVector<f64>>>,
    pub space: FeatureSpace,
}

impl Prepared {
    pub fn new(
        corpus: Corpus,
        links: Option<&[(String, String)]>,
        bm25: &Bm25Params,
    ) -> Result<Self> {
        let docs = weight_corpus(&corpus, bm25)?;
        let links = match links {
            Some(pairs) => Some(lfidf_build(pairs, &corpus)?.weighted),
            None => None,
        };
        let space = FeatureSpace::for_corpus(&corpus);
        Ok(Self {
            corpus,
            docs,
            links,
            space,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn docs_for(&self, representation: Representation) -> Result<Vec<WeightedDoc>> {
        match representation {
            Representation::Bm25 => Ok(self.docs.clone()),
            Representation::Bm25LfIdf => {
                let rows = self.links.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("the bm25+lfidf representation needs links".into())
                })?;
                Ok(self
                    .docs
                    .iter()
                    .zip(rows)
                    .map(|(d, row)| WeightedDoc {
                        links: Some(row.clone()),
                        ..d.clone()
                    })
                    .collect())
            }
        }
    }

    /// Unit document vectors in corpus order. `ri_seed` seeds the index
    /// vectors and is unused by the other reductions.
    pub fn encode<T: Scalar>(
        &self,
        config: &PipelineConfig,
        ri_seed: u64,
    ) -> Result<Vec<DenseVector<T>>> {
        config.validate()?;
        let docs = self.docs_for(config.representation)?;
        match config.reduction {
            Reduction::None => densify(&docs),
            Reduction::Cull => densify(&tfidf_cull(&docs, config.dims)?.docs),
            Reduction::RandomIndex => {
                let registry = IndexVectorRegistry::new(RiConfig::new(
                    config.dims,
                    config.seed_len,
                    ri_seed,
                )?)?;
                registry.encode_corpus(&docs, &self.space)
            }
        }
    }

    /// Dimensionality of [`Prepared::encode`]'s output.
    pub fn output_dims(&self, config: &PipelineConfig) -> usize {
        let links = match config.representation {
            Representation::Bm25 => 0,
            Representation::Bm25LfIdf => self.corpus.stats.n_docs,
        };
        match config.reduction {
            Reduction::None => self.corpus.stats.n_terms + links,
            Reduction::Cull => config.dims.min(self.corpus.stats.n_terms) + links,
            Reduction::RandomIndex => config.dims,
        }
    }
}

fn densify<T: Scalar>(docs: &[WeightedDoc]) -> Result<Vec<DenseVector<T>>> {
    docs.iter()
        .map(|d| {
            combine_sparse(&d.terms, d.links.as_ref())
                .and_then(|s| s.to_dense().unit_normalize())
                .map(|v| v.cast())
                .map_err(|e| e.in_document(&d.doc_id))
        })
        .collect()
}

/// Inserts `vectors[i]` as document `i`, in an order shuffled by
/// `seeds.shuffle`.
pub fn build_tree<T: Scalar>(
    vectors: &[DenseVector<T>],
    config: &PipelineConfig,
    seeds: &RunSeeds,
) -> Result<KTree<T>> {
    let mut tree = KTree::new(KTreeConfig::new(config.order, config.variant, seeds.ktree)?)?;
    for i in insertion_order(vectors.len(), seeds.shuffle) {
        tree.insert(vectors[i].clone(), i as DocId)?;
    }
    Ok(tree)
}

pub fn insertion_order(n: usize, shuffle_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    order
}

/// Codebook cluster of every document, sorted by document.
pub fn clusters_by_doc<T: Scalar>(tree: &KTree<T>) -> Vec<(DocId, usize)> {
    let mut a = tree.assignments();
    a.sort_unstable();
    a
}
