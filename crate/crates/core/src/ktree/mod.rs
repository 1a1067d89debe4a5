//! K-tree: a height-balanced nearest-neighbour search tree of cluster
//! centroids, built like a B+-tree whose node splits are 2-means.
//!
//! Leaves hold the inserted data vectors. Internal entries hold the mean of
//! every data vector beneath them together with that count. A vector is
//! routed to a leaf by nearest-centroid search; the centroids on the path are
//! updated as running weighted means; a node that reaches `order + 1`
//! entries is split in two by k-means and both centroids are promoted into
//! the parent, possibly cascading up to a new root.
//!
//! The [`Variant::Modified`] tree keeps every centroid on the unit sphere and
//! splits with randomly seeded, restarting k-means; it expects unit-length
//! input, such as random-indexed document vectors.

mod audit;
mod dump;

pub use audit::{AuditReport, Tolerances};
pub use dump::parse_json;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmeans::{distinct_points, lloyd, KMeansConfig};
use crate::scalar::Scalar;
use crate::vecspace::{squared_euclidean_unchecked, weighted_mean, DenseVector};

pub type NodeId = usize;
pub type DocId = u64;

/// How far an inserted vector's norm may stray from one in a modified tree.
pub const UNIT_INPUT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Centroids are plain means; splits seed by perturbing the mean and run
    /// k-means to convergence.
    Unmodified,
    /// Centroids are kept at unit length; splits seed uniformly and restart
    /// after six non-converged rounds.
    Modified,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unmodified => "unmodified",
            Variant::Modified => "modified",
        }
    }

    fn split_config(self) -> KMeansConfig {
        match self {
            Variant::Unmodified => KMeansConfig::unmodified_split(),
            Variant::Modified => KMeansConfig::modified_split(),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unmodified" => Ok(Variant::Unmodified),
            "modified" => Ok(Variant::Modified),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KTreeConfig {
    /// Maximum entries per node.
    pub order: usize,
    pub variant: Variant,
    /// Seeds the k-means used by modified splits.
    pub rng_seed: u64,
}

impl KTreeConfig {
    pub fn new(order: usize, variant: Variant, rng_seed: u64) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidConfig(format!(
                "tree order must be at least 2, got {order}"
            )));
        }
        Ok(Self {
            order,
            variant,
            rng_seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    /// Internal entry: the node holding the cluster's members.
    Child(NodeId),
    /// Leaf entry: the inserted document.
    Doc(DocId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    /// Centroid for internal entries, the data vector for leaf entries.
    pub vector: DenseVector<T>,
    /// Number of data vectors beneath; 1 for leaf entries.
    pub weight: u64,
    pub link: Link,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub entries: Vec<Entry<T>>,
    pub leaf: bool,
}

impl<T: Scalar> Node<T> {
    fn empty(leaf: bool) -> Self {
        Self {
            entries: Vec::new(),
            leaf,
        }
    }

    /// Index of the entry nearest to `v`; ties go to the lowest index.
    pub fn nearest_entry(&self, v: &DenseVector<T>) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(Error::EmptyNode);
        }
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let d = squared_euclidean_unchecked(e.vector.as_slice(), v.as_slice());
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn total_weight(&self) -> u64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// One entry of a tree level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEntry<T> {
    pub centroid: DenseVector<T>,
    pub weight: u64,
    pub link: Link,
}

/// How an overflowing node was divided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    KMeans,
    /// k-means could not separate the entries (all identical); split by
    /// index parity instead.
    Parity,
}

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub left: Vec<Entry<T>>,
    pub right: Vec<Entry<T>>,
    pub kind: SplitKind,
}

/// Moves the running mean of `entry` towards `v`:
/// `mu' = (w mu + v) / (w + 1)`, `w' = w + 1`, re-normalized for the modified
/// variant.
pub fn update_centroid<T: Scalar>(entry: &mut Entry<T>, v: &DenseVector<T>, variant: Variant) {
    let w = entry.weight as f64;
    let updated: Vec<f64> = entry
        .vector
        .iter()
        .zip(v.iter())
        .map(|(m, x)| (w * m.as_f64() + x.as_f64()) / (w + 1.0))
        .collect();
    let updated = DenseVector::from_f64(&updated);
    entry.vector = match variant {
        Variant::Unmodified => updated,
        // v = -mu exactly leaves no direction to keep; the old one stays.
        Variant::Modified => updated
            .unit_normalize()
            .unwrap_or_else(|_| entry.vector.clone()),
    };
    entry.weight += 1;
}

/// Updates every entry on a root-to-leaf search path.
pub fn update_path<'a, T: Scalar + 'a>(
    path: impl IntoIterator<Item = &'a mut Entry<T>>,
    v: &DenseVector<T>,
    variant: Variant,
) {
    for entry in path {
        update_centroid(entry, v, variant);
    }
}

/// Weighted mean of `entries`, unitized for the modified variant.
pub fn promoted_centroid<T: Scalar>(entries: &[Entry<T>], variant: Variant) -> DenseVector<T> {
    let vs: Vec<&DenseVector<T>> = entries.iter().map(|e| &e.vector).collect();
    let ws: Vec<f64> = entries.iter().map(|e| e.weight as f64).collect();
    let mean = weighted_mean(&vs, &ws).expect("split halves are non-empty");
    match variant {
        Variant::Unmodified => mean,
        Variant::Modified => mean.unit_normalize().unwrap_or_else(|_| vs[0].clone()),
    }
}

/// 2-means over the entries of an overflowing node, each weighted by its
/// subtree size. Fails with [`Error::DegenerateSplit`] when the entries
/// cannot be separated.
pub fn kmeans_split<T: Scalar>(
    entries: Vec<Entry<T>>,
    variant: Variant,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Split<T>, (Error, Vec<Entry<T>>)> {
    let points: Vec<DenseVector<T>> = entries.iter().map(|e| e.vector.clone()).collect();
    if distinct_points(&points).len() < 2 {
        return Err((Error::DegenerateSplit, entries));
    }
    let weights: Vec<f64> = entries.iter().map(|e| e.weight as f64).collect();
    let part = match lloyd(&points, &weights, &variant.split_config(), rng) {
        Ok(p) => p,
        Err(_) => return Err((Error::DegenerateSplit, entries)),
    };
    let sizes = part.cluster_sizes();
    if sizes.contains(&0) || part.centroids[0] == part.centroids[1] {
        return Err((Error::DegenerateSplit, entries));
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (e, side) in entries.into_iter().zip(part.assignment) {
        if side == 0 {
            left.push(e);
        } else {
            right.push(e);
        }
    }
    Ok(Split {
        left,
        right,
        kind: SplitKind::KMeans,
    })
}

/// Splits an overflowing node's entries in two, falling back to an
/// index-parity split when k-means cannot separate them.
pub fn split_node<T: Scalar>(
    entries: Vec<Entry<T>>,
    variant: Variant,
    rng: &mut ChaCha8Rng,
) -> Split<T> {
    match kmeans_split(entries, variant, rng) {
        Ok(split) => split,
        Err((_, entries)) => {
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for (i, e) in entries.into_iter().enumerate() {
                if i % 2 == 0 {
                    left.push(e);
                } else {
                    right.push(e);
                }
            }
            Split {
                left,
                right,
                kind: SplitKind::Parity,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct KTree<T> {
    config: KTreeConfig,
    nodes: Vec<Node<T>>,
    root: NodeId,
    depth: usize,
    dims: Option<usize>,
    n_inserted: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> PartialEq for KTree<T> {
    /// Structural equality: configuration, shape, vectors (bitwise), weights
    /// and documents. Node ids are not compared.
    fn eq(&self, other: &Self) -> bool {
        fn node_eq<T: Scalar>(a: &KTree<T>, na: NodeId, b: &KTree<T>, nb: NodeId) -> bool {
            let (x, y) = (a.node(na), b.node(nb));
            x.leaf == y.leaf
                && x.entries.len() == y.entries.len()
                && x.entries.iter().zip(&y.entries).all(|(ea, eb)| {
                    let same_vec = ea.vector.dim() == eb.vector.dim()
                        && ea
                            .vector
                            .iter()
                            .zip(eb.vector.iter())
                            .all(|(p, q)| p.as_f64().to_bits() == q.as_f64().to_bits());
                    same_vec
                        && ea.weight == eb.weight
                        && match (ea.link, eb.link) {
                            (Link::Doc(p), Link::Doc(q)) => p == q,
                            (Link::Child(p), Link::Child(q)) => node_eq(a, p, b, q),
                            _ => false,
                        }
                })
        }
        self.config == other.config
            && self.depth == other.depth
            && self.dims == other.dims
            && self.n_inserted == other.n_inserted
            && node_eq(self, self.root, other, other.root)
    }
}

impl<T: Scalar> KTree<T> {
    pub fn new(config: KTreeConfig) -> Result<Self> {
        KTreeConfig::new(config.order, config.variant, config.rng_seed)?;
        Ok(Self {
            config,
            nodes: vec![Node::empty(true)],
            root: 0,
            depth: 1,
            dims: None,
            n_inserted: 0,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        })
    }

    pub fn config(&self) -> &KTreeConfig {
        &self.config
    }

    /// Number of node levels on every root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> u64 {
        self.n_inserted
    }

    pub fn is_empty(&self) -> bool {
        self.n_inserted == 0
    }

    /// Dimensionality, fixed by the first insert.
    pub fn dims(&self) -> Option<usize> {
        self.dims
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Inserts a data vector under `doc`.
    pub fn insert(&mut self, vector: DenseVector<T>, doc: DocId) -> Result<()> {
        match self.dims {
            Some(d) if d != vector.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: vector.dim(),
                })
            }
            _ => {}
        }
        if !vector.is_finite() {
            return Err(Error::InvalidConfig("vector has non-finite entries".into()));
        }
        if self.config.variant == Variant::Modified {
            let norm = vector.norm();
            if (norm - 1.0).abs() > UNIT_INPUT_TOLERANCE {
                return Err(Error::NotUnit { norm });
            }
        }
        self.dims = Some(vector.dim());

        let mut path: Vec<(NodeId, usize)> = Vec::with_capacity(self.depth);
        let mut node = self.root;
        while !self.nodes[node].leaf {
            let i = self.nodes[node].nearest_entry(&vector)?;
            path.push((node, i));
            node = match self.nodes[node].entries[i].link {
                Link::Child(c) => c,
                Link::Doc(_) => unreachable!("internal entries link to nodes"),
            };
        }
        let variant = self.config.variant;
        for &(n, i) in &path {
            update_centroid(&mut self.nodes[n].entries[i], &vector, variant);
        }
        self.nodes[node].entries.push(Entry {
            vector,
            weight: 1,
            link: Link::Doc(doc),
        });
        self.n_inserted += 1;

        let mut level = path.len();
        while self.nodes[node].entries.len() > self.config.order {
            let entries = std::mem::take(&mut self.nodes[node].entries);
            let leaf = self.nodes[node].leaf;
            let split = split_node(entries, variant, &mut self.rng);
            let left = self.promote(&split.left, node, variant);
            let sibling = self.nodes.len();
            self.nodes.push(Node {
                entries: split.right,
                leaf,
            });
            let right = self.promote(&self.nodes[sibling].entries, sibling, variant);
            self.nodes[node].entries = split.left;

            if level == 0 {
                let new_root = self.nodes.len();
                self.nodes.push(Node {
                    entries: vec![left, right],
                    leaf: false,
                });
                self.root = new_root;
                self.depth += 1;
                break;
            }
            level -= 1;
            let (parent, i) = path[level];
            let parent_entries = &mut self.nodes[parent].entries;
            parent_entries[i] = left;
            parent_entries.insert(i + 1, right);
            node = parent;
        }
        Ok(())
    }

    fn promote(&self, entries: &[Entry<T>], child: NodeId, variant: Variant) -> Entry<T> {
        Entry {
            vector: promoted_centroid(entries, variant),
            weight: entries.iter().map(|e| e.weight).sum(),
            link: Link::Child(child),
        }
    }

    /// Entries of every node at `level` (root = 1, leaves = `depth`), left
    /// to right.
    pub fn level(&self, level: usize) -> Result<Vec<LevelEntry<T>>> {
        if level == 0 || level > self.depth {
            return Err(Error::BadLevel {
                level,
                depth: self.depth,
            });
        }
        let mut frontier = vec![self.root];
        for _ in 1..level {
            frontier = frontier
                .iter()
                .flat_map(|&n| self.nodes[n].entries.iter())
                .map(|e| match e.link {
                    Link::Child(c) => c,
                    Link::Doc(_) => unreachable!("only leaves hold documents"),
                })
                .collect();
        }
        Ok(frontier
            .iter()
            .flat_map(|&n| self.nodes[n].entries.iter())
            .map(|e| LevelEntry {
                centroid: e.vector.clone(),
                weight: e.weight,
                link: e.link,
            })
            .collect())
    }

    /// The above-leaf level: the finest clusters the tree offers. A tree
    /// that is a single leaf has one cluster, the mean of everything in it.
    pub fn codebook(&self) -> Vec<LevelEntry<T>> {
        if self.n_inserted == 0 {
            return Vec::new();
        }
        if self.depth == 1 {
            let root = &self.nodes[self.root];
            return vec![LevelEntry {
                centroid: promoted_centroid(&root.entries, self.config.variant),
                weight: root.total_weight(),
                link: Link::Child(self.root),
            }];
        }
        self.level(self.depth - 1).expect("depth >= 2")
    }

    /// Documents stored beneath `node`, left to right.
    pub fn docs_under(&self, node: NodeId) -> Vec<DocId> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for e in self.nodes[n].entries.iter().rev() {
                match e.link {
                    Link::Doc(d) => out.push(d),
                    Link::Child(c) => stack.push(c),
                }
            }
        }
        // the stack visits children right to left; leaf runs are pushed in
        // reverse, so flip the whole sequence back
        out.reverse();
        out
    }

    /// Maps every document to the index of its codebook cluster, in codebook
    /// order.
    pub fn assignments(&self) -> Vec<(DocId, usize)> {
        self.codebook()
            .iter()
            .enumerate()
            .flat_map(|(c, e)| match e.link {
                Link::Child(n) => self.docs_under(n).into_iter().map(move |d| (d, c)),
                Link::Doc(_) => unreachable!("codebook entries are clusters"),
            })
            .collect()
    }

    /// Inserts every `(vector, doc)` pair in order.
    pub fn extend<I>(&mut self, items: I) -> Result<()>
    where
        I: IntoIterator<Item = (DenseVector<T>, DocId)>,
    {
        for (v, d) in items {
            self.insert(v, d)?;
        }
        Ok(())
    }
}
