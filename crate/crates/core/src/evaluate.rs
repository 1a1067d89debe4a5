//! Clustering quality: micro-averaged purity and entropy against reference
//! labels, k-means++ reduction of a tree codebook to a fixed cluster count,
//! Welch's t-test, and the repeated-runs experiment driver.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::kmeans::{distinct_points, lloyd, KMeansConfig};
use crate::ktree::{DocId, LevelEntry};
use crate::pipeline::{build_tree, PipelineConfig, Prepared, RunSeeds};
use crate::scalar::Scalar;
use crate::seeds::{stream_rng, STREAM_REDUCE};
use crate::vecspace::DenseVector;

/// Cluster-by-label document counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n_labels: usize,
    n: u64,
}

impl ContingencyTable {
    /// Rows are clusters, columns labels. Rows may differ in length; missing
    /// cells count zero.
    pub fn new(counts: Vec<Vec<u64>>) -> Self {
        let n_labels = counts.iter().map(Vec::len).max().unwrap_or(0);
        let n = counts.iter().flatten().sum();
        Self {
            counts,
            n_labels,
            n,
        }
    }

    /// Tallies `(cluster, label)` pairs.
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let mut t = Self::default();
        for (c, l) in pairs {
            t.add(c, l, 1);
        }
        t
    }

    pub fn add(&mut self, cluster: usize, label: usize, count: u64) {
        if self.counts.len() <= cluster {
            self.counts.resize(cluster + 1, Vec::new());
        }
        let row = &mut self.counts[cluster];
        if row.len() <= label {
            row.resize(label + 1, 0);
        }
        row[label] += count;
        self.n_labels = self.n_labels.max(label + 1);
        self.n += count;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn get(&self, cluster: usize, label: usize) -> u64 {
        self.counts
            .get(cluster)
            .and_then(|r| r.get(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.iter().map(Vec::as_slice)
    }
}

/// Fraction of documents that carry their cluster's majority label.
pub fn micro_purity(table: &ContingencyTable) -> Result<f64> {
    if table.n == 0 {
        return Err(Error::EmptyTable);
    }
    let majority: u64 = table
        .rows()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / table.n as f64)
}

/// Size-weighted label entropy of the clusters, in bits.
pub fn micro_entropy(table: &ContingencyTable) -> Result<f64> {
    if table.n == 0 {
        return Err(Error::EmptyTable);
    }
    let n = table.n as f64;
    let mut total = 0.0;
    for row in table.rows() {
        let n_c: u64 = row.iter().sum();
        if n_c == 0 {
            continue;
        }
        let n_c = n_c as f64;
        let h: f64 = row
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n_c;
                -p * p.log2()
            })
            .sum();
        total += n_c / n * h;
    }
    Ok(total)
}

/// Clusters the codebook centroids into `k` groups with k-means++ seeded
/// Lloyd, each centroid weighted by its cluster size, keeping the lowest-SSE
/// of `restarts` runs. Every document inherits the group of its codebook
/// entry. The output follows the order of `doc_assignments`.
pub fn reduce_to_k<T: Scalar, R: Rng + ?Sized>(
    codebook: &[LevelEntry<T>],
    doc_assignments: &[(DocId, usize)],
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<(DocId, usize)>> {
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidConfig(
            "k and restarts must be at least 1".into(),
        ));
    }
    if let Some(&(doc, c)) = doc_assignments.iter().find(|&&(_, c)| c >= codebook.len()) {
        return Err(Error::InvalidConfig(format!(
            "document {doc} assigned to codebook entry {c} of {}",
            codebook.len()
        )));
    }
    if codebook.len() < k {
        return Err(Error::TooFewClusters {
            needed: k,
            available: codebook.len(),
        });
    }
    if codebook.len() == k {
        return Ok(doc_assignments.to_vec());
    }
    let points: Vec<DenseVector<T>> = codebook.iter().map(|e| e.centroid.clone()).collect();
    let distinct = distinct_points(&points).len();
    if distinct < k {
        return Err(Error::TooFewClusters {
            needed: k,
            available: distinct,
        });
    }
    let weights: Vec<f64> = codebook.iter().map(|e| e.weight as f64).collect();
    let part = lloyd(&points, &weights, &KMeansConfig::kmeanspp(k, restarts), rng)?;
    Ok(doc_assignments
        .iter()
        .map(|&(doc, c)| (doc, part.assignment[c]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-tailed.
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sample t-test without assuming equal variances.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "samples need at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(Error::DegenerateSample(
            "both samples have zero variance".into(),
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateSample(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest { t, df, p })
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.len() == 1 {
        return (xs[0], 0.0);
    }
    let (m, v) = mean_var(xs);
    (m, v.sqrt())
}

/// Maps document labels to dense label ids, in sorted label order, for the
/// documents of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIndex {
    pub names: Vec<String>,
    /// Label id of each corpus document, by corpus position.
    pub by_doc: Vec<usize>,
}

impl LabelIndex {
    pub fn new<'a, I>(doc_ids: I, labels: &HashMap<String, String>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let doc_ids: Vec<&str> = doc_ids.into_iter().collect();
        let mut names: Vec<String> = Vec::new();
        for d in &doc_ids {
            let l = labels
                .get(*d)
                .ok_or_else(|| Error::MissingLabel((*d).to_owned()))?;
            names.push(l.clone());
        }
        names.sort();
        names.dedup();
        let id: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let by_doc = doc_ids.iter().map(|d| id[labels[*d].as_str()]).collect();
        Ok(Self { names, by_doc })
    }

    /// Contingency table of a clustering whose documents are corpus
    /// positions.
    pub fn table(&self, clustering: &[(DocId, usize)]) -> ContingencyTable {
        ContingencyTable::from_pairs(
            clustering
                .iter()
                .map(|&(doc, c)| (c, self.by_doc[doc as usize])),
        )
    }
}

/// Purity and entropy of one clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub purity: f64,
    pub entropy: f64,
}

pub fn score(table: &ContingencyTable) -> Result<Score> {
    Ok(Score {
        purity: micro_purity(table)?,
        entropy: micro_entropy(table)?,
    })
}

/// One configuration evaluated at a list of dimensionalities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub config: PipelineConfig,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: String,
    pub dims: usize,
    pub tree_run: usize,
    pub reduce_run: usize,
    pub purity: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub config: String,
    pub dims: usize,
    /// Mean micro entropy.
    pub alpha: f64,
    /// Standard deviation of the entropy.
    pub beta: f64,
    /// Mean micro purity.
    pub gamma: f64,
    /// Standard deviation of the purity.
    pub delta: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub records: Vec<RunRecord>,
}

pub const REPORT_HEADER: &str = "config\tdims\talpha\tbeta\tgamma\tdelta\truns";

impl ExperimentReport {
    pub fn from_records(records: Vec<RunRecord>) -> Self {
        let mut groups: Vec<((String, usize), Vec<&RunRecord>)> = Vec::new();
        for r in &records {
            let key = (r.config.clone(), r.dims);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        let rows = groups
            .into_iter()
            .map(|((config, dims), g)| {
                let ent: Vec<f64> = g.iter().map(|r| r.entropy).collect();
                let pur: Vec<f64> = g.iter().map(|r| r.purity).collect();
                let (alpha, beta) = mean_std(&ent);
                let (gamma, delta) = mean_std(&pur);
                ReportRow {
                    config,
                    dims,
                    alpha,
                    beta,
                    gamma,
                    delta,
                    runs: g.len(),
                }
            })
            .collect();
        Self { rows, records }
    }

    /// Summary table, values to four decimals.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                r.config, r.dims, r.alpha, r.beta, r.gamma, r.delta, r.runs
            )?;
        }
        Ok(())
    }

    /// Every measurement, full precision, for later t-tests.
    pub fn write_runs_csv<W: Write>(&self, w: W) -> Result<()> {
        write_runs_csv(&self.records, w)
    }

    pub fn row(&self, config: &str, dims: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.config == config && r.dims == dims)
    }

    /// Purities of one configuration at one dimensionality.
    pub fn purities(&self, config: &str, dims: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.config == config && r.dims == dims)
            .map(|r| r.purity)
            .collect()
    }
}

const RUNS_HEADER: [&str; 6] = [
    "config",
    "dims",
    "tree_run",
    "reduce_run",
    "purity",
    "entropy",
];

pub fn write_runs_csv<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::format(None, e.to_string());
    out.write_record(RUNS_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.config.clone(),
            r.dims.to_string(),
            r.tree_run.to_string(),
            r.reduce_run.to_string(),
            r.purity.to_string(),
            r.entropy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: BufRead>(r: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| Error::format(None, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != RUNS_HEADER {
        return Err(Error::format(Some(0), "unexpected per-run CSV header"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let offset = e.position().map(|p| p.byte() as usize);
            Error::format(offset, e.to_string())
        })?;
        let offset = rec.position().map(|p| p.byte() as usize);
        let bad = |what: &str| Error::format(offset, format!("bad {what} field"));
        out.push(RunRecord {
            config: rec[0].to_owned(),
            dims: rec[1].parse().map_err(|_| bad("dims"))?,
            tree_run: rec[2].parse().map_err(|_| bad("tree_run"))?,
            reduce_run: rec[3].parse().map_err(|_| bad("reduce_run"))?,
            purity: rec[4].parse().map_err(|_| bad("purity"))?,
            entropy: rec[5].parse().map_err(|_| bad("entropy"))?,
        });
    }
    Ok(out)
}

/// Welch comparison of two configurations at one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub dims: usize,
    pub config_a: String,
    pub config_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: WelchTest,
    pub significant: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Groups records by dimensionality, keyed in ascending order, pooling every
/// configuration found in the file.
fn purities_by_dims(records: &[RunRecord]) -> (String, BTreeMap<usize, Vec<f64>>) {
    let mut configs: Vec<&str> = records.iter().map(|r| r.config.as_str()).collect();
    configs.sort();
    configs.dedup();
    let mut by: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by.entry(r.dims).or_default().push(r.purity);
    }
    (configs.join("+"), by)
}

/// Per-dimensionality Welch tests on micro purity between two per-run
/// files. Samples with zero spread on both sides compare as `t = 0, p = 1`
/// when their means agree and `p = 0` otherwise.
pub fn compare_runs(a: &[RunRecord], b: &[RunRecord]) -> Result<Vec<Comparison>> {
    let (name_a, da) = purities_by_dims(a);
    let (name_b, db) = purities_by_dims(b);
    if da.keys().ne(db.keys()) {
        return Err(Error::DimensionSetMismatch);
    }
    da.iter()
        .zip(&db)
        .map(|((&dims, xa), (_, xb))| {
            let test = match welch_t_test(xa, xb) {
                Ok(t) => t,
                Err(Error::DegenerateSample(_)) if xa.len() >= 2 && xb.len() >= 2 => {
                    let (ma, mb) = (mean_std(xa).0, mean_std(xb).0);
                    if ma == mb {
                        WelchTest {
                            t: 0.0,
                            df: f64::NAN,
                            p: 1.0,
                        }
                    } else {
                        WelchTest {
                            t: if ma > mb {
                                f64::INFINITY
                            } else {
                                f64::NEG_INFINITY
                            },
                            df: f64::NAN,
                            p: 0.0,
                        }
                    }
                }
                Err(e) => return Err(e),
            };
            Ok(Comparison {
                dims,
                config_a: name_a.clone(),
                config_b: name_b.clone(),
                mean_a: mean_std(xa).0,
                mean_b: mean_std(xb).0,
                significant: test.p < SIGNIFICANCE,
                test,
            })
        })
        .collect()
}

pub const COMPARE_HEADER: &str = "dims\tconfig_a\tconfig_b\tmean_a\tmean_b\tt\tdf\tp\tsignificant";

pub fn write_comparisons<W: Write>(rows: &[Comparison], mut w: W) -> Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    for c in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.2}\t{:.4e}\t{}",
            c.dims,
            c.config_a,
            c.config_b,
            c.mean_a,
            c.mean_b,
            c.test.t,
            c.test.df,
            c.test.p,
            if c.significant { "yes" } else { "no" }
        )?;
    }
    Ok(())
}

/// Repetition counts and the final cluster count of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub runs_tree: usize,
    pub runs_reduce: usize,
    /// Clusters the codebook is reduced to.
    pub k: usize,
    /// k-means++ attempts inside one reduction; the best SSE is scored.
    pub reduce_restarts: usize,
    pub rng_seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            runs_tree: 20,
            runs_reduce: 20,
            k: 15,
            reduce_restarts: 1,
            rng_seed: 0,
        }
    }
}

/// Scores of the `runs_reduce` reductions of one tree's codebook.
pub fn score_tree<T: Scalar>(
    tree: &crate::ktree::KTree<T>,
    labels: &LabelIndex,
    protocol: &Protocol,
    tree_run: usize,
) -> Result<Vec<Score>> {
    let codebook = tree.codebook();
    let assignments = tree.assignments();
    (0..protocol.runs_reduce)
        .map(|reduce_run| {
            let mut rng = stream_rng(
                protocol.rng_seed,
                STREAM_REDUCE,
                &[tree_run as u64, reduce_run as u64],
            );
            let reduced = reduce_to_k(
                &codebook,
                &assignments,
                protocol.k,
                protocol.reduce_restarts,
                &mut rng,
            )?;
            score(&labels.table(&reduced))
        })
        .collect()
}

/// Runs every configuration at every listed dimensionality
/// `runs_tree x runs_reduce` times. Tree run `i` uses the same insertion
/// order, index vectors and split seeds in every configuration, and
/// reduction `(i, j)` the same k-means++ stream. Work is spread over the
/// current rayon pool; the result does not depend on its size.
pub fn run_experiment<T: Scalar>(
    prepared: &Prepared,
    labels: &HashMap<String, String>,
    specs: &[ExperimentSpec],
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    if protocol.runs_tree == 0 || protocol.runs_reduce == 0 {
        return Err(Error::InvalidConfig("run counts must be at least 1".into()));
    }
    let label_index = LabelIndex::new(prepared.corpus.doc_ids(), labels)?;

    let mut tasks: Vec<(usize, PipelineConfig, usize)> = Vec::new();
    for spec in specs {
        for &d in &spec.dims {
            let config = PipelineConfig {
                dims: d,
                ..spec.config.clone()
            };
            config.validate()?;
            for tree_run in 0..protocol.runs_tree {
                tasks.push((tasks.len(), config.clone(), tree_run));
            }
        }
    }
    let mut task_spec = Vec::with_capacity(tasks.len());
    for spec in specs {
        for &d in &spec.dims {
            for _ in 0..protocol.runs_tree {
                task_spec.push((spec.id.clone(), d));
            }
        }
    }

    let scored: Vec<Vec<Score>> = tasks
        .par_iter()
        .map(|(_, config, tree_run)| {
            let seeds = RunSeeds::derive(protocol.rng_seed, *tree_run as u64);
            let vectors = prepared.encode::<T>(config, seeds.random_index)?;
            let tree = build_tree(&vectors, config, &seeds)?;
            score_tree(&tree, &label_index, protocol, *tree_run)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(scored.len() * protocol.runs_reduce);
    for (((_, _, tree_run), (id, dims)), scores) in tasks.iter().zip(task_spec).zip(scored) {
        for (reduce_run, s) in scores.into_iter().enumerate() {
            records.push(RunRecord {
                config: id.clone(),
                dims,
                tree_run: *tree_run,
                reduce_run,
                purity: s.purity,
                entropy: s.entropy,
            });
        }
    }
    Ok(ExperimentReport::from_records(records))
}
