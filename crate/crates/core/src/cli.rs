//! The `ritree` command line.
//!
//! ```text
//! ritree synth    --out-dir data
//! ritree encode   --corpus data/corpus.txt --preset E --dims 1000 --out enc.tsv
//! ritree build    --encoded enc.tsv --preset E --order 30 --out tree.json --clusters clusters.tsv
//! ritree evaluate --tree tree.json --labels data/labels.tsv
//! ritree evaluate --corpus data/corpus.txt --labels data/labels.tsv --preset E --dims 100,1000
//! ritree compare  c_runs.csv e_runs.csv
//! ritree audit    tree.json
//! ```
//!
//! Every subcommand derives its randomness from `--rng-seed` (or
//! `RITREE_RNG_SEED`). `encode` and `build` use the streams of tree run 0, so
//! `encode | build | evaluate --tree` reproduces a 1 x 1 `evaluate` run.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evaluate::{
    compare_runs, read_runs_csv, run_experiment, score_tree, write_comparisons, ExperimentReport,
    ExperimentSpec, LabelIndex, Protocol, RunRecord,
};
use crate::ktree::{parse_json, KTree, Variant};
use crate::pipeline::{
    build_tree, clusters_by_doc, PipelineConfig, Prepared, Reduction, Representation, RunSeeds,
    DEFAULT_K, DEFAULT_ORDER,
};
use crate::represent::{ingest_corpus, read_labels, read_links, Bm25Params, Corpus, StopWords};
use crate::synth::{SynthConfig, SynthCorpus};
use crate::vecspace::DenseVector;

#[derive(Debug, Parser)]
#[command(
    name = "ritree",
    version,
    about = "Random Indexing K-tree document clustering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled corpus with links.
    Synth(SynthArgs),
    /// Turn a corpus into unit document vectors.
    Encode(EncodeArgs),
    /// Build a K-tree from encoded vectors.
    Build(BuildArgs),
    /// Score clusterings against labels.
    Evaluate(EvaluateArgs),
    /// Welch t-tests between two per-run CSV files.
    Compare(CompareArgs),
    /// Check the structural invariants of a tree dump.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed for every random stream.
    #[arg(long, env = "RITREE_RNG_SEED", default_value_t = 0)]
    pub rng_seed: u64,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Corpus file, one `doc_id<TAB>term:count ...` line per document.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Link file, `source<TAB>target` per line.
    #[arg(long)]
    pub links: Option<PathBuf>,
    /// Terms to drop, one per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Reference configuration A to E. Overrides of its variant,
    /// representation or reduction are rejected.
    #[arg(long, value_parser = ["A", "B", "C", "D", "E"])]
    pub preset: Option<String>,
    #[arg(long, value_parser = ["bm25", "bm25+lfidf"], conflicts_with = "preset")]
    pub repr: Option<String>,
    #[arg(long, value_parser = ["none", "cull", "ri"], conflicts_with = "preset")]
    pub reduce: Option<String>,
    /// Target dimensionality; `evaluate` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub dims: Vec<u64>,
    /// Non-zeros per index vector (random indexing only).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub seed_len: Option<u64>,
    #[command(flatten)]
    pub tree: TreeArgs,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    /// Tree order, the maximum entries per node.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub order: Option<u64>,
    #[arg(long, value_parser = ["unmodified", "modified"], conflicts_with = "preset")]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub docs: usize,
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    #[arg(long, default_value_t = 20_000)]
    pub terms: usize,
    #[arg(long, default_value_t = 400)]
    pub topic_terms: usize,
    #[arg(long, default_value_t = 0.25)]
    pub topic_share: f64,
    #[arg(long, default_value_t = 150)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 4)]
    pub links_per_doc: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output file, `doc_id<TAB>v1 v2 ...` per line; `-` for stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Output of `encode`.
    #[arg(long)]
    pub encoded: PathBuf,
    /// Reference configuration; only its variant applies here.
    #[arg(long, value_parser = ["A", "B", "C", "D", "E"])]
    pub preset: Option<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Tree dump (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Codebook cluster per document, `doc_id<TAB>cluster`. Defaults to the
    /// dump path with extension `assignments.tsv`.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Score a built tree instead of running the pipeline.
    #[arg(long, conflicts_with_all = ["corpus", "links", "stopwords", "runs_tree", "jobs"])]
    pub tree: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// `doc_id<TAB>label` per line.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs_tree: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs_reduce: u64,
    /// Clusters the codebook is reduced to.
    #[arg(long, default_value_t = DEFAULT_K as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Configuration name in the report; defaults to the preset letter.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Report TSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-run CSV for `compare`.
    #[arg(long)]
    pub runs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub runs_a: PathBuf,
    pub runs_b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Output of `build`.
    pub tree: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Inconsistent flags; exit status 2.
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {}", render_error(&e));
            1
        }
    }
}

fn render_error(e: &Error) -> String {
    let mut out = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        out.push_str(": ");
        out.push_str(&s.to_string());
        src = s.source();
    }
    out
}

pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Build(a) => cmd_build(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Audit(a) => cmd_audit(a),
    }
}

/// Writes through a temporary file in the target directory, renamed into
/// place on success. `-` writes to stdout.
pub fn write_atomic<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if path.as_os_str() == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        f(&mut lock)?;
        lock.flush()?;
        return Ok(());
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn cmd_synth(a: SynthArgs) -> CliResult<i32> {
    let config = SynthConfig {
        n_docs: a.docs,
        n_classes: a.classes,
        n_terms: a.terms,
        topic_terms: a.topic_terms,
        topic_share: a.topic_share,
        doc_len: a.doc_len,
        links_per_doc: a.links_per_doc,
        seed: a.seed.rng_seed,
        ..SynthConfig::default()
    };
    if let Err(Error::InvalidConfig(m)) = config.validate() {
        return usage(m);
    }
    let corpus = SynthCorpus::generate(&config)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_atomic(&a.out_dir.join("corpus.txt"), |w| corpus.write_corpus(w))?;
    write_atomic(&a.out_dir.join("labels.tsv"), |w| corpus.write_labels(w))?;
    write_atomic(&a.out_dir.join("links.tsv"), |w| corpus.write_links(w))?;
    Ok(0)
}

/// Pipeline configuration and the dimensionalities to run, after checking
/// that the flags agree with each other.
pub fn resolve_pipeline(
    p: &PipelineArgs,
    has_links: bool,
) -> CliResult<(PipelineConfig, Vec<usize>)> {
    let mut config = match &p.preset {
        Some(letter) => PipelineConfig::preset(letter)?,
        None => PipelineConfig::default(),
    };
    if let Some(r) = &p.repr {
        config.representation = r.parse()?;
    }
    if let Some(r) = &p.reduce {
        config.reduction = r.parse()?;
    }
    if let Some(v) = &p.tree.variant {
        config.variant = v.parse()?;
    }
    if let Some(m) = p.tree.order {
        config.order = m as usize;
    }
    if let Some(s) = p.seed_len {
        if config.reduction != Reduction::RandomIndex {
            return usage(format!(
                "--seed-len only applies to --reduce ri, not --reduce {}",
                config.reduction
            ));
        }
        config.seed_len = s as usize;
    }
    if config.reduction == Reduction::None && !p.dims.is_empty() {
        return usage("--dims has no meaning with --reduce none");
    }
    if config.representation == Representation::Bm25LfIdf && !has_links {
        return usage("--repr bm25+lfidf needs --links");
    }
    let dims: Vec<usize> = if p.dims.is_empty() {
        vec![config.dims]
    } else {
        p.dims.iter().map(|&d| d as usize).collect()
    };
    for &d in &dims {
        let candidate = PipelineConfig {
            dims: d,
            ..config.clone()
        };
        if let Err(Error::InvalidConfig(m)) = candidate.validate() {
            return usage(m);
        }
    }
    config.dims = dims[0];
    Ok((config, dims))
}

fn load_prepared(input: &InputArgs, bm25: &Bm25Params) -> CliResult<Prepared> {
    let Some(corpus_path) = &input.corpus else {
        return usage("--corpus is required");
    };
    let stopwords = match &input.stopwords {
        Some(p) => Some(with_path(p, StopWords::read(open(p)?))?),
        None => None,
    };
    let corpus: Corpus = with_path(
        corpus_path,
        ingest_corpus(open(corpus_path)?, stopwords.as_ref()),
    )?;
    let links = match &input.links {
        Some(p) => Some(with_path(p, read_links(open(p)?))?),
        None => None,
    };
    Ok(Prepared::new(corpus, links.as_deref(), bm25)?)
}

fn cmd_encode(a: EncodeArgs) -> CliResult<i32> {
    let (config, dims) = resolve_pipeline(&a.pipeline, a.input.links.is_some())?;
    if dims.len() > 1 {
        return usage("encode takes a single --dims value");
    }
    let prepared = load_prepared(&a.input, &config.bm25)?;
    let seeds = RunSeeds::derive(a.seed.rng_seed, 0);
    let vectors = prepared.encode::<f64>(&config, seeds.random_index)?;
    write_atomic(&a.out, |w| {
        write_encoded(w, prepared.corpus.doc_ids(), &vectors)
    })?;
    Ok(0)
}

/// `doc_id<TAB>v1 v2 ...` lines. Values use the shortest text that reads
/// back to the same `f64`.
pub fn write_encoded<'a, W, I>(mut w: W, doc_ids: I, vectors: &[DenseVector<f64>]) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a str>,
{
    for (id, v) in doc_ids.into_iter().zip(vectors) {
        w.write_all(id.as_bytes())?;
        w.write_all(b"\t")?;
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{x}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_encoded<R: BufRead>(r: R) -> Result<(Vec<String>, Vec<DenseVector<f64>>)> {
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected doc_id<TAB>values".into()))?;
        let values = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(format!("bad value `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(DenseVector::dim) {
            if first != values.len() {
                return Err(err(format!(
                    "expected {first} values, found {}",
                    values.len()
                )));
            }
        }
        ids.push(id.to_owned());
        rows.push(DenseVector::new(values));
    }
    Ok((ids, rows))
}

fn tree_variant(preset: &Option<String>, tree: &TreeArgs) -> CliResult<(Variant, usize)> {
    let mut variant = match preset {
        Some(letter) => PipelineConfig::preset(letter)?.variant,
        None => PipelineConfig::default().variant,
    };
    if let Some(v) = &tree.variant {
        variant = v.parse()?;
    }
    Ok((variant, tree.order.map_or(DEFAULT_ORDER, |m| m as usize)))
}

fn cmd_build(a: BuildArgs) -> CliResult<i32> {
    let (variant, order) = tree_variant(&a.preset, &a.tree)?;
    let (ids, vectors) = with_path(&a.encoded, read_encoded(open(&a.encoded)?))?;
    let config = PipelineConfig {
        variant,
        order,
        ..PipelineConfig::default()
    };
    let tree = build_tree(&vectors, &config, &RunSeeds::derive(a.seed.rng_seed, 0))?;
    let dump = json!({ "doc_ids": ids, "tree": tree.to_json() });
    write_atomic(&a.out, |w| {
        serde_json::to_writer(&mut *w, &dump).map_err(|e| Error::format(None, e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    let clusters = match a.clusters {
        Some(p) => Some(p),
        None if a.out.as_os_str() == "-" => None,
        None => Some(a.out.with_extension("assignments.tsv")),
    };
    if let Some(path) = &clusters {
        write_atomic(path, |w| write_clusters(w, &ids, &tree))?;
    }
    Ok(0)
}

pub fn write_clusters<W: Write>(mut w: W, ids: &[String], tree: &KTree<f64>) -> Result<()> {
    for (doc, cluster) in clusters_by_doc(tree) {
        writeln!(w, "{}\t{cluster}", ids[doc as usize])?;
    }
    Ok(())
}

/// Reads a `build` output: document ids and the tree.
pub fn read_tree_dump(path: &Path) -> Result<(Vec<String>, KTree<f64>)> {
    let text = with_path(path, std::fs::read_to_string(path).map_err(Error::Io))?;
    let value = parse_json(&text)?;
    let ids = value
        .get("doc_ids")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format(None, "missing `doc_ids` array"))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::format(None, "document ids must be strings"))
        })
        .collect::<Result<Vec<_>>>()?;
    let tree_value = value
        .get("tree")
        .ok_or_else(|| Error::format(None, "missing `tree`"))?;
    let tree = KTree::from_json(tree_value)?;
    if tree.len() != ids.len() as u64 {
        return Err(Error::format(
            None,
            format!("{} document ids for {} tree entries", ids.len(), tree.len()),
        ));
    }
    if let Some(&(bad, _)) = tree
        .assignments()
        .iter()
        .find(|&&(d, _)| d as usize >= ids.len())
    {
        return Err(Error::format(
            None,
            format!("tree refers to unknown document {bad}"),
        ));
    }
    Ok((ids, tree))
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<i32> {
    let labels = with_path(&a.labels, read_labels(open(&a.labels)?))?;
    let report = match &a.tree {
        Some(path) => evaluate_tree(path, &labels, &a)?,
        None => {
            let (config, dims) = resolve_pipeline(&a.pipeline, a.input.links.is_some())?;
            let prepared = load_prepared(&a.input, &config.bm25)?;
            let dims = if config.reduction == Reduction::None {
                vec![prepared.output_dims(&config)]
            } else {
                dims
            };
            let name = a
                .name
                .clone()
                .or_else(|| a.pipeline.preset.clone())
                .unwrap_or_else(|| "custom".into());
            let spec = ExperimentSpec {
                id: name,
                config,
                dims,
            };
            let protocol = Protocol {
                runs_tree: a.runs_tree as usize,
                runs_reduce: a.runs_reduce as usize,
                k: a.k as usize,
                rng_seed: a.seed.rng_seed,
                ..Protocol::default()
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(a.jobs)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            pool.install(|| run_experiment::<f64>(&prepared, &labels, &[spec], &protocol))?
        }
    };
    match &a.out {
        Some(p) => write_atomic(p, |w| report.write_tsv(w))?,
        None => report.write_tsv(io::stdout().lock())?,
    }
    if let Some(p) = &a.runs_out {
        write_atomic(p, |w| report.write_runs_csv(w))?;
    }
    Ok(0)
}

fn evaluate_tree(
    path: &Path,
    labels: &std::collections::HashMap<String, String>,
    a: &EvaluateArgs,
) -> CliResult<ExperimentReport> {
    if a.pipeline.preset.is_some()
        || a.pipeline.repr.is_some()
        || a.pipeline.reduce.is_some()
        || !a.pipeline.dims.is_empty()
        || a.pipeline.seed_len.is_some()
        || a.pipeline.tree.order.is_some()
        || a.pipeline.tree.variant.is_some()
    {
        return usage("--tree evaluates a built tree; pipeline flags do not apply");
    }
    let (ids, tree) = read_tree_dump(path)?;
    let index = LabelIndex::new(ids.iter().map(String::as_str), labels)?;
    let protocol = Protocol {
        runs_tree: 1,
        runs_reduce: a.runs_reduce as usize,
        k: a.k as usize,
        rng_seed: a.seed.rng_seed,
        ..Protocol::default()
    };
    let name = a.name.clone().unwrap_or_else(|| "tree".into());
    let dims = tree.dims().unwrap_or(0);
    let records = score_tree(&tree, &index, &protocol, 0)?
        .into_iter()
        .enumerate()
        .map(|(j, s)| RunRecord {
            config: name.clone(),
            dims,
            tree_run: 0,
            reduce_run: j,
            purity: s.purity,
            entropy: s.entropy,
        })
        .collect();
    Ok(ExperimentReport::from_records(records))
}

fn cmd_compare(a: CompareArgs) -> CliResult<i32> {
    let ra = with_path(&a.runs_a, read_runs_csv(open(&a.runs_a)?))?;
    let rb = with_path(&a.runs_b, read_runs_csv(open(&a.runs_b)?))?;
    let rows = compare_runs(&ra, &rb)?;
    match &a.out {
        Some(p) => write_atomic(p, |w| write_comparisons(&rows, w))?,
        None => write_comparisons(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_audit(a: AuditArgs) -> CliResult<i32> {
    let (_, tree) = read_tree_dump(&a.tree)?;
    let report = tree.audit();
    println!("{report}");
    Ok(if report.is_ok() { 0 } else { 1 })
}
