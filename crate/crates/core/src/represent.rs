//! Corpus ingestion and document weighting.
//!
//! Content is weighted with BM25, links with LF-IDF (a symmetric
//! document-to-document link frequency matrix scaled by an inverse document
//! frequency). The two are unitized separately and concatenated.
//!
//! File formats, all UTF-8 with one record per line:
//!
//! * corpus: `doc_id<TAB>term:count term:count ...`
//! * links: `doc_id<TAB>doc_id`
//! * labels: `doc_id<TAB>label`
//! * stop words: one term per line

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vecspace::{DenseVector, SparseVector};

/// Term strings and their dense ids, in first-encounter order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    fn intern(&mut self, term: &str) -> usize {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len();
        self.terms.push(term.to_owned());
        self.ids.insert(term.to_owned(), id);
        id
    }
}

/// A document as raw term counts, sorted by term id.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDoc {
    pub doc_id: String,
    pub counts: Vec<(usize, u32)>,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub n_terms: usize,
    pub avg_doc_len: f64,
    /// Document frequency, indexed by term id.
    pub df: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<RawDoc>,
    pub vocab: Vocabulary,
    pub stats: CorpusStats,
    doc_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn doc_position(&self, doc_id: &str) -> Option<usize> {
        self.doc_index.get(doc_id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }

    /// Builds a corpus from in-memory documents.
    pub fn from_docs<I, D, S>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (D, Vec<(S, u32)>)>,
        D: Into<String>,
        S: AsRef<str>,
    {
        let mut builder = CorpusBuilder::default();
        for (doc_id, counts) in docs {
            let doc_id = doc_id.into();
            let counts: Vec<_> = counts.iter().map(|(t, c)| (t.as_ref(), *c)).collect();
            builder.push(doc_id, &counts, None).map_err(|e| match e {
                Error::Parse { message, .. } => Error::InvalidConfig(message),
                other => other,
            })?;
        }
        Ok(builder.finish())
    }
}

#[derive(Default)]
struct CorpusBuilder {
    docs: Vec<RawDoc>,
    vocab: Vocabulary,
    doc_index: HashMap<String, usize>,
    df: Vec<u32>,
    total_len: u64,
}

impl CorpusBuilder {
    fn push(
        &mut self,
        doc_id: String,
        counts: &[(&str, u32)],
        stopwords: Option<&StopWords>,
    ) -> Result<()> {
        if self.doc_index.contains_key(&doc_id) {
            return Err(Error::DuplicateDocId(doc_id));
        }
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for &(term, count) in counts {
            if count == 0 {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("count for `{term}` must be positive"),
                });
            }
            if stopwords.is_some_and(|s| s.contains(term)) {
                continue;
            }
            let id = self.vocab.intern(term);
            *merged.entry(id).or_default() += count;
        }
        if self.df.len() < self.vocab.len() {
            self.df.resize(self.vocab.len(), 0);
        }
        for &id in merged.keys() {
            self.df[id] += 1;
        }
        let len: u64 = merged.values().map(|&c| c as u64).sum();
        self.total_len += len;
        self.doc_index.insert(doc_id.clone(), self.docs.len());
        self.docs.push(RawDoc {
            doc_id,
            counts: merged.into_iter().collect(),
            len,
        });
        Ok(())
    }

    fn finish(self) -> Corpus {
        let n_docs = self.docs.len();
        let avg_doc_len = if n_docs == 0 {
            0.0
        } else {
            self.total_len as f64 / n_docs as f64
        };
        Corpus {
            stats: CorpusStats {
                n_docs,
                n_terms: self.vocab.len(),
                avg_doc_len,
                df: self.df,
            },
            docs: self.docs,
            vocab: self.vocab,
            doc_index: self.doc_index,
        }
    }
}

/// Splits a record into its key and the remainder. A TAB is the separator;
/// lines without one fall back to the first run of whitespace.
fn split_key(line: &str) -> (&str, &str) {
    match line.split_once('\t') {
        Some((k, rest)) => (k.trim(), rest),
        None => {
            let line = line.trim_start();
            match line.find(char::is_whitespace) {
                Some(i) => (&line[..i], &line[i..]),
                None => (line, ""),
            }
        }
    }
}

/// Reads a corpus file. Terms listed in `stopwords` are dropped.
pub fn ingest_corpus<R: BufRead>(reader: R, stopwords: Option<&StopWords>) -> Result<Corpus> {
    let mut builder = CorpusBuilder::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (doc_id, rest) = split_key(&line);
        if doc_id.is_empty() {
            return Err(parse_err("missing document id".into()));
        }
        let mut counts = Vec::new();
        for token in rest.split_whitespace() {
            let (term, count) = token
                .rsplit_once(':')
                .ok_or_else(|| parse_err(format!("expected term:count, found `{token}`")))?;
            if term.is_empty() {
                return Err(parse_err(format!("empty term in `{token}`")));
            }
            let count: u32 = count
                .parse()
                .map_err(|_| parse_err(format!("bad count in `{token}`")))?;
            if count == 0 {
                return Err(parse_err(format!("count must be positive in `{token}`")));
            }
            counts.push((term, count));
        }
        builder
            .push(doc_id.to_owned(), &counts, stopwords)
            .map_err(|e| match e {
                Error::Parse { message, .. } => parse_err(message),
                other => other,
            })?;
    }
    Ok(builder.finish())
}

fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = split_key(&line);
        let b = b.trim();
        if a.is_empty() || b.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected two tab-separated fields".into(),
            });
        }
        out.push((a.to_owned(), b.to_owned()));
    }
    Ok(out)
}

/// Reads `doc_id<TAB>doc_id` link records.
pub fn read_links<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    read_pairs(reader)
}

/// Reads `doc_id<TAB>label` records. A document may carry one label only.
pub fn read_labels<R: BufRead>(reader: R) -> Result<HashMap<String, String>> {
    let mut labels = HashMap::new();
    for (doc, label) in read_pairs(reader)? {
        if labels.insert(doc.clone(), label).is_some() {
            return Err(Error::DuplicateDocId(doc));
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut set = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                set.insert(w.to_lowercase());
            }
        }
        Ok(Self(set))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

/// Lowercases, splits on non-alphanumeric characters and drops stop words.
/// Stemming is left to upstream preprocessing.
pub fn tokenize(text: &str, stopwords: Option<&StopWords>) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for token in text.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let token = token.to_lowercase();
        if stopwords.is_some_and(|s| s.contains(&token)) {
            continue;
        }
        *counts.entry(token).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    /// The TREC settings, `k1 = 2`, `b = 0.75`.
    fn default() -> Self {
        Self { k1: 2.0, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidConfig(format!(
                "BM25 needs k1 >= 0 and b in [0, 1], got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

/// Robertson's BM25 weight with the Robertson/Sparck Jones idf clamped at
/// zero:
///
/// `idf * tf (k1 + 1) / (k1 ((1 - b) + b len / avg_len) + tf)`,
/// `idf = max(0, ln((N - df + 0.5) / (df + 0.5)))`.
pub fn bm25_weight(
    tf: u32,
    df: u32,
    doc_len: u64,
    stats: &CorpusStats,
    params: &Bm25Params,
) -> Result<f64> {
    if stats.n_docs == 0 || !(stats.avg_doc_len > 0.0) {
        return Err(Error::InvalidStats("corpus has no documents".into()));
    }
    if tf == 0 || doc_len == 0 || df == 0 || df as usize > stats.n_docs {
        return Err(Error::InvalidStats(format!(
            "need tf >= 1, doc_len >= 1 and 1 <= df <= n_docs (tf={tf} df={df} len={doc_len})"
        )));
    }
    let n = stats.n_docs as f64;
    let df = df as f64;
    let tf = tf as f64;
    let idf = ((n - df + 0.5) / (df + 0.5)).ln().max(0.0);
    let norm = params.k1 * ((1.0 - params.b) + params.b * doc_len as f64 / stats.avg_doc_len);
    Ok(idf * tf * (params.k1 + 1.0) / (norm + tf))
}

/// A weighted document: BM25 content weights over the vocabulary and,
/// optionally, LF-IDF link weights over document positions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDoc {
    pub doc_id: String,
    pub terms: SparseVector<f64>,
    pub links: Option<SparseVector<f64>>,
}

/// BM25-weights every document. Terms whose weight clamps to zero are
/// dropped from the sparse vector.
pub fn weight_corpus(corpus: &Corpus, params: &Bm25Params) -> Result<Vec<WeightedDoc>> {
    params.validate()?;
    let t = corpus.stats.n_terms;
    corpus
        .docs
        .iter()
        .map(|doc| {
            let mut entries = Vec::with_capacity(doc.counts.len());
            for &(term, tf) in &doc.counts {
                let w = bm25_weight(tf, corpus.stats.df[term], doc.len, &corpus.stats, params)
                    .map_err(|e| e.in_document(&doc.doc_id))?;
                if w > 0.0 {
                    entries.push((term, w));
                }
            }
            Ok(WeightedDoc {
                doc_id: doc.doc_id.clone(),
                terms: SparseVector::new(t, entries)?,
                links: None,
            })
        })
        .collect()
}

/// The LF-IDF link representation: one row per document position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    /// Symmetric raw link frequencies.
    pub raw: Vec<SparseVector<f64>>,
    /// Number of distinct documents linking to or from each document.
    pub link_df: Vec<u32>,
    /// Raw frequencies scaled by the idf of the target document. Not
    /// length-normalized.
    pub weighted: Vec<SparseVector<f64>>,
}

/// Builds the LF-IDF matrix. Each link adds one at `(i, j)` and at `(j, i)`,
/// so a mutual pair records two. Each frequency is then multiplied by
/// `ln(n_docs / (1 + link_df[j]))`. Self links carry no information and are
/// skipped.
pub fn lfidf_build(links: &[(String, String)], corpus: &Corpus) -> Result<LinkMatrix> {
    let n = corpus.stats.n_docs;
    let mut freq: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (a, b) in links {
        let i = corpus
            .doc_position(a)
            .ok_or_else(|| Error::UnknownDocId(a.clone()))?;
        let j = corpus
            .doc_position(b)
            .ok_or_else(|| Error::UnknownDocId(b.clone()))?;
        if i == j {
            continue;
        }
        *freq[i].entry(j).or_default() += 1.0;
        *freq[j].entry(i).or_default() += 1.0;
    }
    let mut link_df = vec![0u32; n];
    for row in &freq {
        for &j in row.keys() {
            link_df[j] += 1;
        }
    }
    let idf: Vec<f64> = link_df
        .iter()
        .map(|&df| (n as f64 / (1.0 + df as f64)).ln())
        .collect();
    let mut raw = Vec::with_capacity(n);
    let mut weighted = Vec::with_capacity(n);
    for row in freq {
        let raw_entries: Vec<_> = row.into_iter().collect();
        let weighted_entries: Vec<_> = raw_entries
            .iter()
            .map(|&(j, f)| (j, f * idf[j]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        raw.push(SparseVector::new(n, raw_entries)?);
        weighted.push(SparseVector::new(n, weighted_entries)?);
    }
    Ok(LinkMatrix {
        raw,
        link_df,
        weighted,
    })
}

/// Attaches LF-IDF rows to BM25-weighted documents (same corpus order).
pub fn attach_links(docs: &mut [WeightedDoc], links: &LinkMatrix) -> Result<()> {
    if docs.len() != links.weighted.len() {
        return Err(Error::DimensionMismatch {
            expected: links.weighted.len(),
            found: docs.len(),
        });
    }
    for (doc, row) in docs.iter_mut().zip(&links.weighted) {
        doc.links = Some(row.clone());
    }
    Ok(())
}

/// Output of [`tfidf_cull`].
#[derive(Debug, Clone, PartialEq)]
pub struct Culled {
    /// Original term ids kept, in descending rank order. Position in this
    /// list is the new term id.
    pub kept: Vec<usize>,
    pub docs: Vec<WeightedDoc>,
}

/// Keeps the `n_keep` terms with the largest summed weight across all
/// documents (the column sums of the document-by-term matrix) and re-indexes
/// them densely in rank order. Ties go to the lower original term id.
pub fn tfidf_cull(docs: &[WeightedDoc], n_keep: usize) -> Result<Culled> {
    if n_keep == 0 {
        return Err(Error::InvalidConfig("n_keep must be at least 1".into()));
    }
    let t = docs.first().map_or(0, |d| d.terms.dim());
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); t];
    for doc in docs {
        if doc.terms.dim() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: doc.terms.dim(),
            });
        }
        for &(term, w) in doc.terms.entries() {
            columns[term].push(w);
        }
    }
    // Summing each column in sorted order makes the ranks independent of
    // document order down to the last bit.
    let mut ranked: Vec<(usize, f64)> = columns
        .into_iter()
        .enumerate()
        .map(|(term, mut ws)| {
            ws.sort_by(f64::total_cmp);
            (term, ws.iter().sum())
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n_keep);

    let kept: Vec<usize> = ranked.into_iter().map(|(term, _)| term).collect();
    let mut remap = vec![usize::MAX; t];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let out = docs
        .iter()
        .map(|doc| {
            let entries = doc
                .terms
                .entries()
                .iter()
                .filter(|&&(term, _)| remap[term] != usize::MAX)
                .map(|&(term, w)| (remap[term], w))
                .collect();
            Ok(WeightedDoc {
                doc_id: doc.doc_id.clone(),
                terms: SparseVector::from_unsorted(kept.len(), entries)?,
                links: doc.links.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Culled { kept, docs: out })
}

/// Unitizes content and links separately and concatenates them. Without
/// links the result is the unitized content.
pub fn combine<T: Scalar>(
    content: &DenseVector<T>,
    links: Option<&DenseVector<T>>,
) -> Result<DenseVector<T>> {
    let content = content.unit_normalize()?;
    match links {
        None => Ok(content),
        Some(links) => Ok(content.concat(&links.unit_normalize()?)),
    }
}

/// Sparse counterpart of [`combine`] used by the encoding pipeline. The link
/// part occupies dimensions `terms.dim()..terms.dim() + links.dim()`; a
/// document without links keeps zeros there.
pub fn combine_sparse(
    terms: &SparseVector<f64>,
    links: Option<&SparseVector<f64>>,
) -> Result<SparseVector<f64>> {
    let content = terms.unit_normalize()?;
    let Some(links) = links else {
        return Ok(content);
    };
    let offset = terms.dim();
    let mut entries = content.entries().to_vec();
    if !links.is_empty() {
        let links = links.unit_normalize()?;
        entries.extend(links.entries().iter().map(|&(j, w)| (offset + j, w)));
    }
    SparseVector::new(offset + links.dim(), entries)
}

/// Names the dimensions of the space [`combine_sparse`] produces: term
/// dimensions first, then one dimension per linked document, named
/// `link <doc_id>`. Corpus terms never contain whitespace, so the two kinds of
/// name cannot collide.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    terms: Vec<String>,
    docs: Vec<String>,
}

impl FeatureSpace {
    pub fn new(terms: Vec<String>, docs: Vec<String>) -> Self {
        Self { terms, docs }
    }

    /// Full vocabulary followed by every document of the corpus.
    pub fn for_corpus(corpus: &Corpus) -> Self {
        Self::new(
            corpus.vocab.terms().to_vec(),
            corpus.doc_ids().map(str::to_owned).collect(),
        )
    }

    /// The same space restricted to the terms kept by [`tfidf_cull`].
    pub fn culled(&self, kept: &[usize]) -> Self {
        Self::new(
            kept.iter().map(|&t| self.terms[t].clone()).collect(),
            self.docs.clone(),
        )
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn dim_with_links(&self) -> usize {
        self.terms.len() + self.docs.len()
    }

    pub fn name(&self, dim: usize) -> std::borrow::Cow<'_, str> {
        match self.terms.get(dim) {
            Some(term) => term.as_str().into(),
            None => link_feature(&self.docs[dim - self.terms.len()]).into(),
        }
    }
}

pub fn link_feature(doc_id: &str) -> String {
    format!("link {doc_id}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_doc_corpus() -> Corpus {
        ingest_corpus("d1\ta:2 b:1\nd2\tb:3\n".as_bytes(), None).unwrap()
    }

    #[test]
    fn ingest_empty() {
        let c = ingest_corpus("".as_bytes(), None).unwrap();
        assert_eq!(c.stats.n_docs, 0);
        assert!(c.docs.is_empty());
    }

    #[test]
    fn ingest_two_lines() {
        let c = two_doc_corpus();
        let a = c.vocab.id("a").unwrap();
        let b = c.vocab.id("b").unwrap();
        assert_eq!(c.stats.n_docs, 2);
        assert_eq!(c.stats.df[b], 2);
        assert_eq!(c.stats.df[a], 1);
        assert_eq!(c.stats.avg_doc_len, 3.0);
        // the space-separated form is accepted too
        let c2 = ingest_corpus("d1 a:2 b:1\nd2 b:3\n".as_bytes(), None).unwrap();
        assert_eq!(c2.stats, c.stats);
    }

    #[test]
    fn ingest_reports_malformed_line() {
        let err = ingest_corpus("d1\ta:1\nd2\tb:2\nd3 a:\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ingest_corpus("d1\ta:0\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = ingest_corpus("d1\tnocolon\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn ingest_rejects_duplicate_ids() {
        let err = ingest_corpus("d1\ta:1\nd1\tb:1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::DuplicateDocId(ref d) if d == "d1"));
    }

    #[test]
    fn ingest_drops_stopwords() {
        let stop: StopWords = ["the"].into_iter().collect();
        let c = ingest_corpus("d1\tthe:5 cat:1\n".as_bytes(), Some(&stop)).unwrap();
        assert_eq!(c.vocab.len(), 1);
        assert_eq!(c.docs[0].len, 1);
    }

    #[test]
    fn tokenizer_lowercases_and_filters() {
        let stop: StopWords = ["the"].into_iter().collect();
        let counts = tokenize("The cat, the CAT; a-dog!", Some(&stop));
        let expected: BTreeMap<String, u32> = [
            ("cat".to_owned(), 2),
            ("a".to_owned(), 1),
            ("dog".to_owned(), 1),
        ]
        .into_iter()
        .collect();
        assert_eq!(counts, expected);
    }

    fn stats(n_docs: usize, avg: f64) -> CorpusStats {
        CorpusStats {
            n_docs,
            n_terms: 0,
            avg_doc_len: avg,
            df: vec![],
        }
    }

    #[test]
    fn bm25_hand_evaluation() {
        let w = bm25_weight(2, 1, 10, &stats(4, 10.0), &Bm25Params::default()).unwrap();
        let idf = (3.5f64 / 1.5).ln();
        assert!((idf - 0.8473).abs() < 1e-4);
        assert!((w - 1.2710).abs() < 1e-4, "{w}");
    }

    #[test]
    fn bm25_ubiquitous_term_is_zero() {
        let w = bm25_weight(3, 4, 10, &stats(4, 10.0), &Bm25Params::default()).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn bm25_saturates() {
        let s = stats(100, 10.0);
        let p = Bm25Params::default();
        let idf = (99.5f64 / 1.5).ln();
        let w = bm25_weight(1_000_000, 1, 10, &s, &p).unwrap();
        assert!((w - idf * (p.k1 + 1.0)).abs() < 1e-3);
    }

    #[test]
    fn bm25_rejects_empty_stats() {
        assert!(matches!(
            bm25_weight(1, 1, 1, &stats(0, 0.0), &Bm25Params::default()),
            Err(Error::InvalidStats(_))
        ));
    }

    proptest! {
        #[test]
        fn bm25_monotone(tf in 1u32..50, df in 1u32..100, len in 1u64..500) {
            let s = stats(100, 37.0);
            let p = Bm25Params::default();
            let w = bm25_weight(tf, df, len, &s, &p).unwrap();
            prop_assert!(bm25_weight(tf + 1, df, len, &s, &p).unwrap() >= w);
            prop_assert!(bm25_weight(tf, df + 1, len, &s, &p).unwrap() <= w);
        }
    }

    fn corpus_of(ids: &[&str]) -> Corpus {
        Corpus::from_docs(ids.iter().map(|&d| (d, vec![("x", 1u32)]))).unwrap()
    }

    fn pairs(links: &[(&str, &str)]) -> Vec<(String, String)> {
        links
            .iter()
            .map(|&(a, b)| (a.to_owned(), b.to_owned()))
            .collect()
    }

    #[test]
    fn lfidf_no_links() {
        let c = corpus_of(&["d1", "d2", "d3"]);
        let m = lfidf_build(&[], &c).unwrap();
        assert!(m.weighted.iter().all(SparseVector::is_empty));
    }

    #[test]
    fn lfidf_single_pair() {
        let c = corpus_of(&["d1", "d2", "d3", "d4"]);
        let m = lfidf_build(&pairs(&[("d1", "d2")]), &c).unwrap();
        assert_eq!(m.weighted[0].nnz(), 1);
        assert!(m.weighted[0].get(1) > 0.0);
        assert_eq!(m.weighted[1].nnz(), 1);
        assert!(m.weighted[1].get(0) > 0.0);
        // idf = ln(4 / 2)
        assert!((m.weighted[0].get(1) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lfidf_mutual_pair_records_two() {
        let c = corpus_of(&["d1", "d2", "d3", "d4", "d5"]);
        let m = lfidf_build(&pairs(&[("d1", "d2"), ("d2", "d1"), ("d1", "d3")]), &c).unwrap();
        assert_eq!(m.raw[0].get(1), 2.0);
        assert_eq!(m.raw[1].get(0), 2.0);
        assert_eq!(m.raw[0].get(2), 1.0);
        assert_eq!(m.link_df[0], 2);
        // not normalized: weighted value is raw frequency times idf
        let idf_d2 = (5.0f64 / 2.0).ln();
        assert!((m.weighted[0].get(1) - 2.0 * idf_d2).abs() < 1e-12);
    }

    #[test]
    fn lfidf_unknown_doc() {
        let c = corpus_of(&["d1"]);
        let err = lfidf_build(&pairs(&[("d1", "zz")]), &c).unwrap_err();
        assert!(matches!(err, Error::UnknownDocId(ref d) if d == "zz"));
    }

    proptest! {
        #[test]
        fn lfidf_raw_is_symmetric(links in prop::collection::vec((0usize..8, 0usize..8), 0..40)) {
            let ids: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
            let c = Corpus::from_docs(ids.iter().map(|d| (d.clone(), vec![("x", 1u32)]))).unwrap();
            let links: Vec<_> = links.iter().map(|&(a, b)| (ids[a].clone(), ids[b].clone())).collect();
            let m = lfidf_build(&links, &c).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert_eq!(m.raw[i].get(j), m.raw[j].get(i));
                }
            }
        }
    }

    fn wdoc(id: &str, dim: usize, entries: Vec<(usize, f64)>) -> WeightedDoc {
        WeightedDoc {
            doc_id: id.into(),
            terms: SparseVector::new(dim, entries).unwrap(),
            links: None,
        }
    }

    #[test]
    fn cull_keeps_top_column_sums() {
        // column sums a:5 b:3 c:1
        let docs = vec![
            wdoc("x", 3, vec![(0, 2.0), (1, 1.0)]),
            wdoc("y", 3, vec![(0, 3.0), (2, 1.0)]),
            wdoc("z", 3, vec![(1, 2.0)]),
        ];
        let culled = tfidf_cull(&docs, 2).unwrap();
        assert_eq!(culled.kept, vec![0, 1]);
        assert_eq!(culled.docs[1].terms.entries(), &[(0, 3.0)]);
        assert_eq!(culled.docs[0].terms.dim(), 2);
    }

    #[test]
    fn cull_everything_when_n_keep_is_large() {
        let docs = vec![
            wdoc("x", 3, vec![(0, 1.0), (2, 4.0)]),
            wdoc("y", 3, vec![(1, 2.0)]),
        ];
        let culled = tfidf_cull(&docs, 10).unwrap();
        assert_eq!(culled.kept, vec![2, 1, 0]);
        for (orig, new) in docs.iter().zip(&culled.docs) {
            for (new_id, &old_id) in culled.kept.iter().enumerate() {
                assert_eq!(new.terms.get(new_id), orig.terms.get(old_id));
            }
        }
    }

    #[test]
    fn cull_ties_prefer_lower_id() {
        let docs = vec![wdoc("x", 3, vec![(0, 1.0), (1, 2.0), (2, 2.0)])];
        assert_eq!(tfidf_cull(&docs, 1).unwrap().kept, vec![1]);
        assert!(tfidf_cull(&docs, 0).is_err());
    }

    proptest! {
        #[test]
        fn cull_is_order_invariant(
            weights in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 12), 2..10),
            keep in 1usize..12,
            rotate in 0usize..10,
        ) {
            let docs: Vec<_> = weights.iter().enumerate().map(|(i, ws)| {
                let entries = ws.iter().enumerate().filter(|(_, w)| **w > 1.0).map(|(j, w)| (j, *w)).collect();
                wdoc(&format!("d{i}"), 12, entries)
            }).collect();
            let mut shuffled = docs.clone();
            shuffled.rotate_left(rotate % docs.len());
            shuffled.reverse();
            let a = tfidf_cull(&docs, keep).unwrap();
            let b = tfidf_cull(&shuffled, keep).unwrap();
            prop_assert_eq!(&a.kept, &b.kept);
            for doc in &a.docs {
                let other = b.docs.iter().find(|d| d.doc_id == doc.doc_id).unwrap();
                prop_assert_eq!(doc, other);
            }
        }
    }

    #[test]
    fn combine_examples() {
        let c = DenseVector::new(vec![3.0f64, 4.0]);
        let l = DenseVector::new(vec![1.0, 0.0]);
        let out = combine(&c, Some(&l)).unwrap();
        let expected = [0.6, 0.8, 1.0, 0.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(combine(&c, None).unwrap(), c.unit_normalize().unwrap());
        let zero = DenseVector::zeros(2);
        assert!(matches!(combine(&c, Some(&zero)), Err(Error::ZeroVector)));
    }

    proptest! {
        #[test]
        fn combine_halves_are_unit(
            c in prop::collection::vec(-5.0f64..5.0, 1..20),
            l in prop::collection::vec(-5.0f64..5.0, 1..20),
        ) {
            let (c, l) = (DenseVector::new(c), DenseVector::new(l));
            prop_assume!(c.norm() > 1e-6 && l.norm() > 1e-6);
            let out = combine(&c, Some(&l)).unwrap();
            let (head, tail) = out.as_slice().split_at(c.dim());
            let n1 = head.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n2 = tail.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n1 - 1.0).abs() < 1e-12);
            prop_assert!((n2 - 1.0).abs() < 1e-12);
            prop_assert!((out.norm() - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn weighting_end_to_end() {
        let c = ingest_corpus("d1\ta:2 b:1\nd2\tb:3\nd3\tb:1 c:1\n".as_bytes(), None).unwrap();
        let docs = weight_corpus(&c, &Bm25Params::default()).unwrap();
        // b appears in every document so its idf clamps to zero
        let b = c.vocab.id("b").unwrap();
        assert_eq!(docs[0].terms.get(b), 0.0);
        assert!(docs[0].terms.get(c.vocab.id("a").unwrap()) > 0.0);
        assert!(docs[1].terms.is_empty());
        assert_eq!(docs[2].terms.nnz(), 1);
    }

    #[test]
    fn labels_and_links_files() {
        let labels = read_labels("d1\tsports\nd2\tarts\n".as_bytes()).unwrap();
        assert_eq!(labels["d2"], "arts");
        assert!(read_labels("d1\n".as_bytes()).is_err());
        let links = read_links("d1\td2\n\nd2\td3\n".as_bytes()).unwrap();
        assert_eq!(links.len(), 2);
    }
}
