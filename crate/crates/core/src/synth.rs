//! Synthetic labelled corpora: a mixture of multinomials over a Zipfian
//! vocabulary, with class-biased links.
//!
//! Every class owns a topic, a Zipf distribution over a random subset of the
//! vocabulary. A document picks its class uniformly, a length around
//! `doc_len`, and a topic share in `[0, 2 * topic_share]`; each token comes
//! from the class topic with that probability and from the shared background
//! distribution otherwise.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::represent::Corpus;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_classes: usize,
    pub n_terms: usize,
    /// Vocabulary entries in each class topic.
    pub topic_terms: usize,
    /// Mean probability that a token comes from the document's class topic.
    pub topic_share: f64,
    /// Mean tokens per document.
    pub doc_len: usize,
    pub zipf_exponent: f64,
    /// Outgoing links per document.
    pub links_per_doc: usize,
    /// Probability that a link stays within the document's class.
    pub link_affinity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 5000,
            n_classes: 15,
            n_terms: 20_000,
            topic_terms: 400,
            topic_share: 0.25,
            doc_len: 150,
            zipf_exponent: 1.05,
            links_per_doc: 4,
            link_affinity: 0.6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_docs == 0 || self.n_classes == 0 || self.n_terms == 0 || self.doc_len == 0 {
            return bad("document, class, term and length counts must be positive");
        }
        if self.topic_terms == 0 || self.topic_terms > self.n_terms {
            return bad("topic_terms must be within 1..=n_terms");
        }
        if !(0.0..=0.5).contains(&self.topic_share) {
            return bad("topic_share must be within [0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.link_affinity) {
            return bad("link_affinity must be within [0, 1]");
        }
        if !(self.zipf_exponent > 0.0) {
            return bad("zipf_exponent must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// `(doc_id, [(term, count)])`, terms in first-use order.
    pub docs: Vec<(String, Vec<(String, u32)>)>,
    /// Class of each document, aligned with `docs`.
    pub classes: Vec<usize>,
    pub links: Vec<(String, String)>,
}

pub fn term_name(i: usize) -> String {
    format!("w{i}")
}

pub fn doc_name(i: usize) -> String {
    format!("doc{i:05}")
}

pub fn class_name(c: usize) -> String {
    format!("class{c:02}")
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

impl SynthCorpus {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = |n| {
            WeightedIndex::new(zipf_weights(n, config.zipf_exponent))
                .expect("zipf weights are positive")
        };
        let background = weights(config.n_terms);
        // background ranks are shuffled so frequent terms are spread over ids
        let mut background_terms: Vec<usize> = (0..config.n_terms).collect();
        rand::seq::SliceRandom::shuffle(background_terms.as_mut_slice(), &mut rng);
        let topic_dist = weights(config.topic_terms);
        let topics: Vec<Vec<usize>> = (0..config.n_classes)
            .map(|_| sample(&mut rng, config.n_terms, config.topic_terms).into_vec())
            .collect();

        let mut docs = Vec::with_capacity(config.n_docs);
        let mut classes = Vec::with_capacity(config.n_docs);
        for i in 0..config.n_docs {
            let class = rng.random_range(0..config.n_classes);
            let len = rng
                .random_range(config.doc_len / 2..=config.doc_len * 3 / 2)
                .max(1);
            let share = rng.random_range(0.0..=2.0 * config.topic_share);
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            let mut first_use: Vec<usize> = Vec::new();
            for _ in 0..len {
                let term = if rng.random_bool(share) {
                    topics[class][topic_dist.sample(&mut rng)]
                } else {
                    background_terms[background.sample(&mut rng)]
                };
                let c = counts.entry(term).or_insert(0);
                if *c == 0 {
                    first_use.push(term);
                }
                *c += 1;
            }
            let terms = first_use
                .into_iter()
                .map(|t| (term_name(t), counts[&t]))
                .collect();
            docs.push((doc_name(i), terms));
            classes.push(class);
        }

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); config.n_classes];
        for (i, &c) in classes.iter().enumerate() {
            by_class[c].push(i);
        }
        let mut links = Vec::new();
        for (i, &c) in classes.iter().enumerate() {
            for _ in 0..config.links_per_doc {
                let j = if rng.random_bool(config.link_affinity) {
                    by_class[c][rng.random_range(0..by_class[c].len())]
                } else {
                    rng.random_range(0..config.n_docs)
                };
                if j != i {
                    links.push((doc_name(i), doc_name(j)));
                }
            }
        }
        Ok(Self {
            docs,
            classes,
            links,
        })
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_docs(self.docs.iter().map(|(d, terms)| {
            (
                d.clone(),
                terms.iter().map(|(t, c)| (t.as_str(), *c)).collect(),
            )
        }))
    }

    pub fn labels(&self) -> HashMap<String, String> {
        self.docs
            .iter()
            .zip(&self.classes)
            .map(|((d, _), &c)| (d.clone(), class_name(c)))
            .collect()
    }

    /// `doc_id<TAB>term:count ...` lines.
    pub fn write_corpus<W: Write>(&self, mut w: W) -> Result<()> {
        for (d, terms) in &self.docs {
            write!(w, "{d}\t")?;
            for (k, (t, c)) in terms.iter().enumerate() {
                if k > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{t}:{c}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, mut w: W) -> Result<()> {
        for ((d, _), &c) in self.docs.iter().zip(&self.classes) {
            writeln!(w, "{d}\t{}", class_name(c))?;
        }
        Ok(())
    }

    pub fn write_links<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b) in &self.links {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::represent::{ingest_corpus, read_labels, read_links};

    fn small() -> SynthConfig {
        SynthConfig {
            n_docs: 300,
            n_classes: 5,
            n_terms: 2000,
            topic_terms: 100,
            doc_len: 60,
            seed: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = SynthCorpus::generate(&small()).unwrap();
        assert_eq!(a, SynthCorpus::generate(&small()).unwrap());
        assert_ne!(
            a,
            SynthCorpus::generate(&SynthConfig { seed: 5, ..small() }).unwrap()
        );
        assert_eq!(a.docs.len(), 300);
        assert!(a.classes.iter().all(|&c| c < 5));
        assert!(a.links.iter().all(|(x, y)| x != y));
        let c = a.corpus().unwrap();
        assert_eq!(c.stats.n_docs, 300);
        assert!(c.stats.n_terms > 500);
    }

    #[test]
    fn files_read_back() {
        let a = SynthCorpus::generate(&small()).unwrap();
        let (mut cb, mut lb, mut kb) = (Vec::new(), Vec::new(), Vec::new());
        a.write_corpus(&mut cb).unwrap();
        a.write_labels(&mut lb).unwrap();
        a.write_links(&mut kb).unwrap();
        let corpus = ingest_corpus(cb.as_slice(), None).unwrap();
        assert_eq!(corpus, a.corpus().unwrap());
        assert_eq!(read_labels(lb.as_slice()).unwrap(), a.labels());
        assert_eq!(read_links(kb.as_slice()).unwrap(), a.links);
    }

    #[test]
    fn class_topics_are_visible_in_counts() {
        let cfg = SynthConfig {
            topic_share: 0.5,
            ..small()
        };
        let a = SynthCorpus::generate(&cfg).unwrap();
        // documents of the same class share more vocabulary than documents
        // of different classes
        let sets: Vec<std::collections::HashSet<&str>> = a
            .docs
            .iter()
            .map(|(_, t)| t.iter().map(|(w, _)| w.as_str()).collect())
            .collect();
        let (mut same, mut diff, mut ns, mut nd) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..100 {
            for j in i + 1..100 {
                let overlap = sets[i].intersection(&sets[j]).count();
                if a.classes[i] == a.classes[j] {
                    same += overlap;
                    ns += 1;
                } else {
                    diff += overlap;
                    nd += 1;
                }
            }
        }
        assert!(same as f64 / ns as f64 > 1.5 * diff as f64 / nd as f64);
    }

    #[test]
    fn bad_configs() {
        assert!(SynthConfig {
            topic_terms: 0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            topic_share: 0.9,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            n_docs: 0,
            ..small()
        }
        .validate()
        .is_err());
    }
}
