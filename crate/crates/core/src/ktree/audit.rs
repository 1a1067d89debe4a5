//! Full structural check of a tree, recomputing everything bottom-up.

use std::fmt;

use super::{KTree, Link, NodeId, Variant};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed distance between a stored centroid and the recomputed mean,
    /// relative to the larger of the mean's norm and the largest leaf norm
    /// beneath it.
    pub mean_relative: f64,
    /// Allowed deviation of a modified-variant centroid norm from 1.
    pub unit_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mean_relative: 1e-6,
            unit_norm: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub nodes: usize,
    pub leaves: usize,
    pub documents: u64,
    /// Entries per level, root first.
    pub level_sizes: Vec<usize>,
    /// Largest observed mean-invariant error (relative); unmodified only.
    pub worst_mean_error: f64,
    /// Largest observed `| |c| - 1 |`; modified only.
    pub worst_unit_error: f64,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "nodes={} leaves={} documents={} levels={:?}",
            self.nodes, self.leaves, self.documents, self.level_sizes
        )?;
        writeln!(
            f,
            "worst_mean_error={:e} worst_unit_error={:e}",
            self.worst_mean_error, self.worst_unit_error
        )?;
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {v}")?;
            }
            write!(f, "{} violation(s)", self.violations.len())
        }
    }
}

struct Subtree {
    /// Sum of the leaf vectors beneath.
    sum: Vec<f64>,
    count: u64,
    max_leaf_norm: f64,
}

impl<T: Scalar> KTree<T> {
    pub fn audit(&self) -> AuditReport {
        self.audit_with(Tolerances::default())
    }

    /// Checks height balance, occupancy, weight conservation, the mean
    /// invariant (unmodified) and the unit invariant (modified).
    pub fn audit_with(&self, tol: Tolerances) -> AuditReport {
        let mut report = AuditReport {
            level_sizes: vec![0; self.depth],
            ..AuditReport::default()
        };
        let mut seen = vec![false; self.nodes.len()];
        let dims = self.dims.unwrap_or(0);
        let root = self.check_node(self.root, 1, dims, tol, &mut seen, &mut report);
        report.documents = root.count;
        if root.count != self.n_inserted {
            report.violations.push(format!(
                "n_inserted is {} but the leaves hold {}",
                self.n_inserted, root.count
            ));
        }
        if self.n_inserted == 0 && self.depth != 1 {
            report
                .violations
                .push(format!("empty tree has depth {}", self.depth));
        }
        report
    }

    fn check_node(
        &self,
        id: NodeId,
        level: usize,
        dims: usize,
        tol: Tolerances,
        seen: &mut [bool],
        report: &mut AuditReport,
    ) -> Subtree {
        let mut out = Subtree {
            sum: vec![0.0; dims],
            count: 0,
            max_leaf_norm: 0.0,
        };
        if id >= self.nodes.len() || seen[id] {
            report
                .violations
                .push(format!("node {id} is missing or reachable twice"));
            return out;
        }
        seen[id] = true;
        report.nodes += 1;
        let node = &self.nodes[id];
        let l = node.entries.len();
        if let Some(size) = report.level_sizes.get_mut(level - 1) {
            *size += l;
        }

        let is_empty_root = id == self.root && self.n_inserted == 0;
        if !is_empty_root && (l < 1 || l > self.config.order) {
            report.violations.push(format!(
                "node {id} at level {level} holds {l} entries, allowed 1..={}",
                self.config.order
            ));
        }
        if node.leaf != (level == self.depth) {
            report.violations.push(format!(
                "node {id} at level {level} is {} but the tree depth is {}",
                if node.leaf { "a leaf" } else { "internal" },
                self.depth
            ));
        }
        if node.leaf {
            report.leaves += 1;
        }

        for (i, e) in node.entries.iter().enumerate() {
            if e.vector.dim() != dims {
                report.violations.push(format!(
                    "node {id} entry {i} has {} dims, tree has {dims}",
                    e.vector.dim()
                ));
                continue;
            }
            match e.link {
                Link::Doc(_) => {
                    if !node.leaf {
                        report
                            .violations
                            .push(format!("internal node {id} entry {i} holds a document"));
                    }
                    if e.weight != 1 {
                        report
                            .violations
                            .push(format!("leaf node {id} entry {i} has weight {}", e.weight));
                    }
                    for (s, x) in out.sum.iter_mut().zip(e.vector.iter()) {
                        *s += x.as_f64();
                    }
                    out.count += 1;
                    out.max_leaf_norm = out.max_leaf_norm.max(e.vector.norm());
                }
                Link::Child(c) => {
                    if node.leaf {
                        report
                            .violations
                            .push(format!("leaf node {id} entry {i} links to a node"));
                        continue;
                    }
                    let sub = self.check_node(c, level + 1, dims, tol, seen, report);
                    if sub.count != e.weight {
                        report.violations.push(format!(
                            "node {id} entry {i} has weight {} but its subtree holds {}",
                            e.weight, sub.count
                        ));
                    }
                    self.check_centroid(id, i, &e.vector, &sub, tol, report);
                    for (s, x) in out.sum.iter_mut().zip(&sub.sum) {
                        *s += x;
                    }
                    out.count += sub.count;
                    out.max_leaf_norm = out.max_leaf_norm.max(sub.max_leaf_norm);
                }
            }
        }
        out
    }

    fn check_centroid(
        &self,
        id: NodeId,
        i: usize,
        centroid: &crate::vecspace::DenseVector<T>,
        sub: &Subtree,
        tol: Tolerances,
        report: &mut AuditReport,
    ) {
        match self.config.variant {
            Variant::Unmodified => {
                if sub.count == 0 {
                    return;
                }
                let n = sub.count as f64;
                let mut diff = 0.0;
                let mut mean_norm = 0.0;
                for (s, c) in sub.sum.iter().zip(centroid.iter()) {
                    let m = s / n;
                    diff += (c.as_f64() - m).powi(2);
                    mean_norm += m * m;
                }
                let scale = mean_norm
                    .sqrt()
                    .max(sub.max_leaf_norm)
                    .max(f64::MIN_POSITIVE);
                let err = diff.sqrt() / scale;
                report.worst_mean_error = report.worst_mean_error.max(err);
                if !(err <= tol.mean_relative) {
                    report.violations.push(format!(
                        "node {id} entry {i} centroid is {err:e} (relative) from its subtree mean"
                    ));
                }
            }
            Variant::Modified => {
                let err = (centroid.norm() - 1.0).abs();
                report.worst_unit_error = report.worst_unit_error.max(err);
                if !(err <= tol.unit_norm) {
                    report.violations.push(format!(
                        "node {id} entry {i} centroid norm is off by {err:e}"
                    ));
                }
            }
        }
    }
}
