//! JSON tree dump.
//!
//! ```text
//! {"format":"ritree-ktree","version":1,"scalar":"f64",
//!  "config":{"order":3,"variant":"modified","rng_seed":7},
//!  "rng_word_pos":"96","dims":2,"depth":2,"n_inserted":4,
//!  "root":[{"weight":2,"vector":[..],"child":[{"doc":0,"vector":[..],"tombstone":false},..]},..]}
//! ```
//!
//! A node is an array of entries. Internal entries carry `weight`, `vector`
//! and a nested `child` node; leaf entries carry `doc`, `vector` and a
//! `tombstone` flag that is always `false`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::{Entry, KTree, KTreeConfig, Link, Node, NodeId, Variant};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vecspace::DenseVector;

pub const FORMAT_NAME: &str = "ritree-ktree";
pub const FORMAT_VERSION: u64 = 1;

impl<T: Scalar> KTree<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "scalar": T::NAME,
            "config": {
                "order": self.config.order,
                "variant": self.config.variant.as_str(),
                "rng_seed": self.config.rng_seed,
            },
            "rng_word_pos": self.rng.get_word_pos().to_string(),
            "dims": self.dims,
            "depth": self.depth,
            "n_inserted": self.n_inserted,
            "root": self.node_json(self.root),
        })
    }

    fn node_json(&self, id: NodeId) -> Value {
        let entries = self.nodes[id]
            .entries
            .iter()
            .map(|e| {
                let vector: Vec<f64> = e.vector.iter().map(|x| x.as_f64()).collect();
                match e.link {
                    Link::Doc(d) => json!({"doc": d, "vector": vector, "tombstone": false}),
                    Link::Child(c) => json!({
                        "weight": e.weight,
                        "vector": vector,
                        "child": self.node_json(c),
                    }),
                }
            })
            .collect();
        Value::Array(entries)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(&mut writer, &self.to_json())
            .map_err(|e| Error::format(None, e.to_string()))?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        self.to_json().to_string()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json(&parse_json(text)?)
    }

    pub fn read_json<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::InvalidData => Error::format(None, "stream is not UTF-8"),
                _ => Error::Io(e),
            })?;
        Self::from_json_str(&text)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let top = object(value, "document")?;
        let format = string_field(top, "format")?;
        if format != FORMAT_NAME {
            return Err(Error::format(None, format!("unknown format `{format}`")));
        }
        let version = u64_field(top, "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                None,
                format!("unsupported version {version}"),
            ));
        }
        let scalar = string_field(top, "scalar")?;
        if scalar != T::NAME {
            return Err(Error::format(
                None,
                format!("dump holds {scalar} vectors, expected {}", T::NAME),
            ));
        }

        let config = object(field(top, "config")?, "config")?;
        let order = u64_field(config, "order")? as usize;
        let variant: Variant = string_field(config, "variant")?
            .parse()
            .map_err(|e: Error| Error::format(None, e.to_string()))?;
        let rng_seed = u64_field(config, "rng_seed")?;
        let config = KTreeConfig::new(order, variant, rng_seed)
            .map_err(|e| Error::format(None, e.to_string()))?;

        let word_pos: u128 = string_field(top, "rng_word_pos")?
            .parse()
            .map_err(|_| Error::format(None, "`rng_word_pos` is not an integer"))?;
        let dims = match field(top, "dims")? {
            Value::Null => None,
            v => Some(as_u64(v, "dims")? as usize),
        };
        let depth = u64_field(top, "depth")? as usize;
        let n_inserted = u64_field(top, "n_inserted")?;

        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_word_pos(word_pos);
        let mut tree = KTree {
            config,
            nodes: Vec::new(),
            root: 0,
            depth,
            dims,
            n_inserted,
            rng,
        };
        let mut reader = NodeReader {
            tree: &mut tree,
            leaves_seen: 0,
        };
        let (root, _) = reader.node(field(top, "root")?, 1)?;
        let leaves_seen = reader.leaves_seen;
        tree.root = root;

        if leaves_seen != n_inserted {
            return Err(Error::format(
                None,
                format!("`n_inserted` is {n_inserted} but the tree holds {leaves_seen} documents"),
            ));
        }
        if n_inserted == 0 && depth != 1 {
            return Err(Error::format(None, "an empty tree has depth 1"));
        }
        Ok(tree)
    }
}

struct NodeReader<'a, T> {
    tree: &'a mut KTree<T>,
    leaves_seen: u64,
}

impl<T: Scalar> NodeReader<'_, T> {
    /// Returns the new node's id and its total weight.
    fn node(&mut self, value: &Value, level: usize) -> Result<(NodeId, u64)> {
        let items = value
            .as_array()
            .ok_or_else(|| Error::format(None, "node is not an array"))?;
        if level > self.tree.depth {
            return Err(Error::format(None, "node lies below the declared depth"));
        }
        let leaf = level == self.tree.depth;
        let id = self.tree.nodes.len();
        self.tree.nodes.push(Node {
            entries: Vec::with_capacity(items.len()),
            leaf,
        });
        let mut entries = Vec::with_capacity(items.len());
        for item in items {
            let obj = object(item, "entry")?;
            let vector = self.vector(field(obj, "vector")?)?;
            let entry = if leaf {
                if obj.contains_key("child") {
                    return Err(Error::format(None, "leaf entry has a child"));
                }
                if obj.get("tombstone").and_then(Value::as_bool) != Some(false) {
                    return Err(Error::format(None, "leaf entry tombstone must be false"));
                }
                self.leaves_seen += 1;
                Entry {
                    vector,
                    weight: 1,
                    link: Link::Doc(u64_field(obj, "doc")?),
                }
            } else {
                if obj.contains_key("doc") {
                    return Err(Error::format(None, "internal entry holds a document"));
                }
                let weight = u64_field(obj, "weight")?;
                let (child, child_weight) = self.node(field(obj, "child")?, level + 1)?;
                if child_weight != weight {
                    return Err(Error::format(
                        None,
                        format!(
                            "entry weight {weight} disagrees with its subtree ({child_weight})"
                        ),
                    ));
                }
                Entry {
                    vector,
                    weight,
                    link: Link::Child(child),
                }
            };
            entries.push(entry);
        }
        if !leaf && entries.is_empty() {
            return Err(Error::format(None, "internal node has no entries"));
        }
        let total = entries.iter().map(|e| e.weight).sum();
        self.tree.nodes[id].entries = entries;
        Ok((id, total))
    }

    fn vector(&mut self, value: &Value) -> Result<DenseVector<T>> {
        let items = value
            .as_array()
            .ok_or_else(|| Error::format(None, "vector is not an array"))?;
        let values = items
            .iter()
            .map(|x| {
                x.as_f64()
                    .map(T::from_f64_lossy)
                    .ok_or_else(|| Error::format(None, "vector component is not a number"))
            })
            .collect::<Result<Vec<T>>>()?;
        match self.tree.dims {
            Some(d) if d == values.len() => {}
            Some(d) => {
                return Err(Error::format(
                    None,
                    format!("vector has {} components, tree has {d}", values.len()),
                ))
            }
            None => return Err(Error::format(None, "vector present in a tree without dims")),
        }
        Ok(DenseVector::new(values))
    }
}

/// Parses JSON text, reporting syntax errors with their byte offset.
pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| Error::format(Some(byte_offset(text, e.line(), e.column())), e.to_string()))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn object<'a>(value: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::format(None, format!("{what} is not an object")))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::format(None, format!("missing field `{key}`")))
}

fn as_u64(value: &Value, key: &str) -> Result<u64> {
    value
        .as_u64()
        .ok_or_else(|| Error::format(None, format!("`{key}` is not a non-negative integer")))
}

fn u64_field(obj: &Map<String, Value>, key: &str) -> Result<u64> {
    as_u64(field(obj, key)?, key)
}

fn string_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    field(obj, key)?
        .as_str()
        .ok_or_else(|| Error::format(None, format!("`{key}` is not a string")))
}
