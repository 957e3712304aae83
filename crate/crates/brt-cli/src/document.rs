//! Versioned JSON tree documents.
//!
//! A document records the hyperparameters, a content hash of the dataset,
//! and one record per node (ids, children, cached likelihoods, mixing
//! proportion, responsibility) so that every stored quantity can be
//! recomputed from the dataset plus the hyperparameters. Floats are
//! serialized with 17 significant digits so documents are byte-stable
//! and parse back to identical values.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use brt::hyperopt::responsibilities;
use brt::model::ClusterModel;
use brt::partition::count_partitions;
use brt::tree::{NodeId, RoseTree, TreeFactory, TreeShape};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Hyperparameters recorded in a document, by likelihood model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum HyperDoc {
    BetaBernoulli {
        gamma: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
    GpExperts {
        gamma: f64,
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
        prior_mean: Vec<f64>,
        prior_scale_count: f64,
        prior_dof: f64,
        /// Row-major p×p scale matrix.
        prior_scale_matrix: Vec<f64>,
    },
}

impl HyperDoc {
    pub fn gamma(&self) -> f64 {
        match self {
            HyperDoc::BetaBernoulli { gamma, .. } => *gamma,
            HyperDoc::GpExperts { gamma, .. } => *gamma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeDoc {
    pub id: NodeId,
    /// Child node ids; empty for a leaf.
    pub children: Vec<NodeId>,
    /// Data row index; present only for leaves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_index: Option<usize>,
    pub n_leaves: usize,
    pub log_f: f64,
    pub log_p: f64,
    /// Mixing proportion; present only for internal nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    pub responsibility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeDocument {
    pub schema_version: u32,
    pub hyperparameters: HyperDoc,
    /// SHA-256 of the canonical dataset serialization.
    pub dataset_sha256: String,
    pub n_points: usize,
    pub dims: usize,
    pub log_marginal: f64,
    /// Number of tree-consistent partitions (decimal big integer).
    pub n_partitions: String,
    pub root_id: NodeId,
    /// Node records sorted by id.
    pub nodes: Vec<NodeDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_labels: Option<Vec<String>>,
}

/// Canonical content hash of a numeric matrix: dimensions plus row-major
/// values at full precision.
pub fn dataset_fingerprint(rows: &[Vec<f64>]) -> String {
    let mut hasher = Sha256::new();
    let d = rows.first().map_or(0, |r| r.len());
    hasher.update(format!("brt-dataset-v1\n{},{}\n", rows.len(), d).as_bytes());
    for row in rows {
        for v in row {
            hasher.update(format!("{v:.16e},").as_bytes());
        }
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Assembles a document from a scored tree.
pub fn build_document<S>(
    tree: &Arc<RoseTree<S>>,
    hyper: HyperDoc,
    data_rows: &[Vec<f64>],
    dims: usize,
    row_labels: Option<Vec<String>>,
) -> TreeDocument {
    let resp = responsibilities(tree);
    let mut nodes = Vec::new();
    tree.for_each_node(&mut |node| {
        nodes.push(NodeDoc {
            id: node.id(),
            children: node.children().iter().map(|c| c.id()).collect(),
            data_index: node.data_index(),
            n_leaves: node.n_leaves(),
            log_f: node.log_f(),
            log_p: node.log_marginal(),
            pi: (!node.is_leaf()).then(|| node.pi()),
            responsibility: resp[&node.id()].value(),
        });
    });
    nodes.sort_by_key(|n| n.id);
    TreeDocument {
        schema_version: SCHEMA_VERSION,
        hyperparameters: hyper,
        dataset_sha256: dataset_fingerprint(data_rows),
        n_points: tree.n_leaves(),
        dims,
        log_marginal: tree.log_marginal(),
        n_partitions: count_partitions(tree).to_string(),
        root_id: tree.id(),
        nodes,
        row_labels,
    }
}

/// serde_json formatter printing every float with 17 significant digits.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

impl TreeDocument {
    pub fn to_json(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
        self.serialize(&mut ser)
            .map_err(|e| CliError::Data(e.to_string()))?;
        buf.push(b'\n');
        String::from_utf8(buf).map_err(|e| CliError::Data(e.to_string()))
    }

    /// Parses a document, rejecting unknown schema versions.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| CliError::Data(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    fn node(&self, id: NodeId) -> CliResult<&NodeDoc> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .map(|i| &self.nodes[i])
            .map_err(|_| CliError::Data(format!("document references missing node {id}")))
    }

    /// Recovers the tree topology recorded in the document.
    pub fn to_shape(&self) -> CliResult<TreeShape> {
        fn walk(doc: &TreeDocument, id: NodeId, depth: usize) -> CliResult<TreeShape> {
            if depth > doc.nodes.len() {
                return Err(CliError::Data("node records do not form a tree".into()));
            }
            let node = doc.node(id)?;
            if node.children.is_empty() {
                let idx = node
                    .data_index
                    .ok_or_else(|| CliError::Data(format!("leaf {id} lacks a data index")))?;
                Ok(TreeShape::Leaf(idx))
            } else {
                let children = node
                    .children
                    .iter()
                    .map(|&c| walk(doc, c, depth + 1))
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(TreeShape::Node(children))
            }
        }
        let shape = walk(self, self.root_id, 0)?;
        shape.validate().map_err(CliError::from)?;
        Ok(shape)
    }

    /// Re-scores the recorded topology under a model and checks the stored
    /// marginal, returning the recomputed tree. This is the provenance
    /// contract: every document quantity is reproducible from the dataset
    /// plus the hyperparameters.
    pub fn reconstruct<M: ClusterModel>(
        &self,
        model: &M,
        tolerance: f64,
    ) -> CliResult<Arc<RoseTree<M::Stats>>> {
        let shape = self.to_shape()?;
        let tree = TreeFactory::new(model, self.hyperparameters.gamma())?.from_shape(&shape)?;
        let diff = (tree.log_marginal() - self.log_marginal).abs();
        if diff > tolerance {
            return Err(CliError::Numeric(format!(
                "stored log marginal {} differs from recomputed {} by {diff:.2e}",
                self.log_marginal,
                tree.log_marginal()
            )));
        }
        Ok(tree)
    }

    /// Per-node map from id to record.
    pub fn node_map(&self) -> HashMap<NodeId, &NodeDoc> {
        self.nodes.iter().map(|n| (n.id, n)).collect()
    }
}
