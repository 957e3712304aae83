//! Newick serialization of tree documents. Non-binary nodes emit all
//! children; internal nodes carry their log marginal and mixing
//! proportion as bracketed annotations.

use brt::tree::NodeId;

use crate::document::TreeDocument;
use crate::error::{CliError, CliResult};

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            '(' | ')' | ',' | ';' | ':' | '[' | ']' | ' ' | '\t' | '\n' => '_',
            c => c,
        })
        .collect()
}

fn leaf_name(doc: &TreeDocument, data_index: usize) -> String {
    match &doc.row_labels {
        Some(labels) if data_index < labels.len() => sanitize(&labels[data_index]),
        _ => format!("L{data_index}"),
    }
}

fn write_node(doc: &TreeDocument, id: NodeId, out: &mut String) -> CliResult<()> {
    let map = doc.node_map();
    let node = map
        .get(&id)
        .ok_or_else(|| CliError::Data(format!("missing node {id}")))?;
    if node.children.is_empty() {
        let idx = node
            .data_index
            .ok_or_else(|| CliError::Data(format!("leaf {id} lacks a data index")))?;
        out.push_str(&leaf_name(doc, idx));
    } else {
        out.push('(');
        for (i, &child) in node.children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_node(doc, child, out)?;
        }
        out.push(')');
        let pi = node
            .pi
            .ok_or_else(|| CliError::Data(format!("internal node {id} lacks pi")))?;
        out.push_str(&format!("[&logp={:.16e},pi={:.16e}]", node.log_p, pi));
    }
    Ok(())
}

/// Renders the document's tree as a Newick string (single line,
/// semicolon-terminated).
pub fn export_newick(doc: &TreeDocument) -> CliResult<String> {
    let mut out = String::new();
    write_node(doc, doc.root_id, &mut out)?;
    out.push(';');
    Ok(out)
}
