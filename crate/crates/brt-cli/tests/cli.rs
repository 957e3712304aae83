//! End-to-end tests of the `brt` binary: exit-status discipline,
//! deterministic outputs, provenance closure of tree documents, and
//! round-trips of the serialized formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brt_cli::{BinarizeRule, TreeDocument};

fn brt_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brt"))
}

fn run(args: &[&str]) -> Output {
    brt_bin().args(args).output().expect("binary runs")
}

fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn toy_csv(dir: &Path) -> PathBuf {
    let out = dir.join("toy.csv");
    let status = brt_bin()
        .args(["sample", "--toy", "--seed", "7", "--out-csv"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    out
}

#[test]
fn cluster_reports_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_csv(dir.path());
    let json = dir.path().join("tree.json");
    let newick = dir.path().join("tree.nwk");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--gamma", "0.5", "--mode", "rose", "--out-json"])
        .arg(&json)
        .arg("--out-newick")
        .arg(&newick)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("log_marginal:"), "{stdout}");
    assert!(stdout.contains("n_partitions:"), "{stdout}");

    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc.n_points, 48);
    assert_eq!(doc.dims, 12);
    let nwk = fs::read_to_string(&newick).unwrap();
    assert!(nwk.trim_end().ends_with(';'));
}

#[test]
fn cluster_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_csv(dir.path());
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let json = dir.path().join(name);
        let status = brt_bin()
            .args(["cluster", "--data"])
            .arg(&data)
            .args(["--gamma", "0.4", "--out-json"])
            .arg(&json)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(&json).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn document_provenance_closure() {
    // Every stored quantity must be recomputable from the dataset plus
    // the hyperparameters.
    let dir = tempfile::tempdir().unwrap();
    let data = toy_csv(dir.path());
    let json = dir.path().join("tree.json");
    let status = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--gamma", "0.35", "--out-json"])
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());

    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    let dataset = brt_cli::ingest(&data, b',', BinarizeRule::None).unwrap();
    assert_eq!(brt_cli::dataset_fingerprint(&dataset.rows), doc.dataset_sha256);

    let (gamma, alpha, beta) = match &doc.hyperparameters {
        brt_cli::HyperDoc::BetaBernoulli { gamma, alpha, beta } => {
            (*gamma, alpha.clone(), beta.clone())
        }
        other => panic!("unexpected hyper doc {other:?}"),
    };
    assert_eq!(gamma, 0.35);
    let model = brt::BetaBernoulli::new(dataset.to_binary().unwrap(), alpha, beta).unwrap();
    let tree = doc.reconstruct(&model, 1e-9).unwrap();
    assert_eq!(tree.n_leaves(), doc.n_points);
    // Per-node quantities match too.
    let map = doc.node_map();
    let mut checked = 0;
    tree.for_each_node(&mut |_| checked += 1);
    assert_eq!(checked, map.len());
}

/// Minimal independent Newick reader: extracts the bracketed topology,
/// ignoring annotations.
fn parse_newick_topology(text: &str) -> NewickNode {
    let text = text.trim().trim_end_matches(';');
    let mut chars = text.chars().peekable();
    fn node(chars: &mut std::iter::Peekable<std::str::Chars>) -> NewickNode {
        if chars.peek() == Some(&'(') {
            chars.next();
            let mut children = vec![node(chars)];
            while chars.peek() == Some(&',') {
                chars.next();
                children.push(node(chars));
            }
            assert_eq!(chars.next(), Some(')'), "unbalanced newick");
            // Skip any [&...] annotation.
            if chars.peek() == Some(&'[') {
                for c in chars.by_ref() {
                    if c == ']' {
                        break;
                    }
                }
            }
            NewickNode::Internal(children)
        } else {
            let mut name = String::new();
            while let Some(&c) = chars.peek() {
                if c == ',' || c == ')' || c == '[' {
                    break;
                }
                name.push(c);
                chars.next();
            }
            NewickNode::Leaf(name)
        }
    }
    node(&mut chars)
}

#[derive(Debug, PartialEq)]
enum NewickNode {
    Leaf(String),
    Internal(Vec<NewickNode>),
}

impl NewickNode {
    fn leaves(&self) -> Vec<String> {
        match self {
            NewickNode::Leaf(n) => vec![n.clone()],
            NewickNode::Internal(children) => {
                children.iter().flat_map(|c| c.leaves()).collect()
            }
        }
    }

    fn arities(&self) -> Vec<usize> {
        match self {
            NewickNode::Leaf(_) => vec![],
            NewickNode::Internal(children) => {
                let mut out = vec![children.len()];
                for c in children {
                    out.extend(c.arities());
                }
                out
            }
        }
    }
}

#[test]
fn newick_roundtrip_preserves_topology() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_csv(dir.path());
    let json = dir.path().join("tree.json");
    let nwk = dir.path().join("tree.nwk");
    let status = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--out-json"])
        .arg(&json)
        .arg("--out-newick")
        .arg(&nwk)
        .status()
        .unwrap();
    assert!(status.success());

    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    let parsed = parse_newick_topology(&fs::read_to_string(&nwk).unwrap());

    // Leaf sets agree.
    let mut newick_leaves = parsed.leaves();
    newick_leaves.sort();
    let mut doc_leaves: Vec<String> = doc
        .nodes
        .iter()
        .filter_map(|n| n.data_index.map(|i| format!("L{i}")))
        .collect();
    doc_leaves.sort();
    assert_eq!(newick_leaves, doc_leaves);

    // Arity multiset agrees (non-binary nodes survive the round trip).
    let mut newick_arities = parsed.arities();
    newick_arities.sort_unstable();
    let mut doc_arities: Vec<usize> = doc
        .nodes
        .iter()
        .filter(|n| !n.children.is_empty())
        .map(|n| n.children.len())
        .collect();
    doc_arities.sort_unstable();
    assert_eq!(newick_arities, doc_arities);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Usage error: unknown flag.
    let out = run(&["cluster", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // Usage error: bad binarize rule (clap value parsing).
    let data = write_file(dir.path(), "ok.csv", "1,0\n0,1\n");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--binarize", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Data error: missing file.
    let out = run(&["cluster", "--data", "/nonexistent/file.csv"]);
    assert_eq!(out.status.code(), Some(3));

    // Data error: non-numeric cell (diagnostic carries the line number).
    let bad = write_file(dir.path(), "bad.csv", "1,0\n1,zebra\n");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Data error: non-binary values without a binarize rule.
    let nonbin = write_file(dir.path(), "nonbin.csv", "1,3\n0,1\n");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&nonbin)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Usage error: gamma outside (0,1).
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--gamma", "1.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Usage error: oracle size out of the exhaustive bound.
    let out = run(&["oracle", "--n-max", "9", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binarization_threshold_applies_on_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "t.csv", "32,31\n40,10\n0,32\n100,5\n");
    let json = dir.path().join("t.json");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--binarize", "threshold:32", "--out-json"])
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    // Fingerprint must reflect the post-binarization matrix.
    let expected = brt_cli::dataset_fingerprint(&[
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
    ]);
    assert_eq!(doc.dataset_sha256, expected);
}

#[test]
fn oracle_report_has_one_row_per_size_and_zero_delta_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let out = brt_bin()
        .args([
            "oracle", "--n-min", "2", "--n-max", "4", "--trials", "5", "--dims", "8", "--seed",
            "3", "--out-csv",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "header plus one row per n: {text}");
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "2");
    let delta_rose: f64 = first[2].parse().unwrap();
    assert_eq!(delta_rose, 0.0, "n=2 has a single possible tree");
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        let rose: f64 = cells[2].parse().unwrap();
        let binary: f64 = cells[4].parse().unwrap();
        assert!(rose <= binary + 1e-12, "{line}");
    }
}

#[test]
fn sample_roundtrips_through_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sampled.csv");
    let out = brt_bin()
        .args([
            "sample", "--n", "6", "--dims", "10", "--gamma", "0.5", "--seed", "11", "--out-csv",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let dataset = brt_cli::ingest(&csv, b',', BinarizeRule::None).unwrap();
    assert_eq!(dataset.n_rows(), 6);
    assert_eq!(dataset.n_cols(), 10);
    dataset.to_binary().unwrap();

    // Same seed, same bytes.
    let csv2 = dir.path().join("sampled2.csv");
    let status = brt_bin()
        .args([
            "sample", "--n", "6", "--dims", "10", "--gamma", "0.5", "--seed", "11", "--out-csv",
        ])
        .arg(&csv2)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&csv2).unwrap());
}

#[test]
fn partitions_counts_and_lists() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "four.csv", "1,1\n1,1\n0,0\n0,1\n");
    let json = dir.path().join("tree.json");
    let status = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--out-json"])
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());
    let out = brt_bin()
        .args(["partitions", "--in-json"])
        .arg(&json)
        .arg("--list")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let count: usize = stdout
        .lines()
        .find_map(|l| l.strip_prefix("n_partitions: "))
        .unwrap()
        .parse()
        .unwrap();
    let listed = stdout.lines().filter(|l| l.starts_with('{')).count();
    assert_eq!(listed, count);
    // The complete and fully discriminating partitions are always present.
    assert!(stdout.contains("{0,1,2,3}"));
    assert!(stdout.contains("{0|1|2|3}"));

    // Unknown schema version is rejected as a data error.
    let tampered = fs::read_to_string(&json)
        .unwrap()
        .replace("\"schema_version\":1", "\"schema_version\":2");
    let bad = write_file(dir.path(), "bad.json", &tampered);
    let out = brt_bin()
        .args(["partitions", "--in-json"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gp_regress_density_grid_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    // One smooth curve: 30 points of y = x with noise-free outputs.
    let mut csv = String::new();
    for i in 0..30 {
        let x = i as f64 / 29.0;
        csv.push_str(&format!("{x},{}\n", (x * 3.0).sin()));
    }
    let data = write_file(dir.path(), "xy.csv", &csv);
    let grid = dir.path().join("grid.csv");
    let means = dir.path().join("means.csv");
    let json = dir.path().join("gp.json");
    let out = brt_bin()
        .args(["gp-regress", "--data"])
        .arg(&data)
        .args([
            "--gamma",
            "0.5",
            "--length-scale",
            "0.3",
            "--signal-variance",
            "1.0",
            "--noise-variance",
            "0.05",
            "--grid-x",
            "5",
            "--grid-y",
            "400",
            "--y-pad",
            "6.0",
            "--out-csv",
        ])
        .arg(&grid)
        .arg("--out-means")
        .arg(&means)
        .arg("--out-json")
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Trapezoid integral over y at each fixed x is 1 ± 1e-3.
    let text = fs::read_to_string(&grid).unwrap();
    let mut by_x: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        by_x.entry(cells[0].to_string()).or_default().push((
            cells[1].parse().unwrap(),
            cells[2].parse().unwrap(),
        ));
    }
    assert_eq!(by_x.len(), 5);
    for (x, points) in by_x {
        let integral: f64 = points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "x={x}: integral {integral}");
    }

    let means_text = fs::read_to_string(&means).unwrap();
    assert!(means_text.lines().count() > 1);
    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc.n_points, 30);
    assert!(matches!(
        doc.hyperparameters,
        brt_cli::HyperDoc::GpExperts { .. }
    ));
}

#[test]
fn single_point_dataset_produces_single_leaf_document() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "one.csv", "1,0,1\n");
    let json = dir.path().join("one.json");
    let nwk = dir.path().join("one.nwk");
    let out = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .args(["--out-json"])
        .arg(&json)
        .arg("--out-newick")
        .arg(&nwk)
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc = TreeDocument::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc.nodes.len(), 1);
    assert_eq!(doc.n_partitions, "1");
    assert_eq!(fs::read_to_string(&nwk).unwrap().trim_end(), "L0;");
}

#[test]
fn optimize_round_log_is_monotone_in_best_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_csv(dir.path());
    let log = dir.path().join("rounds.csv");
    let out = brt_bin()
        .args(["optimize", "--data"])
        .arg(&data)
        .args(["--rounds", "3", "--out-csv"])
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&log).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for line in text.lines().skip(1) {
        let best: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(best >= prev);
        prev = best;
    }
    // The optimized score at least matches a plain cluster run.
    let stdout = String::from_utf8(out.stdout).unwrap();
    let optimized: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("log_marginal: "))
        .unwrap()
        .parse()
        .unwrap();
    let plain = brt_bin()
        .args(["cluster", "--data"])
        .arg(&data)
        .output()
        .unwrap();
    let plain_score: f64 = String::from_utf8(plain.stdout)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("log_marginal: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(optimized >= plain_score - 1e-9);
}
