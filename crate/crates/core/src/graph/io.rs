//! File formats for graphs.
//!
//! * node table: CSV with header `id,label,f0..f{d-1}`, label in `{0,1,-1}`;
//! * edge list: one `u v` (or `u,v`) pair per line, `#` comments allowed;
//! * masks: CSV `id,split` with split in `{train,val,test}`;
//! * perturbation log: JSON array of ledger entries.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Label, Masks, Perturbation, SocialGraph};
use crate::num::Matrix;

pub fn write_node_table<W: Write>(g: &SocialGraph, mut w: W) -> Result<()> {
    let d = g.feature_dim();
    let mut header = String::from("id,label");
    for k in 0..d {
        header.push_str(&format!(",f{k}"));
    }
    writeln!(w, "{header}")?;
    for i in 0..g.n() {
        let mut line = format!("{i},{}", g.label(i).code());
        for v in g.features().row(i) {
            line.push_str(&format!(",{v:?}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a node table. Rows must list ids `0..n` in order.
pub fn read_node_table<R: Read>(r: R) -> Result<(Matrix, Vec<Label>)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty node table".into() })?;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::Parse { line: 1, msg: format!("bad header `{header}`") });
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::Parse { line: 1, msg: format!("expected column f{k}, found `{c}`") });
        }
    }
    let d = cols.len() - 2;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        let line_no = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != d + 2 {
            return Err(Error::Parse { line: line_no, msg: format!("expected {} fields", d + 2) });
        }
        let id: usize = parts[0].parse().map_err(|_| Error::Parse { line: line_no, msg: "bad id".into() })?;
        if id != labels.len() {
            return Err(Error::Parse { line: line_no, msg: format!("id {id} out of order") });
        }
        let code: i64 = parts[1].parse().map_err(|_| Error::Parse { line: line_no, msg: "bad label".into() })?;
        let label = Label::from_code(code)
            .ok_or(Error::Parse { line: line_no, msg: format!("label {code} not in {{0,1,-1}}") })?;
        labels.push(label);
        for p in &parts[2..] {
            let v: f64 = p.parse().map_err(|_| Error::Parse { line: line_no, msg: format!("bad feature `{p}`") })?;
            data.push(v);
        }
    }
    let n = labels.len();
    Ok((Matrix::from_vec(n, d, data)?, labels))
}

pub fn write_edge_list<W: Write>(g: &SocialGraph, mut w: W) -> Result<()> {
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

/// Parses `u v` pairs; whitespace or comma separated. Duplicates (in either
/// orientation) and self-loops are rejected.
pub fn read_edge_list<R: Read>(r: R) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (ln, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line_no = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if parts.len() != 2 {
            return Err(Error::Parse { line: line_no, msg: format!("expected two endpoints, got `{t}`") });
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse { line: line_no, msg: format!("bad endpoint `{s}`") });
        let (u, v) = (parse(parts[0])?, parse(parts[1])?);
        if u == v {
            return Err(Error::Parse { line: line_no, msg: format!("self-loop at {u}") });
        }
        let key = if u < v { (u, v) } else { (v, u) };
        if !seen.insert(key) {
            return Err(Error::Parse { line: line_no, msg: format!("duplicate edge ({u},{v})") });
        }
        out.push((u, v));
    }
    Ok(out)
}

pub fn write_masks<W: Write>(m: &Masks, mut w: W) -> Result<()> {
    writeln!(w, "id,split")?;
    let mut rows: Vec<(usize, &str)> = m
        .train
        .iter()
        .map(|&i| (i, "train"))
        .chain(m.val.iter().map(|&i| (i, "val")))
        .chain(m.test.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    for (i, s) in rows {
        writeln!(w, "{i},{s}")?;
    }
    Ok(())
}

pub fn read_masks<R: Read>(r: R) -> Result<Masks> {
    let mut m = Masks::default();
    for (ln, line) in BufReader::new(r).lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, split) = line
            .split_once(',')
            .ok_or(Error::Parse { line: ln + 1, msg: "expected id,split".into() })?;
        let id: usize = id.trim().parse().map_err(|_| Error::Parse { line: ln + 1, msg: "bad id".into() })?;
        match split.trim() {
            "train" => m.train.push(id),
            "val" => m.val.push(id),
            "test" => m.test.push(id),
            other => return Err(Error::Parse { line: ln + 1, msg: format!("unknown split `{other}`") }),
        }
    }
    Ok(m)
}

/// Paths of the files that make up one stored graph.
#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub nodes: std::path::PathBuf,
    pub edges: std::path::PathBuf,
    pub masks: std::path::PathBuf,
    pub log: std::path::PathBuf,
}

impl GraphFiles {
    pub fn with_prefix(prefix: &Path) -> Self {
        let p = prefix.to_string_lossy();
        GraphFiles {
            nodes: format!("{p}.nodes.csv").into(),
            edges: format!("{p}.edges.txt").into(),
            masks: format!("{p}.masks.csv").into(),
            log: format!("{p}.perturbations.json").into(),
        }
    }
}

/// Writes node table, edge list, masks and (when non-empty) the ledger sidecar.
pub fn save_graph(g: &SocialGraph, prefix: &Path) -> Result<GraphFiles> {
    let files = GraphFiles::with_prefix(prefix);
    if let Some(dir) = files.nodes.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_node_table(g, fs::File::create(&files.nodes)?)?;
    write_edge_list(g, fs::File::create(&files.edges)?)?;
    write_masks(&g.masks, fs::File::create(&files.masks)?)?;
    if !g.perturbation_log().is_empty() {
        fs::write(&files.log, serde_json::to_string_pretty(g.perturbation_log())?)?;
    }
    Ok(files)
}

/// Loads a graph saved by [`save_graph`]. Masks default to a stratified split
/// when the mask file is absent; the perturbation sidecar, when present, is
/// loaded as the ledger so the clean graph can be reconstructed.
pub fn load_graph(prefix: &Path, split_seed: u64) -> Result<SocialGraph> {
    let files = GraphFiles::with_prefix(prefix);
    load_graph_files(&files.nodes, &files.edges, Some(&files.masks), Some(&files.log), split_seed)
}

pub fn load_graph_files(
    nodes: &Path,
    edges: &Path,
    masks: Option<&Path>,
    log: Option<&Path>,
    split_seed: u64,
) -> Result<SocialGraph> {
    let (x, labels) = read_node_table(fs::File::open(nodes)?)?;
    let pairs = read_edge_list(fs::File::open(edges)?)?;
    let mut g = SocialGraph::new(x, labels)?;
    for (u, v) in pairs {
        g.add_edge(u, v)?;
    }
    let m = match masks {
        Some(p) if p.exists() => read_masks(fs::File::open(p)?)?,
        _ => Masks::stratified(g.labels(), 0.6, 0.2, split_seed),
    };
    g.set_masks(m)?;
    if let Some(p) = log.filter(|p| p.exists()) {
        let entries: Vec<Perturbation> = serde_json::from_str(&fs::read_to_string(p)?)?;
        g.restore_log(entries)?;
    }
    Ok(g)
}

impl SocialGraph {
    /// Reattaches a ledger read from disk after checking it is consistent with
    /// the current edge set and node count.
    pub fn restore_log(&mut self, entries: Vec<Perturbation>) -> Result<()> {
        let mut probe = self.clone();
        probe.log = entries;
        probe.reconstruct_clean()?;
        self.edge_ops = probe.log.iter().filter(|p| !matches!(p, Perturbation::InjectNode { .. })).count();
        self.injected = probe.log.len() - self.edge_ops;
        self.log = probe.log;
        Ok(())
    }
}
