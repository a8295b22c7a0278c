//! On-disk dataset layout: `features.csv`, `labels.csv` and optional
//! `edges.csv`, `splits.csv`, `layers/` and `items.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use latentgraph::graph::Graph;
use latentgraph::latent::LayerFeatures;
use latentgraph::learners::NodeSplit;
use latentgraph::retrieval::{ItemMeta, Position};
use ndarray::Array2;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Support,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub meta: ItemMeta,
    pub role: Role,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Symmetric edge weights, keyed by `(min, max)`.
    pub edges: Option<BTreeMap<(usize, usize), f64>>,
    /// Edges whose two directions disagreed in `edges.csv`.
    pub asymmetric_edges: usize,
    pub split: Option<NodeSplit>,
    pub layers: Vec<LayerFeatures>,
    pub items: Option<Vec<Item>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_graph(&self) -> CliResult<Option<Graph>> {
        let Some(edges) = &self.edges else { return Ok(None) };
        let list: Vec<(usize, usize, f64)> = edges.iter().map(|(&(u, v), &w)| (u, v, w)).collect();
        Ok(Some(Graph::from_edges(self.n(), &list)?))
    }
}

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn records(path: &Path) -> CliResult<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            CliError::schema(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_f64(path: &Path, line: u64, field: &str) -> CliResult<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CliError::schema(path, Some(line), format!("cannot parse `{field}` as a number")))?;
    if !v.is_finite() {
        return Err(CliError::schema(path, Some(line), format!("non-finite value `{field}`")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: u64, field: &str, what: &str) -> CliResult<usize> {
    field
        .parse()
        .map_err(|_| CliError::schema(path, Some(line), format!("{what} `{field}` is not a nonnegative integer")))
}

/// Header rows are recognized by a first field that is not a number.
fn is_header(rec: &csv::StringRecord) -> bool {
    rec.get(0).is_some_and(|f| f.parse::<f64>().is_err())
}

fn read_matrix(path: &Path) -> CliResult<Array2<f64>> {
    let rows = records(path)?;
    let width = rows.first().map_or(0, |(_, r)| r.len());
    let mut data = Vec::with_capacity(rows.len() * width);
    for (line, rec) in &rows {
        if rec.len() != width {
            return Err(CliError::schema(
                path,
                Some(*line),
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        for field in rec.iter() {
            data.push(parse_f64(path, *line, field)?);
        }
    }
    Array2::from_shape_vec((rows.len(), width), data).map_err(|e| CliError::schema(path, None, e.to_string()))
}

fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let rows = records(path)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        if rec.len() != 1 {
            return Err(CliError::schema(path, Some(*line), format!("expected 1 column, found {}", rec.len())));
        }
        labels.push(parse_usize(path, *line, &rec[0], "label")?);
    }
    Ok(labels)
}

fn read_edges(path: &Path, n: usize) -> CliResult<(BTreeMap<(usize, usize), f64>, usize)> {
    let mut directed: BTreeMap<(usize, usize), (f64, u64)> = BTreeMap::new();
    for (i, (line, rec)) in records(path)?.iter().enumerate() {
        if i == 0 && is_header(rec) {
            continue;
        }
        if rec.len() != 3 {
            return Err(CliError::schema(
                path,
                Some(*line),
                format!("expected src,dst,weight, found {} columns", rec.len()),
            ));
        }
        let u = parse_usize(path, *line, &rec[0], "source")?;
        let v = parse_usize(path, *line, &rec[1], "destination")?;
        let w = parse_f64(path, *line, &rec[2])?;
        for x in [u, v] {
            if x >= n {
                return Err(CliError::schema(
                    path,
                    Some(*line),
                    format!("vertex index {x} out of range for {n} vertices"),
                ));
            }
        }
        if u == v {
            return Err(CliError::schema(path, Some(*line), format!("self-loop on vertex {u}")));
        }
        if w < 0.0 {
            return Err(CliError::schema(path, Some(*line), format!("negative weight {w}")));
        }
        if let Some((_, first)) = directed.insert((u, v), (w, *line)) {
            return Err(CliError::schema(
                path,
                Some(*line),
                format!("edge ({u},{v}) already listed at line {first}"),
            ));
        }
    }
    let both_ways = directed.keys().any(|&(u, v)| directed.contains_key(&(v, u)));
    let mut out = BTreeMap::new();
    let mut asymmetric = 0usize;
    for (&(u, v), &(w, _)) in &directed {
        let key = (u.min(v), u.max(v));
        if out.contains_key(&key) {
            continue;
        }
        let w = match directed.get(&(v, u)) {
            Some(&(w2, _)) if w2 == w => w,
            Some(&(w2, _)) => {
                asymmetric += 1;
                0.5 * (w + w2)
            }
            None => {
                if both_ways {
                    asymmetric += 1;
                }
                w
            }
        };
        if w > 0.0 {
            out.insert(key, w);
        }
    }
    if asymmetric > 0 {
        log::warn!(
            "{}: {asymmetric} edges are not listed symmetrically; symmetrized (one-way edges kept, differing weights averaged)",
            path.display()
        );
    }
    Ok((out, asymmetric))
}

fn read_split(path: &Path, n: usize) -> CliResult<NodeSplit> {
    let mut split = NodeSplit::default();
    let mut seen = vec![None; n];
    for (i, (line, rec)) in records(path)?.iter().enumerate() {
        if i == 0 && is_header(rec) {
            continue;
        }
        if rec.len() != 2 {
            return Err(CliError::schema(path, Some(*line), "expected node_id,role"));
        }
        let v = parse_usize(path, *line, &rec[0], "node id")?;
        if v >= n {
            return Err(CliError::schema(path, Some(*line), format!("node {v} out of range for {n} vertices")));
        }
        if let Some(first) = seen[v] {
            return Err(CliError::schema(path, Some(*line), format!("node {v} already assigned at line {first}")));
        }
        seen[v] = Some(*line);
        match &rec[1] {
            "train" => split.train.push(v),
            "valid" => split.valid.push(v),
            "test" => split.test.push(v),
            other => {
                return Err(CliError::schema(
                    path,
                    Some(*line),
                    format!("role `{other}` is not one of train, valid, test"),
                ))
            }
        }
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn read_layers(dir: &Path, labels: &[usize]) -> CliResult<Vec<LayerFeatures>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let (index, name) = stem
            .split_once('_')
            .and_then(|(i, name)| i.parse::<usize>().ok().map(|i| (i, name.to_string())))
            .ok_or_else(|| CliError::schema(&path, None, "layer files must be named `<index>_<name>.csv`"))?;
        found.push((index, name, path));
    }
    found.sort();
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CliError::schema(&w[1].2, None, format!("duplicate layer index {}", w[1].0)));
    }
    found
        .into_iter()
        .map(|(_, name, path)| {
            let features = read_matrix(&path)?;
            if features.nrows() != labels.len() {
                return Err(CliError::schema(
                    &path,
                    None,
                    format!("{} rows, but labels.csv has {}", features.nrows(), labels.len()),
                ));
            }
            Ok(LayerFeatures {
                layer_name: name,
                features,
                labels: labels.to_vec(),
            })
        })
        .collect()
}

const ITEM_COLUMNS: [&str; 6] = ["id", "sequence_id", "frame_index", "lat", "lon", "class_id"];

/// `items.csv` has a header naming at least the six metadata columns, plus
/// an optional `role` column (`support` or `query`, default `support`).
/// Empty fields are missing metadata. With `planar`, `lat`/`lon` hold
/// metric `y`/`x` coordinates.
fn read_items(path: &Path, n: usize, planar: bool) -> CliResult<Vec<Item>> {
    let rows = records(path)?;
    let Some((_, header)) = rows.first() else {
        return Err(CliError::schema(path, None, "missing header"));
    };
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut idx = [0usize; 6];
    for (k, name) in ITEM_COLUMNS.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| CliError::schema(path, Some(1), format!("missing column `{name}`")))?;
    }
    let role_col = col("role");
    let mut items: Vec<Option<Item>> = vec![None; n];
    for (line, rec) in &rows[1..] {
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let opt_i64 = |k: usize| -> CliResult<Option<i64>> {
            let f = field(k);
            if f.is_empty() {
                return Ok(None);
            }
            f.parse()
                .map(Some)
                .map_err(|_| CliError::schema(path, Some(*line), format!("{} `{f}` is not an integer", ITEM_COLUMNS[k])))
        };
        let id = parse_usize(path, *line, field(0), "id")?;
        if id >= n {
            return Err(CliError::schema(path, Some(*line), format!("id {id} out of range for {n} feature rows")));
        }
        if items[id].is_some() {
            return Err(CliError::schema(path, Some(*line), format!("id {id} listed twice")));
        }
        let position = match (field(3), field(4)) {
            ("", "") => None,
            (lat, lon) if !lat.is_empty() && !lon.is_empty() => {
                let (a, b) = (parse_f64(path, *line, lat)?, parse_f64(path, *line, lon)?);
                Some(if planar { Position::Planar { x: b, y: a } } else { Position::LatLon { lat: a, lon: b } })
            }
            _ => return Err(CliError::schema(path, Some(*line), "lat and lon must both be present or both empty")),
        };
        let role = match role_col.and_then(|c| rec.get(c)).unwrap_or("") {
            "" | "support" => Role::Support,
            "query" => Role::Query,
            other => return Err(CliError::schema(path, Some(*line), format!("role `{other}` is not support or query"))),
        };
        items[id] = Some(Item {
            meta: ItemMeta {
                position,
                sequence_id: opt_i64(1)?,
                frame_index: opt_i64(2)?,
                class_id: opt_i64(5)?,
            },
            role,
        });
    }
    items
        .into_iter()
        .enumerate()
        .map(|(i, it)| it.ok_or_else(|| CliError::schema(path, None, format!("no row for feature row {i}"))))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub planar: bool,
}

pub fn ingest(root: &Path, options: IngestOptions) -> CliResult<Dataset> {
    if !root.is_dir() {
        return Err(CliError::Config(format!("dataset root {} is not a directory", root.display())));
    }
    let features_path = root.join("features.csv");
    let labels_path = root.join("labels.csv");
    let features = read_matrix(&features_path)?;
    let labels = read_labels(&labels_path)?;
    if features.nrows() != labels.len() {
        return Err(CliError::schema(
            &labels_path,
            None,
            format!("{} labels for {} feature rows", labels.len(), features.nrows()),
        ));
    }
    let n = labels.len();
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let edges_path = root.join("edges.csv");
    let (edges, asymmetric_edges) = match edges_path.exists().then(|| read_edges(&edges_path, n)).transpose()? {
        Some((e, a)) => (Some(e), a),
        None => (None, 0),
    };
    let split_path = root.join("splits.csv");
    let split = split_path.exists().then(|| read_split(&split_path, n)).transpose()?;
    let layers_dir = root.join("layers");
    let layers = if layers_dir.is_dir() { read_layers(&layers_dir, &labels)? } else { Vec::new() };
    let items_path = root.join("items.csv");
    let items = items_path.exists().then(|| read_items(&items_path, n, options.planar)).transpose()?;
    Ok(Dataset {
        root: root.to_path_buf(),
        features,
        labels,
        n_classes,
        edges,
        asymmetric_edges,
        split,
        layers,
        items,
    })
}

fn create(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::schema(path, None, format!("{other:?}")),
    }
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> CliResult<()> {
    let mut w = create(path)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Normalized form: edges once each as `min,max,weight` in index order,
/// splits sorted by node id, numbers in shortest round-trip notation.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_matrix(&dir.join("features.csv"), &ds.features)?;
    let path = dir.join("labels.csv");
    let mut w = create(&path)?;
    for l in &ds.labels {
        w.write_record([l.to_string()]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    if let Some(edges) = &ds.edges {
        let path = dir.join("edges.csv");
        let mut w = create(&path)?;
        for (&(u, v), &wt) in edges {
            w.write_record([u.to_string(), v.to_string(), wt.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    if let Some(split) = &ds.split {
        let path = dir.join("splits.csv");
        let mut rows: Vec<(usize, &str)> = split
            .train
            .iter()
            .map(|&v| (v, "train"))
            .chain(split.valid.iter().map(|&v| (v, "valid")))
            .chain(split.test.iter().map(|&v| (v, "test")))
            .collect();
        rows.sort_unstable();
        let mut w = create(&path)?;
        for (v, role) in rows {
            w.write_record([v.to_string(), role.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    if !ds.layers.is_empty() {
        let layers = dir.join("layers");
        fs::create_dir_all(&layers).map_err(|e| CliError::io(&layers, e))?;
        for (i, layer) in ds.layers.iter().enumerate() {
            write_matrix(&layers.join(format!("{i}_{}.csv", layer.layer_name)), &layer.features)?;
        }
    }
    if let Some(items) = &ds.items {
        let path = dir.join("items.csv");
        let mut w = create(&path)?;
        let mut header: Vec<&str> = ITEM_COLUMNS.to_vec();
        header.push("role");
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (id, it) in items.iter().enumerate() {
            let (lat, lon) = match it.meta.position {
                Some(Position::LatLon { lat, lon }) => (lat.to_string(), lon.to_string()),
                Some(Position::Planar { x, y }) => (y.to_string(), x.to_string()),
                None => (String::new(), String::new()),
            };
            let role = match it.role {
                Role::Support => "support",
                Role::Query => "query",
            };
            w.write_record([
                id.to_string(),
                opt(it.meta.sequence_id),
                opt(it.meta.frame_index),
                lat,
                lon,
                opt(it.meta.class_id),
                role.to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
