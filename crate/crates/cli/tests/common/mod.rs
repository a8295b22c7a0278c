#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).unwrap();
    }
    fs::write(&path, contents).unwrap();
    path
}

/// Two noisy clusters of `per_class` rows in 4 dimensions, each cluster a
/// ring plus chords, joined by one bridge edge; a fixed split with two
/// train and two valid rows per class.
pub fn two_clusters(dir: &Path, per_class: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * per_class;
    let (mut features, mut labels, mut edges, mut splits) = (String::new(), String::new(), String::new(), String::new());
    for i in 0..n {
        let c = i / per_class;
        let center = if c == 0 { [1.0, 0.0, 0.5, 0.0] } else { [0.0, 1.0, 0.0, 0.5] };
        let row: Vec<String> = center.iter().map(|x| format!("{}", x + rng.random_range(-0.3..0.3))).collect();
        writeln!(features, "{}", row.join(",")).unwrap();
        writeln!(labels, "{c}").unwrap();
        let k = i % per_class;
        let role = match k {
            0 | 1 => "train",
            2 | 3 => "valid",
            _ => "test",
        };
        writeln!(splits, "{i},{role}").unwrap();
    }
    for c in 0..2 {
        let off = c * per_class;
        for k in 0..per_class {
            writeln!(edges, "{},{},1", off + k, off + (k + 1) % per_class).unwrap();
            writeln!(edges, "{},{},0.5", off + k, off + (k + 3) % per_class).unwrap();
        }
    }
    writeln!(edges, "0,{per_class},0.1").unwrap();
    write(dir, "features.csv", &features);
    write(dir, "labels.csv", &labels);
    write(dir, "edges.csv", &edges);
    write(dir, "splits.csv", &splits);
}

/// Items along a planar road every 5 m: supports at even positions, queries
/// at odd ones, features a noisy function of position.
pub fn road_items(dir: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut features, mut labels) = (String::new(), String::new());
    let mut items = String::from("id,sequence_id,frame_index,lat,lon,class_id,role\n");
    for i in 0..n {
        let x = 5.0 * i as f64;
        let t = x / 40.0;
        let row = [t.cos(), t.sin(), (2.0 * t).cos(), (2.0 * t).sin()];
        let row: Vec<String> = row.iter().map(|v| format!("{}", v + rng.random_range(-0.4..0.4))).collect();
        writeln!(features, "{}", row.join(",")).unwrap();
        writeln!(labels, "0").unwrap();
        let role = if i % 2 == 0 { "support" } else { "query" };
        writeln!(items, "{i},{},{},0,{x},,{role}", i % 2, i / 2).unwrap();
    }
    write(dir, "features.csv", &features);
    write(dir, "labels.csv", &labels);
    write(dir, "items.csv", &items);
}

/// Three exported layers over `per_class` rows of each of 3 classes; the
/// last layer separates the classes.
pub fn layer_stack(dir: &Path, per_class: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * per_class;
    let mut labels = String::new();
    let mut layers = vec![String::new(), String::new(), String::new()];
    for i in 0..n {
        let c = i / per_class;
        writeln!(labels, "{c}").unwrap();
        for (l, out) in layers.iter_mut().enumerate() {
            let spread = [1.0, 0.6, 0.05][l];
            let row: Vec<String> = (0..3)
                .map(|d| {
                    let base = if d == c { 1.0 } else { 0.2 };
                    format!("{}", base + rng.random_range(-spread..spread))
                })
                .collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
    }
    write(dir, "features.csv", &layers[0]);
    write(dir, "labels.csv", &labels);
    for (l, name) in ["input", "hidden", "output"].iter().enumerate() {
        write(dir, &format!("layers/{l}_{name}.csv"), &layers[l]);
    }
}

pub fn config(dir: &Path, json: serde_json::Value) -> PathBuf {
    write(dir, "config.json", &serde_json::to_string_pretty(&json).unwrap())
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

pub fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}
