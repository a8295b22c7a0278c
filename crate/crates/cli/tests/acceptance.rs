//! One line per acceptance criterion; exits nonzero if any fails.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use latentgraph::bench::{default_tau_sweep, task_dgs};
use latentgraph::filters::{apply_chebyshev, apply_spectral, evaluate_response, SpectralResponseFilter as F};
use latentgraph::graph::{grid_graph, normalize_adjacency, ring_graph, Graph, LaplacianKind, Normalization};
use latentgraph::latent::{smoothness_evolution, smoothness_gap, GapParams, LayerFeatures};
use latentgraph::learners::{LogisticConfig, LogisticRegressionModel, OneHiddenConfig, OneHiddenLayerModel, Placement};
use latentgraph::retrieval::{
    average_precision, build_vbl_adjacency, mean_average_precision, ChannelSet, ItemMeta, Position, VblGraphParams,
};
use latentgraph::rng::{rng_from_seed, Rng};
use latentgraph::spectral::{eigendecompose, gft, igft, smoothness};
use latentgraph::structure::{
    find_minimal_translations, is_lattice_isometry, is_translation, natural_grid_embedding, optimize_embedding,
    EmbedConfig, Translation,
};
use latentgraph_cli::config::TaskName;
use latentgraph_cli::{run_experiment, Overrides};
use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde_json::json;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_graph(rng: &mut Rng, n: usize, p: f64, connected: bool) -> Graph {
    let mut a = Array2::<f64>::zeros((n, n));
    if connected {
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        for w in order.windows(2) {
            let x = rng.random_range(0.1..2.0);
            a[[w[0], w[1]]] = x;
            a[[w[1], w[0]]] = x;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] == 0.0 && rng.random::<f64>() < p {
                let x = rng.random_range(0.1..2.0);
                a[[i, j]] = x;
                a[[j, i]] = x;
            }
        }
    }
    Graph::from_adjacency(a).unwrap()
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn timed(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.2}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

/// Edge sum `Σ_{i<j} A_ij (s_i - s_j)^2`.
fn edge_sum(a: &Array2<f64>, s: &[f64]) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += a[[i, j]] * (s[i] - s[j]).powi(2);
        }
    }
    total
}

fn smoothness_quadratic_form() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let n = rng.random_range(1..=50);
        let p = rng.random_range(0.0..0.4);
        let g = random_graph(&mut rng, n, p, trial % 2 == 0);
        let s = random_matrix(&mut rng, n, 2);
        let got = smoothness(s.view(), g.laplacian(LaplacianKind::Combinatorial).unwrap().view()).unwrap();
        for c in 0..2 {
            let want = edge_sum(g.adjacency(), &s.column(c).to_vec());
            worst = worst.max((got[c] - want).abs() / want.max(1.0));
        }
    }
    let (fast, t) = timed(Duration::from_secs(10), start);
    check(worst <= 1e-9 && fast, format!("worst deviation {worst:.1e}, {t}"))
}

fn gft_orthonormal_and_ring_spectrum() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(0.0..0.4);
        let g = random_graph(&mut rng, n, p, true);
        for kind in [LaplacianKind::Combinatorial, LaplacianKind::SymmetricNormalized] {
            let dec = eigendecompose(g.laplacian(kind).unwrap().view(), kind).unwrap();
            let u = dec.eigenvectors();
            worst = worst.max(max_abs_diff(&u.t().dot(u), &Array2::eye(n)));
            let s = random_matrix(&mut rng, n, 2);
            let hat = gft(s.view(), &dec).unwrap();
            let e_time = s.mapv(|v| v * v).sum_axis(Axis(0));
            let e_freq = hat.mapv(|v| v * v).sum_axis(Axis(0));
            for c in 0..2 {
                worst = worst.max((e_time[c] - e_freq[c]).abs() / e_time[c].max(1.0));
            }
            worst = worst.max(max_abs_diff(&igft(hat.view(), &dec).unwrap(), &s));
        }
    }
    let mut ring_worst = 0.0f64;
    for n in 3..=64 {
        let kind = LaplacianKind::SymmetricNormalized;
        let dec = eigendecompose(ring_graph(n).laplacian(kind).unwrap().view(), kind).unwrap();
        let mut want: Vec<f64> = (0..n)
            .map(|k| 1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in dec.eigenvalues().iter().zip(&want) {
            ring_worst = ring_worst.max((got - want).abs());
        }
    }
    let (fast, t) = timed(Duration::from_secs(30), start);
    check(
        worst <= 1e-8 && ring_worst <= 1e-8 && fast,
        format!("basis/Parseval deviation {worst:.1e}, ring spectra {ring_worst:.1e}, {t}"),
    )
}

fn ring_augmented_spectrum() -> Outcome {
    let mut worst = 0.0f64;
    for n in 4..=64 {
        let g = ring_graph(n);
        let norm = eigendecompose(
            g.laplacian(LaplacianKind::SymmetricNormalized).unwrap().view(),
            LaplacianKind::SymmetricNormalized,
        )
        .unwrap();
        let aug = eigendecompose(
            g.laplacian(LaplacianKind::AugmentedSymmetricNormalized).unwrap().view(),
            LaplacianKind::AugmentedSymmetricNormalized,
        )
        .unwrap();
        for (a, b) in aug.eigenvalues().iter().zip(norm.eigenvalues()) {
            worst = worst.max((a - 2.0 / 3.0 * b).abs());
        }
    }
    check(worst <= 1e-8, format!("C4..C64, worst deviation {worst:.1e}"))
}

fn filter_implementations_agree() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(4);
    let mut sgc_worst = 0.0f64;
    for _ in 0..30 {
        let g = random_graph(&mut rng, 20, 0.2, true);
        let kind = LaplacianKind::AugmentedSymmetricNormalized;
        let dec = eigendecompose(g.laplacian(kind).unwrap().view(), kind).unwrap();
        let op = normalize_adjacency(&g, Normalization::AugmentedSymmetricDegree).unwrap();
        let s = random_matrix(&mut rng, 20, 3);
        let mut direct = s.clone();
        for m in 1..=3u32 {
            direct = op.dot(&direct);
            let spectral = apply_spectral(&F::Sgc { m }, s.view(), &dec).unwrap();
            sgc_worst = sgc_worst.max(max_abs_diff(&spectral, &direct));
        }
    }
    let mut cheb_worst = 0.0f64;
    let mut poly_worst = 0.0f64;
    for n in [20usize, 60, 120, 200] {
        let p = rng.random_range(0.02..0.2);
        let g = random_graph(&mut rng, n, p, true);
        let kind = LaplacianKind::SymmetricNormalized;
        let l = g.laplacian(kind).unwrap();
        let dec = eigendecompose(l.view(), kind).unwrap();
        let s = random_matrix(&mut rng, n, 2);
        let f = F::Tikhonov { alpha: 10.0 };
        let exact = apply_spectral(&f, s.view(), &dec).unwrap();
        let approx = apply_chebyshev(&f, s.view(), l.view(), dec.lambda_max(), 30).unwrap();
        let norm = |m: &Array2<f64>| m.mapv(|v| v * v).sum().sqrt();
        cheb_worst = cheb_worst.max(norm(&(&exact - &approx)) / norm(&exact));
        let f = F::VblPoly { a: 0.1, m: 20 };
        let exact = apply_spectral(&f, s.view(), &dec).unwrap();
        for order in [20, 25, 30] {
            let approx = apply_chebyshev(&f, s.view(), l.view(), dec.lambda_max(), order).unwrap();
            poly_worst = poly_worst.max(max_abs_diff(&exact, &approx));
        }
    }
    let (fast, t) = timed(Duration::from_secs(60), start);
    check(
        sgc_worst <= 1e-8 && cheb_worst <= 1e-3 && poly_worst <= 1e-8 && fast,
        format!("sgc {sgc_worst:.1e}, chebyshev tikhonov rel {cheb_worst:.1e}, polynomial {poly_worst:.1e}, {t}"),
    )
}

fn registry() -> Vec<F> {
    vec![
        F::Sgc { m: 1 },
        F::Sgc { m: 2 },
        F::Sgc { m: 3 },
        F::Tikhonov { alpha: 1.0 },
        F::Tikhonov { alpha: 10.0 },
        F::VblPoly { a: 0.1, m: 20 },
        F::VblPoly { a: 0.5, m: 3 },
        F::BalcilarLowpass { m: 5 },
        F::BalcilarLowpass { m: 10 },
        F::BalcilarBand { alpha: 2.0, center: 0.5 },
        F::PageRank { alpha: 0.1 },
        F::PageRank { alpha: 0.5 },
        F::Simoncelli { tau: 0.3 },
        F::Simoncelli { tau: 1.0 },
        F::BandIndices { f1: 1, f2: 3, mid_gain: 0.2 },
    ]
}

fn low_pass_filters_smooth() -> Outcome {
    let filters: Vec<F> = registry().into_iter().filter(|f| f.is_bounded_low_pass()).collect();
    let mut rng = rng_from_seed(5);
    let mut violations = 0usize;
    let mut checks = 0usize;
    for _ in 0..100 {
        let n = rng.random_range(4..=30);
        let p = rng.random_range(0.0..0.5);
        let g = random_graph(&mut rng, n, p, true);
        let s = random_matrix(&mut rng, n, 1);
        for f in &filters {
            let kind = f.expected_kind().unwrap_or(LaplacianKind::SymmetricNormalized);
            let l = g.laplacian(kind).unwrap();
            let dec = eigendecompose(l.view(), kind).unwrap();
            let h = evaluate_response(f, dec.eigenvalues().view(), dec.lambda_max()).unwrap();
            let out = apply_spectral(f, s.view(), &dec).unwrap();
            let before = smoothness(s.view(), l.view()).unwrap()[0];
            let after = smoothness(out.view(), l.view()).unwrap()[0];
            checks += 1;
            if after > before + 1e-9 || h.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) {
                violations += 1;
            }
        }
    }
    check(
        violations == 0 && !filters.is_empty(),
        format!("{} filters, {checks} checks, {violations} violations", filters.len()),
    )
}

/// Best mean test accuracy per method over the graph candidates and
/// normalizations, in percent.
fn cora_sscv(root: &Path, work: &Path) -> Result<(f64, f64), String> {
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, k) in [10usize, 20].into_iter().enumerate() {
        let out = work.join(format!("sscv{i}"));
        let cfg = work.join(format!("sscv{i}.json"));
        let doc = json!({
            "task": "bench-sscv",
            "dataset": root,
            "output": out,
            "seed": 0,
            "graph": {"build": {"measure": "cosine", "k": k}},
            "split": {"mode": {"fraction": {"train_fraction": 0.05}}, "n_splits": 100},
            "grids": {"normalizations": ["none", "symmetric_degree", "augmented", "augmented_symmetric_degree"]},
            "params": {"logistic": {"l2": 0.0, "learning_rate": 0.2, "epochs": 100, "optimizer": "adam"}}
        });
        std::fs::write(&cfg, doc.to_string()).map_err(|e| e.to_string())?;
        run_experiment(TaskName::BenchSscv, &cfg, &Overrides::default()).map_err(|e| e.to_string())?;
        for row in read_aggregate(&out.join("aggregate.csv"))? {
            let mean = row["mean"].parse::<f64>().unwrap_or(f64::NAN) * 100.0;
            match row["method"].as_str() {
                "label_propagation" => best.0 = best.0.max(mean),
                "sgc" => best.1 = best.1.max(mean),
                _ => {}
            }
        }
    }
    Ok(best)
}

fn cora_filter(root: &Path, work: &Path, name: &str, filter: &str, placement: &str, drop_in: f64, drop_edge: f64) -> Result<f64, String> {
    let out = work.join(name);
    let cfg = work.join(format!("{name}.json"));
    let doc = json!({
        "task": "filter-compare",
        "dataset": root,
        "output": out,
        "seed": 0,
        "seeds": 100,
        "filters": [filter],
        "grids": {"placements": [placement], "input_dropouts": [drop_in], "edge_dropouts": [drop_edge]}
    });
    std::fs::write(&cfg, doc.to_string()).map_err(|e| e.to_string())?;
    run_experiment(TaskName::FilterCompare, &cfg, &Overrides::default()).map_err(|e| e.to_string())?;
    read_aggregate(&out.join("aggregate.csv"))?
        .into_iter()
        .find(|r| r["metric"] == "test_acc")
        .map(|r| r["mean"].parse::<f64>().unwrap_or(f64::NAN) * 100.0)
        .ok_or_else(|| "no test_acc row".to_string())
}

fn read_aggregate(path: &Path) -> Result<Vec<std::collections::HashMap<String, String>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    rdr.deserialize().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())
}

fn cora_benchmarks() -> Outcome {
    let Some(root) = std::env::var_os("LATENTGRAPH_CORA") else {
        return Outcome::Skip("set LATENTGRAPH_CORA to an ingested cora directory".into());
    };
    let root = Path::new(&root);
    let work = tempfile::tempdir().unwrap();
    let run = || -> Result<Outcome, String> {
        let (lp, sgc) = cora_sscv(root, work.path())?;
        let planetoid = cora_filter(root, work.path(), "sgc", "sgc{m=2}", "both", 0.75, 0.0)?;
        let page = cora_filter(root, work.path(), "page", "page{alpha=0.1}", "pre", 0.25, 0.5)?;
        let balcilar = cora_filter(root, work.path(), "balcilar", "balcilar_low{m=10}", "both", 0.5, 0.25)?;
        let ok = (lp - 58.86).abs() <= 3.0
            && (sgc - 67.19).abs() <= 2.5
            && (planetoid - 82.62).abs() <= 1.5
            && page > balcilar;
        Ok(check(
            ok,
            format!("lp {lp:.2}, sgc {sgc:.2}, planetoid sgc {planetoid:.2}, page {page:.2} vs balcilar {balcilar:.2}"),
        ))
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("run failed: {e}")))
}

fn geometric_graph(rng: &mut Rng, n: usize, radius: f64) -> Graph {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1) < radius {
                edges.push((i, j, 1.0));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

fn denoising_gain() -> Outcome {
    let mut rng = rng_from_seed(7);
    let n = 200;
    let g = geometric_graph(&mut rng, n, 0.15);
    let kind = LaplacianKind::Combinatorial;
    let dec = eigendecompose(g.laplacian(kind).unwrap().view(), kind).unwrap();
    let coef = [1.0, -0.7, 0.5];
    let clean = (0..3).fold(Array1::<f64>::zeros(n), |acc, k| acc + dec.eigenvectors().column(k).to_owned() * coef[k]);
    let sigma = (clean.dot(&clean) / n as f64 / 10f64.powf(0.7)).sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    let noisy = &clean + &Array1::from_shape_simple_fn(n, || normal.sample(&mut rng));
    let res = task_dgs(clean.view(), noisy.view(), &g, kind, &default_tau_sweep()).unwrap();
    check(
        res.best_snr > 9.0,
        format!("input {:.2} dB, best {:.2} dB at tau {}", res.input_snr, res.best_snr, res.best_tau),
    )
}

const H: f64 = 1e-6;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().zip(numeric).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central_difference(params: &mut [f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let keep = params[i];
            params[i] = keep + H;
            let lp = loss(params);
            params[i] = keep - H;
            let lm = loss(params);
            params[i] = keep;
            (lp - lm) / (2.0 * H)
        })
        .collect()
}

fn gradients_match() -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = rng_from_seed(800 + trial);
        let (n, f, c) = (rng.random_range(4..15), rng.random_range(2..8), rng.random_range(2..5));
        let x = random_matrix(&mut rng, n, f);
        let y: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
        let cfg = LogisticConfig {
            l2: rng.random_range(0.0..0.5),
            ..LogisticConfig::default()
        };
        let mut model = LogisticRegressionModel::zeros(f, c, cfg);
        model.weights = random_matrix(&mut rng, f, c);
        model.bias = Array1::from_shape_simple_fn(c, || rng.random_range(-1.0..1.0));
        let (_, gw, gb) = model.loss_and_gradients(x.view(), &y).unwrap();
        let mut w: Vec<f64> = model.weights.iter().copied().collect();
        let num_w = central_difference(&mut w, |p| {
            let mut m = model.clone();
            m.weights = Array2::from_shape_vec((f, c), p.to_vec()).unwrap();
            m.loss_and_gradients(x.view(), &y).unwrap().0
        });
        let mut b = model.bias.to_vec();
        let num_b = central_difference(&mut b, |p| {
            let mut m = model.clone();
            m.bias = Array1::from(p.to_vec());
            m.loss_and_gradients(x.view(), &y).unwrap().0
        });
        worst = worst.max(rel_err(&gw.iter().copied().collect::<Vec<_>>(), &num_w));
        worst = worst.max(rel_err(&gb.to_vec(), &num_b));
    }
    let logistic = worst;

    let placements = [Placement::None, Placement::Pre, Placement::Post, Placement::Both];
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = rng_from_seed(900 + trial);
        let (n, f, c) = (rng.random_range(5..12), rng.random_range(2..6), rng.random_range(2..4));
        let g = random_graph(&mut rng, n, 0.3, true);
        let s = normalize_adjacency(&g, Normalization::AugmentedSymmetricDegree).unwrap();
        let x = random_matrix(&mut rng, n, f);
        let y: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
        let rows: Vec<usize> = (0..n).filter(|i| i % 3 != 2).collect();
        let cfg = OneHiddenConfig {
            hidden_size: 5,
            l2_hidden: 0.01,
            ..OneHiddenConfig::default()
        };
        let mut model = OneHiddenLayerModel::init(f, c, cfg, &mut rng);
        model.b1 = Array1::from_shape_simple_fn(5, || rng.random_range(-0.5..0.5));
        model.b2 = Array1::from_shape_simple_fn(c, || rng.random_range(-0.5..0.5));
        let placement = placements[trial as usize % 4];
        let loss = |m: &OneHiddenLayerModel| m.loss_and_gradients(x.view(), &y, &rows, Some(s.view()), placement).unwrap();
        let (_, grads) = loss(&model);
        let analytic = [
            grads.w1.iter().copied().collect::<Vec<_>>(),
            grads.b1.to_vec(),
            grads.w2.iter().copied().collect(),
            grads.b2.to_vec(),
        ];
        for (block, analytic) in analytic.iter().enumerate() {
            let mut params: Vec<f64> = match block {
                0 => model.w1.iter().copied().collect(),
                1 => model.b1.to_vec(),
                2 => model.w2.iter().copied().collect(),
                _ => model.b2.to_vec(),
            };
            let numeric = central_difference(&mut params, |p| {
                let mut m = model.clone();
                match block {
                    0 => m.w1 = Array2::from_shape_vec(m.w1.dim(), p.to_vec()).unwrap(),
                    1 => m.b1 = Array1::from(p.to_vec()),
                    2 => m.w2 = Array2::from_shape_vec(m.w2.dim(), p.to_vec()).unwrap(),
                    _ => m.b2 = Array1::from(p.to_vec()),
                }
                loss(&m).0
            });
            worst = worst.max(rel_err(analytic, &numeric));
        }
    }
    check(
        logistic <= 1e-5 && worst <= 1e-5,
        format!("logistic {logistic:.1e}, one hidden layer {worst:.1e}, 20 instances each"),
    )
}

/// Every edge-constrained injective partial map of `g` that preserves
/// adjacency among its domain, found by enumeration.
fn all_translations(g: &Graph) -> Vec<Vec<(usize, usize)>> {
    let n = g.n_vertices();
    let adj = |u: usize, v: usize| u != v && g.adjacency()[[u, v]] != 0.0;
    let options: Vec<Vec<Option<usize>>> = (0..n)
        .map(|v| std::iter::once(None).chain((0..n).filter(|&w| adj(v, w)).map(Some)).collect())
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![None; n];
    let mut stack = vec![0usize; n + 1];
    let mut v = 0usize;
    loop {
        if v == n {
            let map: Vec<(usize, usize)> = choice.iter().enumerate().filter_map(|(v, w)| w.map(|w| (v, w))).collect();
            let images: BTreeSet<usize> = map.iter().map(|p| p.1).collect();
            let keeps_adjacency = map
                .iter()
                .all(|&(a, fa)| map.iter().all(|&(b, fb)| adj(a, b) == adj(fa, fb)));
            if !map.is_empty() && images.len() == map.len() && keeps_adjacency {
                out.push(map);
            }
            v -= 1;
            stack[v] += 1;
            continue;
        }
        if stack[v] == options[v].len() {
            if v == 0 {
                break;
            }
            stack[v] = 0;
            v -= 1;
            stack[v] += 1;
            continue;
        }
        choice[v] = options[v][stack[v]];
        v += 1;
    }
    out
}

/// Translations not strictly contained in a larger one sharing a pair.
fn brute_minimal(g: &Graph) -> Vec<Translation> {
    let all = all_translations(g);
    let mut minimal: Vec<Translation> = all
        .iter()
        .filter(|phi| !all.iter().any(|o| o.len() > phi.len() && phi.iter().any(|p| o.contains(p))))
        .map(|phi| Translation::new(g.n_vertices(), phi.clone()))
        .collect();
    minimal.sort_by(|a, b| a.loss().cmp(&b.loss()).then_with(|| a.mapping.cmp(&b.mapping)));
    minimal
}

fn axis_shifts(w: usize, h: usize) -> Vec<Translation> {
    let idx = |x: usize, y: usize| y * w + x;
    let (mut right, mut left, mut down, mut up) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for y in 0..h {
        for x in 0..w - 1 {
            right.push((idx(x, y), idx(x + 1, y)));
            left.push((idx(x + 1, y), idx(x, y)));
        }
    }
    for x in 0..w {
        for y in 0..h - 1 {
            down.push((idx(x, y), idx(x, y + 1)));
            up.push((idx(x, y + 1), idx(x, y)));
        }
    }
    [right, left, down, up].into_iter().map(|m| Translation::new(w * h, m)).collect()
}

fn translations_match_oracle() -> Outcome {
    let mut graphs: Vec<(String, Graph)> = Vec::new();
    for n in 3..=10 {
        graphs.push((format!("ring {n}"), ring_graph(n)));
    }
    graphs.push(("grid 2x2".into(), grid_graph(2, 2)));
    graphs.push(("grid 3x2".into(), grid_graph(3, 2)));
    graphs.push(("grid 3x3".into(), grid_graph(3, 3)));
    let mut rng = rng_from_seed(9);
    for i in 0..30 {
        let n = rng.random_range(3..=8);
        let p = rng.random_range(0.15..0.5);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((a, b, 1.0));
                }
            }
        }
        graphs.push((format!("random {i}"), Graph::from_edges(n, &edges).unwrap()));
    }
    let mut mismatches = Vec::new();
    for (name, g) in &graphs {
        let got = find_minimal_translations(g, 64).unwrap();
        if got.iter().any(|t| !is_translation(g, &t.mapping)) || got != brute_minimal(g) {
            mismatches.push(name.clone());
        }
    }
    let mut rotations_ok = true;
    for n in 3..=10 {
        let got = find_minimal_translations(&ring_graph(n), 64).unwrap();
        let fwd = Translation::new(n, (0..n).map(|v| (v, (v + 1) % n)).collect());
        let back = fwd.inverse();
        rotations_ok &= got.contains(&fwd) && got.contains(&back) && fwd.loss() == 0;
    }
    let grid = grid_graph(3, 3);
    let got = find_minimal_translations(&grid, 64).unwrap();
    let shifts = axis_shifts(3, 3);
    let shifts_valid = shifts.iter().all(|s| is_translation(&grid, &s.mapping) && s.loss() == 3);
    let shifts_found = shifts.iter().filter(|s| got.contains(s)).count();
    let losses: BTreeSet<usize> = got.iter().map(Translation::loss).collect();
    check(
        mismatches.is_empty() && rotations_ok && shifts_valid && shifts_found == 4,
        format!(
            "{} graphs, oracle mismatches {:?}, ring rotations lossless {rotations_ok}, \
             3x3 axis shifts found {shifts_found}/4 (minimal losses on 3x3: {losses:?})",
            graphs.len(),
            mismatches
        ),
    )
}

fn grid_embeddings() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for (w, h) in [(3usize, 3usize), (4, 4)] {
        let g = grid_graph(w, h);
        let natural = natural_grid_embedding(w, h);
        let mut zero = 0;
        let mut non_isometric = 0;
        for seed in 0..10 {
            let e = optimize_embedding(&g, &EmbedConfig::default(), seed).unwrap();
            if e.cost == 0.0 {
                zero += 1;
                if !is_lattice_isometry(e.coords.view(), natural.view()) {
                    non_isometric += 1;
                }
            }
        }
        ok &= zero >= 8 && non_isometric == 0;
        details.push(format!("{w}x{h}: cost 0 in {zero}/10, non-isometric {non_isometric}"));
    }
    let (fast, t) = timed(Duration::from_secs(120), start);
    check(ok && fast, format!("{}, {t}", details.join("; ")))
}

fn layer(rng: &mut Rng, labels: &[usize], dims: usize, spread: f64) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), dims), |(i, j)| {
        f64::from(u8::from(j == labels[i] % dims)) + spread * rng.random_range(-1.0..1.0)
    })
}

fn stack(labels: &[usize], layers: Vec<Array2<f64>>) -> Vec<LayerFeatures> {
    layers
        .into_iter()
        .enumerate()
        .map(|(i, features)| LayerFeatures {
            layer_name: format!("layer{i}"),
            features,
            labels: labels.to_vec(),
        })
        .collect()
}

fn gap_sanity() -> Outcome {
    let mut rng = rng_from_seed(11);
    let labels: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let params = GapParams {
        m: 12,
        n_classes: 4,
        k: 5,
        n_resamples: 4,
        seed: 3,
    };
    let x = random_matrix(&mut rng, 80, 6);
    let identical = smoothness_gap(&stack(&labels, vec![x.clone(), x]), &params).unwrap().gap;
    let penultimate = random_matrix(&mut rng, 80, 6);
    let last = layer(&mut rng, &labels, 4, 0.05);
    let report = smoothness_gap(&stack(&labels, vec![penultimate, last]), &params).unwrap();
    let mut in_range = true;
    for trial in 0..20 {
        let spread = rng.random_range(0.0..3.0);
        let l3: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let layers = stack(
            &l3,
            vec![
                layer(&mut rng, &l3, 3, spread),
                random_matrix(&mut rng, 60, 5),
                layer(&mut rng, &l3, 3, spread / 4.0),
            ],
        );
        let p = GapParams {
            m: 10,
            n_classes: 3,
            k: 1 + trial % 10,
            n_resamples: 3,
            seed: trial as u64,
        };
        in_range &= smoothness_evolution(&layers, &p).unwrap().iter().all(|s| (0.0..=1.0).contains(s));
    }
    check(
        identical == 0.0 && report.gap > 0.0 && in_range,
        format!("identical layers gap {identical}, separating last layer gap {:.3}, sigma in [0, 1] {in_range}", report.gap),
    )
}

/// Area under the precision/recall step curve.
fn brute_ap(ranking: &[usize], relevant: &HashSet<usize>) -> f64 {
    let mut area = 0.0;
    let mut hits = 0usize;
    for (k, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            area += (hits as f64 / (k + 1) as f64) * (1.0 / relevant.len() as f64);
        }
    }
    area
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn retrieval_metrics() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for n in 1..=6 {
        let perms = permutations(n);
        for mask in 1u32..(1 << n) {
            let relevant: HashSet<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let mut aps = Vec::new();
            for p in &perms {
                let ap = average_precision(p, &relevant).unwrap();
                worst = worst.max((ap - brute_ap(p, &relevant)).abs());
                aps.push(ap);
                cases += 1;
            }
            let rels = vec![relevant.clone(); perms.len()];
            let map = mean_average_precision(&perms, &rels).unwrap();
            worst = worst.max((map - aps.iter().sum::<f64>() / aps.len() as f64).abs());
        }
    }
    let mut rng = rng_from_seed(12);
    let mut additive = true;
    for _ in 0..5 {
        let items: Vec<ItemMeta> = (0..30)
            .map(|i| ItemMeta {
                position: Some(Position::Planar {
                    x: rng.random_range(0.0..60.0),
                    y: rng.random_range(0.0..60.0),
                }),
                sequence_id: Some(i / 5),
                frame_index: Some(i % 5),
                class_id: None,
            })
            .collect();
        let x = random_matrix(&mut rng, 30, 8);
        let params = VblGraphParams::default();
        let only = |dist, seq, latent| {
            build_vbl_adjacency(&items, x.view(), &params, ChannelSet { dist, seq, latent })
                .unwrap()
                .adjacency()
                .clone()
        };
        let sum = only(true, false, false) + only(false, true, false) + only(false, false, true);
        additive &= only(true, true, true) == sum;
    }
    check(
        worst <= 1e-12 && additive,
        format!("{cases} rankings, worst deviation {worst:.1e}, channel sum exact {additive}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("smoothness quadratic form", smoothness_quadratic_form),
        ("graph fourier basis", gft_orthonormal_and_ring_spectrum),
        ("augmented ring spectrum", ring_augmented_spectrum),
        ("filter implementations agree", filter_implementations_agree),
        ("low-pass filters smooth", low_pass_filters_smooth),
        ("cora benchmarks", cora_benchmarks),
        ("denoising gain", denoising_gain),
        ("gradient checks", gradients_match),
        ("minimal translations", translations_match_oracle),
        ("grid embeddings", grid_embeddings),
        ("smoothness gap", gap_sanity),
        ("retrieval metrics", retrieval_metrics),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let line = match run() {
            Outcome::Pass(d) => format!("PASS ({d})"),
            Outcome::Fail(d) => {
                failed += 1;
                format!("FAIL ({d})")
            }
            Outcome::Skip(d) => format!("SKIP ({d})"),
        };
        println!("criterion {:>2} {name}: {line}", i + 1);
    }
    println!("acceptance: {} of {} criteria failed", failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
