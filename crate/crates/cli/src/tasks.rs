//! Task dispatch. Every task turns a validated plan and a dataset into
//! result tables; per-run failures become `error: ...` rows.

use std::collections::HashSet;

use latentgraph::bench::{
    default_tau_sweep, propagate_labels, relaxed_filter_comparison, sgc_classify, symmetric_matrix_exp, task_dgs,
    ucv_from_graph, FilterCompareConfig, SplitMode, SplitSpec,
};
use latentgraph::filters::SpectralResponseFilter;
use latentgraph::graph::{build_graph, normalize_adjacency, Graph};
use latentgraph::latent::{fewshot_episode, sample_episode, smoothness_gap, GapParams, LayerFeatures};
use latentgraph::retrieval::{
    build_vbl_adjacency, localization_metrics, mean_average_precision, retrieve, smooth_features, ChannelSet,
    ItemMeta,
};
use latentgraph::rng::{derive_seed, stream};
use latentgraph::structure::{find_minimal_translations, optimize_embedding};
use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{
    DgsParams, ExperimentConfig, FewshotParams, GraphSource, LatentGapParams, Plan, RetrievalParams, SmoothSide,
    SscvMethod,
};
use crate::dataset::{Dataset, Role};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, Aggregator, Table, TaskOutput};

fn status<T>(r: &latentgraph::Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("error: {e}"),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn resolve_graph(ds: &Dataset, source: &GraphSource, features: ndarray::ArrayView2<f64>) -> CliResult<latentgraph::Result<Graph>> {
    match source {
        GraphSource::Edges => match ds.edge_graph()? {
            Some(g) => Ok(Ok(g)),
            None => Err(CliError::Config(format!(
                "graph source `edges` needs {}",
                ds.root.join("edges.csv").display()
            ))),
        },
        GraphSource::Build(cfg) => Ok(build_graph(features, cfg).map(|(g, _)| g)),
    }
}

fn base(cfg: &ExperimentConfig) -> u64 {
    cfg.seed
}

pub fn execute(cfg: &ExperimentConfig, plan: &Plan, ds: &Dataset) -> CliResult<TaskOutput> {
    match plan {
        Plan::Ucv { graphs, params } => {
            let c = params.clusters.unwrap_or(ds.n_classes);
            ucv(cfg, ds, graphs, c)
        }
        Plan::Sscv {
            graph,
            normalizations,
            split,
            params,
        } => {
            let g = resolve_graph(ds, graph, ds.features.view())??;
            let spec = SplitSpec {
                mode: split.mode.clone(),
                n_splits: split.n_splits,
                base_seed: base(cfg),
            };
            let splits = spec.generate(&ds.labels, ds.n_classes)?;
            let n_splits = splits.len();
            let jobs: Vec<(usize, SscvMethod, usize)> = (0..normalizations.len())
                .flat_map(|ni| params.methods.iter().flat_map(move |&m| (0..n_splits).map(move |s| (ni, m, s))))
                .collect();
            // Per normalization: exp(S) for propagation and S²X for SGC,
            // shared by every split.
            let prepared: Vec<latentgraph::Result<(Option<Array2<f64>>, Option<Array2<f64>>)>> = normalizations
                .par_iter()
                .map(|&k| {
                    let s = normalize_adjacency(&g, k)?;
                    let kernel = if params.methods.contains(&SscvMethod::LabelPropagation) {
                        Some(symmetric_matrix_exp(s.view())?)
                    } else {
                        None
                    };
                    let diffused = params
                        .methods
                        .contains(&SscvMethod::Sgc)
                        .then(|| s.dot(&s.dot(&ds.features)));
                    Ok((kernel, diffused))
                })
                .collect();
            let results: Vec<(u64, latentgraph::Result<f64>)> = jobs
                .par_iter()
                .map(|&(ni, method, si)| {
                    let seed = derive_seed(base(cfg), si as u64);
                    let split = &splits[si];
                    let evaluated = if split.test.is_empty() { &split.valid } else { &split.test };
                    let r = prepared[ni].as_ref().map_err(Clone::clone).and_then(|(kernel, diffused)| match method {
                        SscvMethod::LabelPropagation => {
                            let kernel = kernel.as_ref().expect("kernel prepared for propagation");
                            propagate_labels(kernel.view(), &ds.labels, ds.n_classes, &split.train, evaluated)
                                .map(|p| p.accuracy)
                        }
                        SscvMethod::Sgc => sgc_classify(
                            diffused.as_ref().expect("features prepared for sgc").view(),
                            &ds.labels,
                            ds.n_classes,
                            &split.train,
                            evaluated,
                            &params.logistic,
                            seed,
                        ),
                    });
                    (seed, r)
                })
                .collect();
            let mut runs = Table::new(&["normalization", "method", "split_id", "seed", "status", "accuracy"]);
            let mut agg = Aggregator::new(&["normalization", "method"]);
            let mut n_failed = 0;
            for (&(ni, method, si), (seed, r)) in jobs.iter().zip(&results) {
                let key = vec![normalizations[ni].name().to_string(), method_name(method).to_string()];
                let acc = r.as_ref().ok().copied();
                n_failed += usize::from(acc.is_none());
                agg.record(&key, "accuracy", acc);
                runs.push(vec![key[0].clone(), key[1].clone(), si.to_string(), seed.to_string(), status(r), cell(acc)]);
            }
            Ok(TaskOutput {
                runs,
                aggregate: agg.table()?,
                run_seeds: (0..splits.len()).map(|s| derive_seed(base(cfg), s as u64)).collect(),
                n_failed,
                extras: Vec::new(),
            })
        }
        Plan::Dgs { graph, params } => dgs(cfg, ds, graph, params),
        Plan::FilterCompare {
            graph,
            filters,
            placements,
            input_dropouts,
            edge_dropouts,
            split,
            params,
        } => {
            let g = resolve_graph(ds, graph, ds.features.view())??;
            let spec = match (split, &ds.split) {
                (Some(s), _) => SplitSpec {
                    mode: s.mode.clone(),
                    n_splits: s.n_splits,
                    base_seed: base(cfg),
                },
                (None, Some(fixed)) => SplitSpec {
                    mode: SplitMode::Fixed(fixed.clone()),
                    n_splits: 1,
                    base_seed: base(cfg),
                },
                (None, None) => {
                    return Err(CliError::Config(
                        "filter-compare needs a `split` section or a dataset splits.csv".into(),
                    ))
                }
            };
            let mut runs = Table::new(&[
                "filter",
                "placement",
                "input_dropout",
                "edge_dropout",
                "split_id",
                "seed_index",
                "seed",
                "status",
                "valid_acc",
                "test_acc",
                "epochs",
            ]);
            let mut agg = Aggregator::new(&["filter", "placement", "input_dropout", "edge_dropout"]);
            let mut n_failed = 0;
            let mut run_seeds = Vec::new();
            for &filter in filters {
                for &placement in placements {
                    for &input_dropout in input_dropouts {
                        for &edge_dropout in edge_dropouts {
                            let key = vec![
                                filter.to_string(),
                                placement.name().to_string(),
                                fmt_f64(input_dropout),
                                fmt_f64(edge_dropout),
                            ];
                            let fc = FilterCompareConfig {
                                filters: vec![filter],
                                placements: vec![placement],
                                input_dropouts: vec![input_dropout],
                                edge_dropouts: vec![edge_dropout],
                                split: spec.clone(),
                                seeds_per_split: cfg.seeds,
                                model: params.model,
                                laplacian: params.laplacian,
                            };
                            match relaxed_filter_comparison(ds.features.view(), &ds.labels, ds.n_classes, &g, &fc) {
                                Ok(result) => {
                                    for r in &result.runs {
                                        let mut row = key.clone();
                                        row.extend([
                                            r.split_id.to_string(),
                                            r.seed_index.to_string(),
                                            r.seed.to_string(),
                                            "ok".into(),
                                            fmt_f64(r.valid_acc),
                                            fmt_f64(r.test_acc),
                                            r.epochs.to_string(),
                                        ]);
                                        runs.push(row);
                                        agg.record(&key, "valid_acc", Some(r.valid_acc));
                                        agg.record(&key, "test_acc", Some(r.test_acc));
                                        if !run_seeds.contains(&r.seed) {
                                            run_seeds.push(r.seed);
                                        }
                                    }
                                }
                                Err(e) => {
                                    n_failed += 1;
                                    log::warn!("combination {} failed: {e}", key.join("/"));
                                    let mut row = key.clone();
                                    row.extend([
                                        String::new(),
                                        String::new(),
                                        String::new(),
                                        format!("error: {e}"),
                                        String::new(),
                                        String::new(),
                                        String::new(),
                                    ]);
                                    runs.push(row);
                                    agg.record(&key, "valid_acc", None);
                                    agg.record(&key, "test_acc", None);
                                }
                            }
                        }
                    }
                }
            }
            Ok(TaskOutput {
                runs,
                aggregate: agg.table()?,
                run_seeds,
                n_failed,
                extras: Vec::new(),
            })
        }
        Plan::LatentGap { params } => latent_gap(cfg, ds, params),
        Plan::Fewshot { filters, params } => fewshot(cfg, ds, filters, params),
        Plan::Retrieval { channels, m, params } => retrieval(ds, channels, m, params),
        Plan::Translations { graph, params } => {
            let g = resolve_graph(ds, graph, ds.features.view())??;
            let result = find_minimal_translations(&g, params.cap);
            let mut runs = Table::new(&["translation", "status", "loss", "mapping"]);
            let mut agg = Aggregator::new(&[]);
            let mut extras = Vec::new();
            match &result {
                Ok(ts) => {
                    for (i, t) in ts.iter().enumerate() {
                        let mapping: Vec<String> = t.mapping.iter().map(|(v, w)| format!("{v}>{w}")).collect();
                        runs.push(vec![i.to_string(), "ok".into(), t.loss().to_string(), mapping.join(" ")]);
                        agg.record(&[], "loss", Some(t.loss() as f64));
                    }
                    agg.record(&[], "count", Some(ts.len() as f64));
                    // One array of `[src, dst]` pairs per translation.
                    let pairs: Vec<&Vec<(usize, usize)>> = ts.iter().map(|t| &t.mapping).collect();
                    extras.push((
                        "translations.json".to_string(),
                        serde_json::to_string(&pairs).expect("translations serialize") + "\n",
                    ));
                }
                Err(e) => {
                    runs.push(vec![String::new(), format!("error: {e}"), String::new(), String::new()]);
                    agg.record(&[], "count", None);
                }
            }
            Ok(TaskOutput {
                runs,
                aggregate: agg.table()?,
                run_seeds: Vec::new(),
                n_failed: usize::from(result.is_err()),
                extras,
            })
        }
        Plan::Embed { graph, params } => {
            let g = resolve_graph(ds, graph, ds.features.view())??;
            let seeds: Vec<u64> = (0..cfg.seeds).map(|i| derive_seed(base(cfg), i as u64)).collect();
            let results: Vec<_> = seeds.par_iter().map(|&s| optimize_embedding(&g, params, s)).collect();
            let mut runs = Table::new(&["seed_index", "seed", "status", "cost"]);
            let mut agg = Aggregator::new(&[]);
            let mut best: Option<&latentgraph::structure::Embedding> = None;
            for (i, (seed, r)) in seeds.iter().zip(&results).enumerate() {
                let cost = r.as_ref().ok().map(|e| e.cost);
                runs.push(vec![i.to_string(), seed.to_string(), status(r), cell(cost)]);
                agg.record(&[], "cost", cost);
                agg.record(&[], "zero_cost", cost.map(|c| f64::from(u8::from(c == 0.0))));
                if let Ok(e) = r {
                    if best.is_none_or(|b| e.cost < b.cost) {
                        best = Some(e);
                    }
                }
            }
            let mut extras = Vec::new();
            if let Some(e) = best {
                let names: Vec<String> = match e.d() {
                    1..=3 => ["x", "y", "z"][..e.d()].iter().map(|s| s.to_string()).collect(),
                    d => (0..d).map(|k| format!("x{k}")).collect(),
                };
                let mut header = vec!["vertex"];
                header.extend(names.iter().map(String::as_str));
                let mut t = Table::new(&header);
                for (v, row) in e.coords.outer_iter().enumerate() {
                    let mut r = vec![v.to_string()];
                    r.extend(row.iter().map(|x| x.to_string()));
                    t.push(r);
                }
                extras.push(("embedding.csv".to_string(), t.to_csv()?));
            }
            Ok(TaskOutput {
                runs,
                aggregate: agg.table()?,
                n_failed: results.iter().filter(|r| r.is_err()).count(),
                run_seeds: seeds,
                extras,
            })
        }
    }
}

fn method_name(m: SscvMethod) -> &'static str {
    match m {
        SscvMethod::LabelPropagation => "label_propagation",
        SscvMethod::Sgc => "sgc",
    }
}

fn ucv(cfg: &ExperimentConfig, ds: &Dataset, graphs: &[GraphSource], c: usize) -> CliResult<TaskOutput> {
    let resolved = graphs
        .iter()
        .map(|g| resolve_graph(ds, g, ds.features.view()))
        .collect::<CliResult<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..cfg.seeds).map(|i| derive_seed(base(cfg), i as u64)).collect();
    let jobs: Vec<(usize, usize)> = (0..graphs.len()).flat_map(|g| (0..seeds.len()).map(move |s| (g, s))).collect();
    let results: Vec<latentgraph::Result<f64>> = jobs
        .par_iter()
        .map(|&(gi, si)| {
            resolved[gi]
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|g| ucv_from_graph(g, &ds.labels, c, seeds[si]))
        })
        .collect();
    let mut runs = Table::new(&["graph", "seed_index", "seed", "status", "ami"]);
    let mut agg = Aggregator::new(&["graph"]);
    let mut n_failed = 0;
    for (&(gi, si), r) in jobs.iter().zip(&results) {
        let key = vec![graphs[gi].label()];
        let ami = r.as_ref().ok().copied();
        n_failed += usize::from(ami.is_none());
        agg.record(&key, "ami", ami);
        runs.push(vec![key[0].clone(), si.to_string(), seeds[si].to_string(), status(r), cell(ami)]);
    }
    Ok(TaskOutput {
        runs,
        aggregate: agg.table()?,
        run_seeds: seeds,
        n_failed,
        extras: Vec::new(),
    })
}

fn dgs(cfg: &ExperimentConfig, ds: &Dataset, graph: &GraphSource, params: &DgsParams) -> CliResult<TaskOutput> {
    let f = ds.features.ncols();
    let check = |c: usize, what: &str| {
        if c >= f {
            Err(CliError::Config(format!("{what} {c} is out of range for {f} feature columns")))
        } else {
            Ok(())
        }
    };
    check(params.signal_column, "signal_column")?;
    if let Some(c) = params.noisy_column {
        check(c, "noisy_column")?;
    }
    let columns: Vec<usize> = match &params.graph_columns {
        Some(cols) => {
            for &c in cols {
                check(c, "graph column")?;
            }
            cols.clone()
        }
        None => (0..f)
            .filter(|&c| c != params.signal_column && Some(c) != params.noisy_column)
            .collect(),
    };
    if columns.is_empty() && matches!(graph, GraphSource::Build(_)) {
        return Err(CliError::Config("no feature columns left to build the graph from".into()));
    }
    let g = resolve_graph(ds, graph, ds.features.select(Axis(1), &columns).view())??;
    let clean: Array1<f64> = ds.features.column(params.signal_column).to_owned();
    let taus = params.taus.clone().unwrap_or_else(default_tau_sweep);

    let (seeds, noisy): (Vec<u64>, Vec<Array1<f64>>) = match params.noisy_column {
        Some(c) => (Vec::new(), vec![ds.features.column(c).to_owned()]),
        None => {
            let n = clean.len() as f64;
            let sigma = (clean.dot(&clean) / (n * 10f64.powf(params.noise_snr_db / 10.0))).sqrt();
            let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Config(format!("noise level: {e}")))?;
            let seeds: Vec<u64> = (0..cfg.seeds).map(|i| derive_seed(base(cfg), i as u64)).collect();
            let noisy = seeds
                .iter()
                .map(|&s| {
                    let mut rng = latentgraph::rng::rng_from_seed(s);
                    clean.mapv(|v| v + normal.sample(&mut rng))
                })
                .collect();
            (seeds, noisy)
        }
    };
    let results: Vec<_> = noisy
        .par_iter()
        .map(|y| task_dgs(clean.view(), y.view(), &g, params.laplacian, &taus))
        .collect();
    let mut runs = Table::new(&["seed_index", "seed", "status", "input_snr", "best_tau", "best_snr"]);
    let mut curve = Table::new(&["seed_index", "tau", "snr"]);
    let mut agg = Aggregator::new(&[]);
    for (i, r) in results.iter().enumerate() {
        let seed = seeds.get(i).map(u64::to_string).unwrap_or_default();
        let ok = r.as_ref().ok();
        runs.push(vec![
            i.to_string(),
            seed,
            status(r),
            cell(ok.map(|d| d.input_snr)),
            cell(ok.map(|d| d.best_tau)),
            cell(ok.map(|d| d.best_snr)),
        ]);
        agg.record(&[], "input_snr", ok.map(|d| d.input_snr));
        agg.record(&[], "best_snr", ok.map(|d| d.best_snr));
        agg.record(&[], "best_tau", ok.map(|d| d.best_tau));
        if let Some(d) = ok {
            for &(tau, snr) in &d.curve {
                curve.push(vec![i.to_string(), fmt_f64(tau), fmt_f64(snr)]);
            }
        }
    }
    Ok(TaskOutput {
        runs,
        aggregate: agg.table()?,
        run_seeds: seeds,
        n_failed: results.iter().filter(|r| r.is_err()).count(),
        extras: vec![("curve.csv".to_string(), curve.to_csv()?)],
    })
}

fn latent_gap(cfg: &ExperimentConfig, ds: &Dataset, params: &LatentGapParams) -> CliResult<TaskOutput> {
    if ds.layers.len() < 2 {
        return Err(CliError::Config(format!(
            "latent-gap needs at least two layer exports under {}",
            ds.root.join("layers").display()
        )));
    }
    let n_classes = params
        .n_classes
        .unwrap_or_else(|| ds.layers[0].labels.iter().max().map_or(0, |&m| m + 1));
    let seeds: Vec<u64> = (0..cfg.seeds).map(|i| derive_seed(base(cfg), i as u64)).collect();
    let results: Vec<_> = seeds
        .iter()
        .map(|&seed| {
            let gp = GapParams {
                m: params.m,
                n_classes,
                k: params.k,
                n_resamples: params.n_resamples,
                seed,
            };
            smoothness_gap(&ds.layers, &gp)
        })
        .collect();
    let mut runs = Table::new(&["seed_index", "seed", "status", "layer_index", "layer", "sigma", "gap"]);
    let mut agg = Aggregator::new(&["layer_index", "layer"]);
    for (i, (seed, r)) in seeds.iter().zip(&results).enumerate() {
        match r {
            Ok(rep) => {
                for (li, (name, sigma)) in rep.per_layer_smoothness.iter().enumerate() {
                    runs.push(vec![
                        i.to_string(),
                        seed.to_string(),
                        "ok".into(),
                        li.to_string(),
                        name.clone(),
                        fmt_f64(*sigma),
                        fmt_f64(rep.gap),
                    ]);
                    agg.record(&[li.to_string(), name.clone()], "sigma", Some(*sigma));
                }
                agg.record(&["all".into(), "all".into()], "gap", Some(rep.gap));
            }
            Err(e) => {
                runs.push(vec![
                    i.to_string(),
                    seed.to_string(),
                    format!("error: {e}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
                agg.record(&["all".into(), "all".into()], "gap", None);
            }
        }
    }
    Ok(TaskOutput {
        runs,
        aggregate: agg.table()?,
        run_seeds: seeds,
        n_failed: results.iter().filter(|r| r.is_err()).count(),
        extras: Vec::new(),
    })
}

fn fewshot(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    filters: &[SpectralResponseFilter],
    params: &FewshotParams,
) -> CliResult<TaskOutput> {
    let (features, labels): (&Array2<f64>, &[usize]) = match &params.layer {
        Some(name) => {
            let layer: &LayerFeatures = ds
                .layers
                .iter()
                .find(|l| &l.layer_name == name)
                .ok_or_else(|| CliError::Config(format!("no exported layer named `{name}`")))?;
            (&layer.features, &layer.labels)
        }
        None => (&ds.features, &ds.labels),
    };
    let variants: Vec<Option<SpectralResponseFilter>> =
        std::iter::once(None).chain(filters.iter().copied().map(Some)).collect();
    let seeds: Vec<u64> = (0..params.episodes).map(|i| derive_seed(base(cfg), i as u64)).collect();
    // Every filter and classifier sees the same episodes.
    let per_episode: Vec<Vec<latentgraph::Result<f64>>> = (0..params.episodes)
        .into_par_iter()
        .map(|i| {
            let episode = sample_episode(
                features.view(),
                labels,
                params.ways,
                params.shots,
                params.queries,
                &mut stream(base(cfg), i as u64),
            );
            variants
                .iter()
                .flat_map(|f| {
                    let episode = &episode;
                    params.classifiers.iter().map(move |&c| {
                        episode.as_ref().map_err(Clone::clone).and_then(|e| fewshot_episode(e, f.as_ref(), c))
                    })
                })
                .collect()
        })
        .collect();
    let mut runs = Table::new(&["episode", "seed", "filter", "classifier", "status", "accuracy"]);
    let mut agg = Aggregator::new(&["filter", "classifier"]);
    let mut n_failed = 0;
    for (i, results) in per_episode.iter().enumerate() {
        let mut it = results.iter();
        for f in &variants {
            let fname = f.map_or("none".to_string(), |f| f.to_string());
            for c in &params.classifiers {
                let r = it.next().expect("one result per filter and classifier");
                let cname = serde_json::to_value(c).expect("classifier serializes");
                let cname = cname.as_str().unwrap_or_default().to_string();
                let acc = r.as_ref().ok().copied();
                n_failed += usize::from(acc.is_none());
                agg.record(&[fname.clone(), cname.clone()], "accuracy", acc);
                runs.push(vec![i.to_string(), seeds[i].to_string(), fname.clone(), cname, status(r), cell(acc)]);
            }
        }
    }
    Ok(TaskOutput {
        runs,
        aggregate: agg.table()?,
        run_seeds: seeds,
        n_failed,
        extras: Vec::new(),
    })
}

pub fn channel_label(c: ChannelSet) -> String {
    let names: Vec<&str> = [(c.dist, "dist"), (c.seq, "seq"), (c.latent, "latent")]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

fn smooth_label(s: SmoothSide) -> &'static str {
    match s {
        SmoothSide::None => "none",
        SmoothSide::Support => "support",
        SmoothSide::Query => "query",
        SmoothSide::Both => "both",
    }
}

struct RetrievalScore {
    map: f64,
    localization: Option<(f64, f64)>,
}

fn retrieval_run(
    support: (&[ItemMeta], Array2<f64>),
    query: (&[ItemMeta], Array2<f64>),
    channels: ChannelSet,
    m: usize,
    params: &RetrievalParams,
) -> latentgraph::Result<RetrievalScore> {
    let smooth = |items: &[ItemMeta], x: Array2<f64>, on: bool| -> latentgraph::Result<Array2<f64>> {
        if !on || m == 0 {
            return Ok(x);
        }
        let g = build_vbl_adjacency(items, x.view(), &params.vbl, channels)?;
        smooth_features(x.view(), &g, params.vbl.filter_a, m)
    };
    let side = params.smooth;
    let s = smooth(support.0, support.1, matches!(side, SmoothSide::Support | SmoothSide::Both))?;
    let q = smooth(query.0, query.1, matches!(side, SmoothSide::Query | SmoothSide::Both))?;
    let rankings = retrieve(q.view(), s.view(), None)?;

    let by_class = query.0.iter().chain(support.0).all(|i| i.class_id.is_some());
    let relevance = query
        .0
        .iter()
        .map(|qi| {
            support
                .0
                .iter()
                .enumerate()
                .filter_map(|(j, si)| {
                    let relevant = if by_class {
                        qi.class_id == si.class_id
                    } else {
                        match (qi.position, si.position) {
                            (Some(a), Some(b)) => a.distance_m(&b).map(|d| d < params.relevance_m).unwrap_or(false),
                            _ => false,
                        }
                    };
                    relevant.then_some(j)
                })
                .collect::<HashSet<usize>>()
        })
        .collect::<Vec<_>>();
    let map = mean_average_precision(&rankings, &relevance)?;

    let has_positions = query.0.iter().chain(support.0).all(|i| i.position.is_some());
    let localization = if has_positions {
        let qp: Vec<_> = query.0.iter().map(|i| i.position).collect();
        let rp: Vec<_> = rankings.iter().map(|r| support.0[r[0]].position).collect();
        let lm = localization_metrics(&qp, &rp, params.threshold_m)?;
        Some((lm.median_error_m, lm.fraction_under))
    } else {
        None
    };
    Ok(RetrievalScore { map, localization })
}

fn retrieval(ds: &Dataset, channels: &[ChannelSet], ms: &[usize], params: &RetrievalParams) -> CliResult<TaskOutput> {
    let items = ds
        .items
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("retrieval needs {}", ds.root.join("items.csv").display())))?;
    let pick = |role: Role| -> (Vec<usize>, Vec<ItemMeta>) {
        items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.role == role)
            .map(|(i, it)| (i, it.meta))
            .unzip()
    };
    let (s_rows, s_meta) = pick(Role::Support);
    let (q_rows, q_meta) = pick(Role::Query);
    if s_rows.is_empty() || q_rows.is_empty() {
        return Err(CliError::Config("retrieval needs both support and query items".into()));
    }
    let s_x = ds.features.select(Axis(0), &s_rows);
    let q_x = ds.features.select(Axis(0), &q_rows);
    let jobs: Vec<(ChannelSet, usize)> = channels.iter().flat_map(|&c| ms.iter().map(move |&m| (c, m))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(c, m)| retrieval_run((&s_meta, s_x.clone()), (&q_meta, q_x.clone()), c, m, params))
        .collect();
    let mut runs = Table::new(&["channels", "m", "smooth", "status", "map", "median_error_m", "fraction_under"]);
    let mut agg = Aggregator::new(&["channels", "m", "smooth"]);
    for (&(c, m), r) in jobs.iter().zip(&results) {
        let key = vec![channel_label(c), m.to_string(), smooth_label(params.smooth).to_string()];
        let ok = r.as_ref().ok();
        let loc = ok.and_then(|s| s.localization);
        agg.record(&key, "map", ok.map(|s| s.map));
        if loc.is_some() || ok.is_none() {
            agg.record(&key, "median_error_m", loc.map(|l| l.0));
            agg.record(&key, "fraction_under", loc.map(|l| l.1));
        }
        let mut row = key;
        row.extend([status(r), cell(ok.map(|s| s.map)), cell(loc.map(|l| l.0)), cell(loc.map(|l| l.1))]);
        runs.push(row);
    }
    Ok(TaskOutput {
        runs,
        aggregate: agg.table()?,
        run_seeds: Vec::new(),
        n_failed: results.iter().filter(|r| r.is_err()).count(),
        extras: Vec::new(),
    })
}
