mod common;

use common::{max_abs_diff, random_connected_graph, random_matrix, seeded};
use latentgraph::filters::SpectralResponseFilter;
use latentgraph::graph::{Graph, LaplacianKind};
use latentgraph::latent::{
    cosine_knn_graph, fewshot_episode, label_smoothness, sample_episode, smoothness_evolution, smoothness_gap,
    FewShotClassifier, GapParams, LayerFeatures,
};
use latentgraph::learners::knn_classify;
use latentgraph::retrieval::{
    average_precision, build_vbl_adjacency, localization_metrics, mean_average_precision, retrieve, smooth_features,
    ChannelSet, ItemMeta, Position, VblGraphParams,
};
use latentgraph::spectral::smoothness;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;
use std::collections::HashSet;

fn separated_layer(rng: &mut latentgraph::rng::Rng, labels: &[usize], dims: usize, spread: f64) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), dims), |(i, j)| {
        let center = if j == labels[i] % dims { 1.0 } else { 0.0 };
        center + spread * rng.random_range(-1.0..1.0)
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

fn small_params() -> GapParams {
    GapParams {
        m: 12,
        n_classes: 4,
        k: 5,
        n_resamples: 4,
        seed: 9,
    }
}

#[test]
fn label_smoothness_equals_indicator_quadratic_forms() {
    let mut rng = seeded(31);
    for _ in 0..20 {
        let g = random_connected_graph(&mut rng, 25, 0.2);
        let labels: Vec<usize> = (0..25).map(|_| rng.random_range(0..4)).collect();
        let l = g.laplacian(LaplacianKind::Combinatorial).unwrap();
        let indicators = Array2::from_shape_fn((25, 4), |(i, c)| if labels[i] == c { 1.0 } else { 0.0 });
        let want: f64 = smoothness(indicators.view(), l.view()).unwrap().sum();
        assert!((label_smoothness(&g, &labels).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn identical_layers_have_zero_gap() {
    let mut rng = seeded(32);
    let labels: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let x = random_matrix(&mut rng, 80, 6);
    let report = smoothness_gap(&stack(&labels, vec![x.clone(), x]), &small_params()).unwrap();
    assert_eq!(report.gap, 0.0);
}

#[test]
fn separating_last_layer_opens_a_gap() {
    let mut rng = seeded(33);
    let labels: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let penultimate = random_matrix(&mut rng, 80, 6);
    let last = separated_layer(&mut rng, &labels, 4, 0.05);
    let report = smoothness_gap(&stack(&labels, vec![penultimate, last]), &small_params()).unwrap();
    let sigma: Vec<f64> = report.per_layer_smoothness.iter().map(|p| p.1).collect();
    assert_eq!(sigma[1], 0.0);
    assert!(sigma[0] > 0.0);
    assert!(report.gap > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalized_smoothness_stays_in_unit_interval(seed in any::<u64>(), spread in 0.0f64..3.0, k in 1usize..15) {
        let mut rng = seeded(seed);
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let layers = stack(&labels, vec![
            separated_layer(&mut rng, &labels, 3, spread),
            random_matrix(&mut rng, 60, 5),
            separated_layer(&mut rng, &labels, 3, spread / 4.0),
        ]);
        let params = GapParams { m: 10, n_classes: 3, k, n_resamples: 3, seed };
        for s in smoothness_evolution(&layers, &params).unwrap() {
            prop_assert!((0.0..=1.0).contains(&s), "{}", s);
        }
    }

    #[test]
    fn cosine_graph_is_symmetric_nonnegative_and_loopless(seed in any::<u64>(), k in 1usize..10) {
        let mut rng = seeded(seed);
        let x = random_matrix(&mut rng, 20, 4);
        let g = cosine_knn_graph(x.view(), k).unwrap();
        let a = g.adjacency();
        prop_assert!(max_abs_diff(a, &a.t().to_owned()) == 0.0);
        prop_assert!(a.iter().all(|&w| (0.0..=1.0 + 1e-12).contains(&w)));
        prop_assert!((0..20).all(|i| a[[i, i]] == 0.0));
        prop_assert!((0..20).all(|i| g.neighbor_count(i) >= 1));
    }
}

#[test]
fn unfiltered_one_nn_episode_matches_direct_classification() {
    let mut rng = seeded(34);
    let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
    let x = separated_layer(&mut rng, &labels, 5, 0.6);
    let ep = sample_episode(x.view(), &labels, 5, 3, 4, &mut rng).unwrap();
    let acc = fewshot_episode(&ep, None, FewShotClassifier::OneNn).unwrap();
    let pred = knn_classify(ep.support.view(), &ep.support_labels, ep.query.view(), 1).unwrap();
    let direct = pred.iter().zip(&ep.query_labels).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64;
    assert_eq!(acc, direct);
    let all_pass = SpectralResponseFilter::BandIndices { f1: 3, f2: 3, mid_gain: 1.0 };
    assert!((fewshot_episode(&ep, Some(&all_pass), FewShotClassifier::OneNn).unwrap() - acc).abs() < 1e-12);
    for clf in [FewShotClassifier::Ncm, FewShotClassifier::Lr, FewShotClassifier::ConcatLr] {
        let a = fewshot_episode(&ep, Some(&SpectralResponseFilter::Sgc { m: 2 }), clf).unwrap();
        assert!((0.0..=1.0).contains(&a));
    }
}

fn brute_ap(ranking: &[usize], relevant: &HashSet<usize>) -> f64 {
    let mut total = 0.0;
    for &r in relevant {
        if let Some(pos) = ranking.iter().position(|&x| x == r) {
            let hits_up_to = ranking[..=pos].iter().filter(|x| relevant.contains(x)).count();
            total += hits_up_to as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn average_precision_matches_brute_force_on_all_rankings() {
    for n in 1..=6usize {
        let perms = permutations(n);
        for mask in 1u32..(1 << n) {
            let relevant: HashSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            for p in &perms {
                let got = average_precision(p, &relevant).unwrap();
                assert!((got - brute_ap(p, &relevant)).abs() < 1e-12);
            }
            let rel = vec![relevant.clone(); perms.len()];
            let map = mean_average_precision(&perms, &rel).unwrap();
            let want = perms.iter().map(|p| brute_ap(p, &relevant)).sum::<f64>() / perms.len() as f64;
            assert!((map - want).abs() < 1e-12);
        }
    }
}

#[test]
fn retrieve_orders_by_cosine_similarity() {
    let mut rng = seeded(35);
    let support = random_matrix(&mut rng, 15, 4);
    let query = random_matrix(&mut rng, 5, 4);
    let ranked = retrieve(query.view(), support.view(), Some(6)).unwrap();
    for (q, ranking) in ranked.iter().enumerate() {
        assert_eq!(ranking.len(), 6);
        let cos = |i: usize| {
            let a = query.row(q);
            let b = support.row(i);
            a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
        };
        for w in ranking.windows(2) {
            assert!(cos(w[0]) >= cos(w[1]));
        }
        let worst_kept = cos(*ranking.last().unwrap());
        for i in (0..15).filter(|i| !ranking.contains(i)) {
            assert!(cos(i) <= worst_kept);
        }
    }
}

fn vbl_items(rng: &mut latentgraph::rng::Rng, n: usize) -> Vec<ItemMeta> {
    (0..n)
        .map(|i| ItemMeta {
            position: Some(Position::Planar {
                x: rng.random_range(0.0..60.0),
                y: rng.random_range(0.0..60.0),
            }),
            sequence_id: Some((i / 5) as i64),
            frame_index: Some((i % 5) as i64),
            class_id: None,
        })
        .collect()
}

#[test]
fn vbl_adjacency_is_the_sum_of_its_channels() {
    let mut rng = seeded(36);
    for _ in 0..5 {
        let items = vbl_items(&mut rng, 30);
        let x = random_matrix(&mut rng, 30, 8);
        let params = VblGraphParams::default();
        let full = build_vbl_adjacency(&items, x.view(), &params, ChannelSet::ALL).unwrap();
        let only = |dist, seq, latent| {
            build_vbl_adjacency(&items, x.view(), &params, ChannelSet { dist, seq, latent }).unwrap()
        };
        let sum = only(true, false, false).into_adjacency()
            + only(false, true, false).adjacency()
            + only(false, false, true).adjacency();
        assert_eq!(full.adjacency(), &sum);
        let pair = only(true, true, false).into_adjacency() + only(false, false, true).adjacency();
        assert_eq!(full.adjacency(), &pair);
    }
}

#[test]
fn smoothing_is_identity_at_zero_steps_and_never_roughens() {
    let mut rng = seeded(37);
    let g: Graph = random_connected_graph(&mut rng, 30, 0.15);
    let x = random_matrix(&mut rng, 30, 3);
    assert_eq!(smooth_features(x.view(), &g, 0.3, 0).unwrap(), x);
    let l = g.laplacian(LaplacianKind::SymmetricNormalized).unwrap();
    let before = smoothness(x.view(), l.view()).unwrap();
    for m in [1, 5, 20] {
        let y = smooth_features(x.view(), &g, 0.1, m).unwrap();
        let after = smoothness(y.view(), l.view()).unwrap();
        for c in 0..3 {
            assert!(after[c] <= before[c] + 1e-9);
        }
    }
}

#[test]
fn localization_threshold_is_strict() {
    let q = vec![Some(Position::Planar { x: 0.0, y: 0.0 }); 3];
    let r = vec![
        Some(Position::Planar { x: 25.0, y: 0.0 }),
        Some(Position::Planar { x: 24.9, y: 0.0 }),
        Some(Position::Planar { x: 0.0, y: 3.0 }),
    ];
    let m = localization_metrics(&q, &r, 25.0).unwrap();
    assert!((m.fraction_under - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.median_error_m - 24.9).abs() < 1e-12);
}
