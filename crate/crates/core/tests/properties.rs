//! Cross-module properties exercised through the public API.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use stcausal::data::{Category, SeriesKey};
use stcausal::gbn::{em_learn, expand_pathway, CausalModel, Design, EmConfig, GbnCluster, Panel, ParentSpec, PathwayNodeModel, MODEL_VERSION};
use stcausal::pipeline::{run_targets, PipelineConfig};
use stcausal::synth::{regime_dataset, two_regime_panel, RegimeDatasetSpec};

fn key(i: usize) -> SeriesKey {
    SeriesKey::new(Category(0), format!("s{i}"))
}

/// Model of node `i` whose clusters use the given neighbor nodes.
fn node_model(i: usize, clusters: &[Vec<usize>], local_wins: bool) -> PathwayNodeModel {
    let t = key(i);
    let clusters: Vec<GbnCluster> = clusters
        .iter()
        .map(|ns| {
            let spec = ParentSpec::local_only(t.clone(), vec![t.clone()], 1)
                .with_neighbors(ns.iter().map(|&n| key(n)).collect())
                .unwrap();
            GbnCluster {
                a: vec![0.0; spec.width()],
                parents: spec,
                mu0: 0.0,
                sigma2: 1.0,
                b_mean: vec![],
                b_cov: vec![],
            }
        })
        .collect();
    let k = clusters.len();
    PathwayNodeModel {
        model: CausalModel {
            version: MODEL_VERSION,
            target: t,
            k,
            n: 3,
            lags: 1,
            clusters,
            cluster_weights: vec![1.0 / k as f64; k],
            ll_trace: vec![],
            diff_mean: 0.0,
            diff_std: 1.0,
        },
        local_accuracy: if local_wins { 0.9 } else { 0.8 },
        full_accuracy: if local_wins { 0.8 } else { 0.9 },
    }
}

/// Up to three distinct neighbors of node `i` among `n` nodes, per cluster.
fn arb_models(n: usize) -> impl Strategy<Value = BTreeMap<SeriesKey, PathwayNodeModel>> {
    let node = (
        proptest::collection::vec(proptest::collection::btree_set(0..n, 0..=3), 1..=3),
        any::<bool>(),
    );
    proptest::collection::vec(node, n).prop_map(move |nodes| {
        nodes
            .into_iter()
            .enumerate()
            .map(|(i, (clusters, local_wins))| {
                let clusters: Vec<Vec<usize>> = clusters.into_iter().map(|s| s.into_iter().filter(|&j| j != i).collect()).collect();
                (key(i), node_model(i, &clusters, local_wins))
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pathway_expansion_visits_each_node_once(models in arb_models(8), root in 0usize..8, hops in 0usize..6) {
        let g = expand_pathway(&models, &key(root), hops).unwrap();
        let unique: BTreeSet<_> = g.nodes.iter().collect();
        prop_assert_eq!(unique.len(), g.nodes.len());
        prop_assert_eq!(&g.nodes[0], &key(root));
        for e in &g.edges {
            prop_assert!(e.hop >= 1 && e.hop <= hops);
            prop_assert!(unique.contains(&e.cause) && unique.contains(&e.effect));
            prop_assert!(!models[&e.effect].local_wins());
        }
    }

    #[test]
    fn responsibilities_and_priors_are_distributions(seed in 0u64..1000, rows in 150usize..400, k in 1usize..=3, iters in 1usize..=4) {
        let rp = two_regime_panel(seed, rows).unwrap();
        let d = Design::build(&rp.panel, &rp.target, &[rp.target.clone(), rp.driver.clone()], 1, &rp.panel.timestamps()).unwrap();
        let cols: Vec<usize> = (0..d.x.ncols()).collect();
        let cfg = EmConfig { clusters: k, max_iter: iters, seed, ..Default::default() };
        let state = em_learn(&d, &vec![cols; k], &cfg, None).unwrap();
        for t in 0..d.rows() {
            prop_assert!((state.gamma.row(t).sum() - 1.0).abs() < 1e-9);
            prop_assert!((state.pi.row(t).sum() - 1.0).abs() < 1e-9);
        }
        for w in state.ll_trace.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-8);
        }
    }
}

#[test]
fn end_to_end_training_is_repeatable_and_finds_the_causer() {
    let d = regime_dataset(&RegimeDatasetSpec {
        days: 90,
        noise_sensors: 3,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let ts = Panel::from_pollutants(&d.series, Some(&d.meteo)).unwrap().timestamps();
    let cut = ts[ts.len() * 4 / 5];
    let (train, test): (Vec<_>, Vec<_>) = ts.iter().partition(|&&t| t < cut);
    let run = |threads| {
        let cfg = PipelineConfig {
            threads,
            ..Default::default()
        };
        let runs = run_targets(&d.series, Some(&d.meteo), &d.meta, std::slice::from_ref(&d.target), &train, &test, &cfg).unwrap();
        runs.into_iter().next().unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert_eq!(a.trained.model.to_json().unwrap(), b.trained.model.to_json().unwrap());
    assert_eq!(a.evaluation.accuracy, b.evaluation.accuracy);
    assert!(a.trained.model.neighbor_series().iter().any(|k| k.sensor == d.causer));
}
