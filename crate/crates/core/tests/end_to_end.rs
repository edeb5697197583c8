use layer_core::aggregate::{build_hierarchy, labels_for, predict_units, HierarchyOptions, Scenario};
use layer_core::carn::{train_carn, TrainConfig};
use layer_core::cohort::ModalitySet;
use layer_core::faithfulness::{compare_methods, CompareConfig, Method, Metric};
use layer_core::phantom::{generate_cohort, PhantomConfig};
use layer_core::saliency::{group_directional, run_layer_analysis, sanity_randomization, AnalysisOptions};
use layer_core::scorer::Scorer;
use layer_core::stats::run_association;
use layer_core::volume::Dims;
use layer_core::Layer;

fn small(seed: u64) -> PhantomConfig {
    PhantomConfig { dims: Dims::new(16, 16, 8), patients: 8, seed, ..Default::default() }
}

#[test]
fn phantom_to_association_in_memory() {
    let data = generate_cohort(&small(4)).unwrap().into_samples(ModalitySet::BMode).unwrap();
    let metas = data.metas();
    let y = labels_for(&metas, Scenario::SideMp);
    let cfg = TrainConfig { epochs: 6, seed: 4, ..Default::default() };
    let out = train_carn(&data, &y, &cfg, |_| None).unwrap();
    assert_eq!(out.log.len(), 6);
    assert!(out.log.windows(2).all(|w| w[0].pool_size <= w[1].pool_size));
    assert_eq!(out.log.last().unwrap().pool_size, data.len());

    let opts = AnalysisOptions { resamples: 100, ..Default::default() };
    let (scans, analysis) = run_layer_analysis(&out.model, &data, &opts).unwrap();
    assert_eq!(scans.len(), data.len());
    assert_eq!(analysis.saliency.ranking().len(), 6);
    for l in &analysis.saliency.layers {
        assert!(l.ss.ci_low <= l.ss.mean && l.ss.mean <= l.ss.ci_high);
        assert!((l.pdss.mean - l.ndss.mean - l.delta.mean).abs() < 1e-12);
    }
    let ix = analysis.interactions.unwrap();
    for i in 0..6 {
        assert!(ix.ois[i][i].is_none());
        for j in 0..6 {
            assert_eq!(ix.ois[i][j], ix.ois[j][i]);
        }
    }

    let units = build_hierarchy(&metas, Scenario::SideMp, HierarchyOptions::default()).unwrap();
    let probs: Vec<f64> = data.samples.iter().map(|s| out.model.probability(&s.input).unwrap()).collect();
    let preds = predict_units(&units, &probs).unwrap();
    assert_eq!(preds.len(), units.len());
    assert!(preds.iter().all(|p| (0.0..=1.0).contains(&p.probability)));

    let keys: Vec<_> = metas.iter().map(|m| (m.patient, m.visit, m.side)).collect();
    let grouped = group_directional(&scans, &keys).unwrap();
    let labels: Vec<bool> = grouped.iter().map(|(k, _)| units.iter().find(|u| u.node.key.patient == k.0 && u.node.key.visit == Some(k.1) && u.node.key.side == Some(k.2)).unwrap().label).collect();
    let scores: Vec<_> = grouped.into_iter().map(|(_, d)| d).collect();
    let rows = run_association(&scores, &labels);
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.result.is_some() != r.error.is_some()));
}

#[test]
fn comparison_and_sanity_on_a_trained_model() {
    let data = generate_cohort(&small(9)).unwrap().into_samples(ModalitySet::BMode).unwrap();
    let y = labels_for(&data.metas(), Scenario::SideMp);
    let model = train_carn(&data, &y, &TrainConfig { epochs: 4, seed: 9, ..Default::default() }, |_| None).unwrap().model;

    let methods = [Method::Layer, Method::IntegratedGradients, Method::SmoothGrad, Method::Random];
    let cfg = CompareConfig { ig_steps: 4, smoothgrad_samples: 2, ..Default::default() };
    let c = compare_methods(&model, &data, &methods, &cfg).unwrap();
    assert_eq!(c.scans, data.len());
    assert_eq!(c.results.len(), data.len() * methods.len());
    assert_eq!(c.tests.len(), 3 * 4);
    let t = c.test(Method::Random, Metric::AucIns).unwrap();
    assert!(t.wins <= c.scans);
    assert_eq!(compare_methods(&model, &data, &methods, &cfg).unwrap(), c);

    let opts = AnalysisOptions { resamples: 50, ..Default::default() };
    let s = sanity_randomization(&model, &data, 77, &opts).unwrap();
    assert_eq!(s.layers.len(), 6);
    assert_eq!(s.layers[Layer::Dfm.index()].layer, Layer::Dfm);
    assert!(s.trained_mean_ss > 0.0);
}
