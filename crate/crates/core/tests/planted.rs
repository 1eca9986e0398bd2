//! Detection and correction against planted errors, with a small classifier
//! trained once on separate synthetic sections.

use std::sync::{Arc, OnceLock};

use proofread_core::cnn::{predict, train, CnnArch, CnnWeights, TrainSchedule};
use proofread_core::correct::{rank_dataset, run_oracle};
use proofread_core::detect::rank_merges;
use proofread_core::imageops::dilate;
use proofread_core::metrics::{best_possible_vi, roc, vi};
use proofread_core::patches::build_training_set;
use proofread_core::synth::{synth_dataset, SynthSpec};
use proofread_core::EngineConfig;

const PATCH: usize = 31;

fn cfg() -> EngineConfig {
    EngineConfig {
        patch_size: PATCH,
        n_merge_candidates: 20,
        rng_seed: 9,
        ..EngineConfig::default()
    }
}

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        width: 128,
        height: 128,
        n_cells: 6,
        seed,
        ..SynthSpec::default()
    }
}

fn model() -> &'static CnnWeights {
    static MODEL: OnceLock<CnnWeights> = OnceLock::new();
    MODEL.get_or_init(|| {
        let (ds, _) = synth_dataset("train", &spec(500), 48, 144, 24).unwrap();
        let set = build_training_set(&ds, &cfg(), 1).unwrap();
        let arch = CnnArch {
            input_size: PATCH,
            conv_filters: vec![8, 8],
            dense_units: 32,
            ..CnnArch::default()
        };
        let schedule = TrainSchedule {
            batch_size: 32,
            max_epochs: 40,
            patience: 10,
            ..TrainSchedule::default()
        };
        train(&set, &arch, &schedule, 2).unwrap().weights
    })
}

#[test]
fn classifier_separates_held_out_boundaries() {
    let (ds, _) = synth_dataset("held", &spec(501), 8, 24, 0).unwrap();
    let set = build_training_set(&ds, &cfg(), 3).unwrap();
    let items = set.labeled();
    let patches: Vec<_> = items.iter().map(|(p, _)| (*p).clone()).collect();
    let labels: Vec<bool> = items.iter().map(|(_, l)| *l == 1).collect();
    let scores = predict(model(), &patches).unwrap();
    let auc = roc(&scores, &labels).unwrap().auc;
    assert!(auc >= 0.9, "auc {auc}");
}

#[test]
fn planted_merge_ranks_first_and_follows_the_membrane() {
    for seed in [600, 601, 602] {
        let (ds, manifests) = synth_dataset("m", &spec(seed), 1, 0, 1).unwrap();
        let section = &ds.sections[0];
        assert_eq!(section.labels.label_ids().len(), 5);
        let planted = &manifests[0].merges[0];
        let merges = rank_merges(section, model(), &cfg(), 4).unwrap();
        assert_eq!(merges[0].segment, planted.auto_id, "seed {seed}");
        // every homogeneous segment scores below the planted merge
        assert!(merges[1..].iter().all(|m| m.score < merges[0].score));

        let near = dilate(&merges[0].bipartition.boundary, 2);
        let hit = planted
            .erased_boundary
            .iter()
            .filter(|&&p| *near.get(p))
            .count();
        let frac = hit as f64 / planted.erased_boundary.len() as f64;
        assert!(frac >= 0.7, "seed {seed}: {frac}");
    }
}

#[test]
fn oracle_repairs_planted_errors() {
    let (ds, manifests) = synth_dataset("o", &spec(700), 1, 3, 1).unwrap();
    let section = &ds.sections[0];
    let gt = section.gt_labels.as_ref().unwrap();
    let best = best_possible_vi(&section.labels, gt).unwrap().vi;
    let weights = Arc::new(model().clone());
    let rankings = rank_dataset(&ds, &weights, &cfg()).unwrap();
    let (out, log) = run_oracle(ds.clone(), rankings, weights, &cfg()).unwrap();
    let labels = &out.sections[0].labels;
    let fin = vi(labels, gt, true).unwrap().vi;
    assert!(fin <= best + 1e-9, "{fin} > {best}");
    assert_eq!(log.final_vi.as_ref().unwrap().median, fin);

    let splits = &manifests[0].splits;
    let fixed = splits
        .iter()
        .filter(|s| {
            let a = section
                .labels
                .mask_of(s.child_ids.0)
                .pixels()
                .next()
                .unwrap();
            let b = section
                .labels
                .mask_of(s.child_ids.1)
                .pixels()
                .next()
                .unwrap();
            labels.get(a) == labels.get(b)
        })
        .count();
    assert!(fixed * 5 >= splits.len() * 4, "{fixed}/{}", splits.len());

    for (p, &l) in section.labels.indexed() {
        assert_eq!(l == 0, *labels.get(p) == 0);
    }
}
