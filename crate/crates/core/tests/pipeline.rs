mod common;

use std::fs;
use std::path::Path;

use amfnet::data::features::write_features;
use amfnet::data::{load_manifest, synthesize_dataset, write_dataset, SynthVisual, SyntheticSpec};
use amfnet::encoders::{AudioInput, VisualInput};
use amfnet::eval::{run_ablation, run_loso, train_model, Execution};
use amfnet::fusion::Modality;
use amfnet::numerics::Tensor;
use amfnet::Error;
use common::{refs, small_dataset, small_experiment};

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn written_dataset_loads_back_identically() {
    let data = small_dataset(1, 3, 4, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data).unwrap();
    assert_eq!(load_manifest(&manifest).unwrap(), data);
}

#[test]
fn frame_datasets_load_back() {
    let mut spec = SyntheticSpec::standard(2);
    spec.subjects = 2;
    spec.samples_per_subject = 2;
    spec.visual = SynthVisual::Frames {
        frames: 3,
        height: 8,
        width: 9,
    };
    let data = synthesize_dataset(&spec).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data).unwrap();
    assert_eq!(load_manifest(&manifest).unwrap(), data);
}

#[test]
fn same_spec_writes_identical_trees() {
    let spec = SyntheticSpec::standard(77);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        write_dataset(dir.path(), &synthesize_dataset(&spec).unwrap().dataset).unwrap();
    }
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn missing_file_names_the_clip() {
    let data = small_dataset(3, 2, 3, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data).unwrap();
    let victim = &data.samples[4].clip_id;
    fs::remove_file(dir.path().join(format!("features/{victim}.audio.feat"))).unwrap();
    match load_manifest(&manifest) {
        Err(Error::MissingFile { clip, .. }) => assert_eq!(&clip, victim),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wrong_feature_width_is_a_dim_mismatch() {
    let data = small_dataset(4, 2, 3, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data).unwrap();
    let victim = &data.samples[2].clip_id;
    write_features(
        &dir.path().join(format!("features/{victim}.audio.feat")),
        &Tensor::zeros(&[8, data.audio_features + 1]),
    )
    .unwrap();
    match load_manifest(&manifest) {
        Err(e @ Error::DimMismatch { .. }) => assert!(e.to_string().contains(victim.as_str())),
        other => panic!("unexpected {other:?}"),
    }
}

fn features_of(s: &amfnet::data::AVSample) -> Vec<f64> {
    let mut v = match &s.visual {
        Some(VisualInput::Features(t)) => t.data().to_vec(),
        _ => unreachable!(),
    };
    v.extend_from_slice(s.audio.as_ref().unwrap().features.data());
    v
}

#[test]
fn noiseless_classes_are_recovered_by_nearest_mean() {
    let mut spec = SyntheticSpec::standard(12);
    spec.noise = 0.0;
    spec.subject_shift = 0.0;
    let data = synthesize_dataset(&spec).unwrap().dataset;
    let classes = spec.classes();
    let mut means = vec![Vec::<f64>::new(); classes];
    let mut counts = vec![0usize; classes];
    for s in &data.samples {
        let f = features_of(s);
        let m = &mut means[s.label];
        if m.is_empty() {
            m.resize(f.len(), 0.0);
        }
        m.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
        counts[s.label] += 1;
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|x| *x /= n as f64);
    }
    for s in &data.samples {
        let f = features_of(s);
        let dist = |m: &Vec<f64>| m.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = (0..classes)
            .min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b])))
            .unwrap();
        assert_eq!(best, s.label);
    }
}

#[test]
fn separable_training_set_is_fit() {
    let data = small_dataset(5, 2, 10, 0.1);
    let cfg = small_experiment(&data, 60);
    let trained = train_model(
        &refs(&data.samples),
        &cfg.model,
        &cfg.train,
        Modality::Fused,
        5,
    )
    .unwrap();
    for s in &data.samples {
        assert_eq!(
            trained.model.predict(s, Modality::Fused).unwrap(),
            s.label,
            "{}",
            s.clip_id
        );
    }
    assert!(trained.losses.last().unwrap() < &trained.losses[0]);
}

#[test]
fn noiseless_loso_is_perfect() {
    let mut spec = SyntheticSpec::standard(6);
    spec.subjects = 4;
    spec.samples_per_subject = 8;
    spec.noise = 0.0;
    spec.subject_shift = 0.0;
    spec.audio_steps = 8;
    spec.audio_features = 4;
    spec.visual = SynthVisual::Features { dim: 6 };
    let data = synthesize_dataset(&spec).unwrap().dataset;
    let report = run_loso(
        &data.samples,
        &small_experiment(&data, 40),
        Modality::Fused,
        6,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.uf1, 1.0);
    assert_eq!(report.confusion.total(), data.samples.len());
}

#[test]
fn single_class_dataset() {
    let mut data = small_dataset(7, 3, 3, 0.5);
    for s in &mut data.samples {
        s.label = 0;
        s.label_name = data.class_names[0].clone();
    }
    let mut cfg = small_experiment(&data, 30);
    cfg.train.adam.lr = 1e-2;
    let report = run_loso(
        &data.samples,
        &cfg,
        Modality::Fused,
        7,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.degenerate_classes.len(), 2);
    assert!((report.uf1 - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn loso_is_deterministic_and_schedule_independent() {
    let data = small_dataset(8, 4, 5, 0.7);
    let cfg = small_experiment(&data, 5);
    let a = run_loso(
        &data.samples,
        &cfg,
        Modality::Fused,
        8,
        Execution::Sequential,
    )
    .unwrap();
    let b = run_loso(
        &data.samples,
        &cfg,
        Modality::Fused,
        8,
        Execution::Sequential,
    )
    .unwrap();
    let c = run_loso(&data.samples, &cfg, Modality::Fused, 8, Execution::Parallel).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_json(), c.to_json());
    let d = run_loso(
        &data.samples,
        &cfg,
        Modality::Fused,
        9,
        Execution::Sequential,
    )
    .unwrap();
    assert_ne!(a.to_json(), d.to_json());
}

#[test]
fn ablation_shares_one_protocol() {
    let data = small_dataset(9, 3, 4, 0.7);
    let ab = run_ablation(
        &data.samples,
        &small_experiment(&data, 3),
        9,
        Execution::Sequential,
    )
    .unwrap();
    let labels: Vec<&str> = ab.summary.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["Visual", "Audio", "Visual+Audio"]);
    for r in &ab.reports {
        assert_eq!(r.fold_plan_hash, ab.summary.fold_plan_hash);
        let seeds: Vec<u64> = r.folds.iter().map(|f| f.seed).collect();
        let first: Vec<u64> = ab.reports[0].folds.iter().map(|f| f.seed).collect();
        assert_eq!(seeds, first);
    }
    assert!(ab.summary.render().contains("Visual+Audio"));
}

#[test]
fn visual_report_ignores_audio_values() {
    let data = small_dataset(10, 3, 4, 0.7);
    let mut zeroed = data.clone();
    for s in &mut zeroed.samples {
        let shape = s.audio.as_ref().unwrap().features.shape().to_vec();
        s.audio = Some(AudioInput {
            features: Tensor::zeros(&shape),
        });
    }
    let cfg = small_experiment(&data, 4);
    let a = run_loso(
        &data.samples,
        &cfg,
        Modality::Visual,
        10,
        Execution::Sequential,
    )
    .unwrap();
    let b = run_loso(
        &zeroed.samples,
        &cfg,
        Modality::Visual,
        10,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn ablation_requires_both_inputs() {
    let mut data = small_dataset(11, 2, 3, 0.7);
    data.samples[3].audio = None;
    let err = run_ablation(
        &data.samples,
        &small_experiment(&data, 1),
        1,
        Execution::Sequential,
    )
    .unwrap_err();
    match err {
        Error::MissingModality { clip, modality } => {
            assert_eq!(clip, data.samples[3].clip_id);
            assert_eq!(modality, "audio");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn class_selection_relabels() {
    let data = small_dataset(12, 3, 6, 0.7);
    let picked = data
        .select_classes(&["Surprise".to_string(), "Positive".to_string()])
        .unwrap();
    assert_eq!(picked.classes(), 2);
    for s in &picked.samples {
        assert_eq!(picked.class_names[s.label], s.label_name);
    }
    let expected = data
        .samples
        .iter()
        .filter(|s| s.label_name != "Negative")
        .count();
    assert_eq!(picked.samples.len(), expected);
    assert!(data
        .select_classes(&["Fear".to_string(), "Positive".to_string()])
        .is_err());
}
