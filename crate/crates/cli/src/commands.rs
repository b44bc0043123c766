use std::fs;
use std::path::{Path, PathBuf};

use amfnet::data::{
    class_distribution, compare_annotations, load_manifest, read_annotations, synthesize_dataset,
    validate_annotation, write_annotations, write_dataset, AVSample, SynthVisual, SyntheticSpec,
};
use amfnet::encoders::AudioLayer;
use amfnet::eval::{run_ablation, run_loso, train_model, Execution, ExperimentConfig};
use amfnet::fusion::{save_checkpoint, FusionModel, Modality};
use amfnet::numerics::{grad_check, GradCheckConfig};
use anyhow::Context;
use serde::Serialize;

use crate::config::{read_toml, require_seed, usage, write_file, Resolved, RunConfig};

fn execution(r: &Resolved) -> Execution {
    if r.config.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn gen(spec_path: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let mut spec: SyntheticSpec = read_toml(spec_path)?;
    spec.seed = require_seed(seed, Some(spec.seed))?;
    let generated = synthesize_dataset(&spec)?;
    let manifest = write_dataset(out, &generated.dataset)?;
    write_annotations(&out.join("annotations.jsonl"), &generated.annotations)?;
    write_file(&out.join("spec.toml"), &spec.to_toml())?;
    let dist = class_distribution(&generated.dataset.samples, spec.classes());
    println!("wrote {}", manifest.display());
    print!("{}", dist.render(&spec.class_names));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    modality: Modality,
    seed: u64,
    samples: usize,
    train_accuracy: f64,
    losses: &'a [f64],
}

pub fn train(r: Resolved) -> anyhow::Result<()> {
    let out = r.out_dir()?.to_path_buf();
    let samples: Vec<&AVSample> = r.data.samples.iter().collect();
    let trained = train_model(
        &samples,
        &r.experiment.model,
        &r.experiment.train,
        r.modality,
        r.seed,
    )?;
    let correct = samples
        .iter()
        .map(|s| trained.model.predict(s, r.modality).map(|p| p == s.label))
        .collect::<amfnet::Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    let summary = TrainSummary {
        modality: r.modality,
        seed: r.seed,
        samples: samples.len(),
        train_accuracy: correct as f64 / samples.len() as f64,
        losses: &trained.losses,
    };
    fs::create_dir_all(&out)?;
    r.echo(&out)?;
    save_checkpoint(&trained.model, &out.join("model.ckpt"))?;
    write_file(&out.join("train.json"), &json(&summary))?;
    println!(
        "trained {} model on {} samples: final loss {:.4}, train Acc {:.2}%",
        r.modality,
        samples.len(),
        trained.losses.last().copied().unwrap_or(f64::NAN),
        100.0 * summary.train_accuracy
    );
    Ok(())
}

pub fn eval(r: Resolved) -> anyhow::Result<()> {
    let out = r.out_dir()?.to_path_buf();
    let report = run_loso(
        &r.data.samples,
        &r.experiment,
        r.modality,
        r.seed,
        execution(&r),
    )?;
    fs::create_dir_all(&out)?;
    r.echo(&out)?;
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.txt"), &report.render())?;
    print!("{}", report.render());
    Ok(())
}

pub fn ablate(r: Resolved) -> anyhow::Result<()> {
    let out = r.out_dir()?.to_path_buf();
    let ablation = run_ablation(&r.data.samples, &r.experiment, r.seed, execution(&r))?;
    fs::create_dir_all(&out)?;
    r.echo(&out)?;
    for report in &ablation.reports {
        write_file(
            &out.join(format!("report_{}.json", report.modality.as_str())),
            &report.to_json(),
        )?;
    }
    write_file(&out.join("summary.json"), &ablation.summary.to_json())?;
    write_file(&out.join("summary.txt"), &ablation.summary.render())?;
    print!("{}", ablation.summary.render());
    Ok(())
}

pub fn iaa(a: &Path, b: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let first = read_annotations(a)?;
    let second = read_annotations(b)?;
    let report = compare_annotations(&first, &second)?;
    let w = report
        .clips
        .iter()
        .map(|c| c.clip_id.len())
        .max()
        .unwrap_or(4)
        .max(4);
    println!("{:<w$}  {:>6}", "Clip", "r");
    for c in &report.clips {
        let flag = if c.both_empty { "  (both empty)" } else { "" };
        println!("{:<w$}  {:>6.4}{flag}", c.clip_id, c.r);
    }
    println!("mean per-clip r: {:.4}", report.mean_per_clip);
    println!("pooled r:        {:.4}", report.pooled);
    let flagged: Vec<&str> = report.flagged().map(|c| c.clip_id.as_str()).collect();
    if !flagged.is_empty() {
        println!("empty-set clips: {}", flagged.join(", "));
    }
    if let Some(dir) = out {
        write_file(&dir.join("iaa.json"), &json(&report))?;
    }
    Ok(())
}

pub fn stats(
    config: Option<&Path>,
    manifest: Option<&Path>,
    annotations: Option<&Path>,
) -> anyhow::Result<()> {
    if config.is_none() && manifest.is_none() && annotations.is_none() {
        return Err(usage("stats needs --config, --manifest or --annotations"));
    }
    let data = match (config, manifest) {
        (Some(_), Some(_)) => return Err(usage("pass either --config or --manifest, not both")),
        // Loading data never consumes the run seed.
        (Some(c), None) => Some(RunConfig::load(c)?.resolve(Some(0), None, None)?.data),
        (None, Some(m)) => Some(load_manifest(m)?),
        (None, None) => None,
    };
    if let Some(d) = data {
        println!("{} samples", d.samples.len());
        print!(
            "{}",
            class_distribution(&d.samples, d.classes()).render(&d.class_names)
        );
    }
    if let Some(path) = annotations {
        let records = read_annotations(path)?;
        let mut bad = 0usize;
        for r in &records {
            let violations = validate_annotation(r);
            if !violations.is_empty() {
                bad += 1;
                let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
                println!("{}: {}", r.clip_id, text.join("; "));
            }
        }
        println!("{} records, {} with violations", records.len(), bad);
        if bad > 0 {
            return Err(usage(format!("{bad} annotation records failed validation")));
        }
    }
    Ok(())
}

pub struct GradCheckArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: usize,
    pub max_coords: Option<usize>,
    pub modality: Option<Modality>,
}

/// Small default problem: `D_c = 8`, two heads, three classes, seven input
/// audio steps reduced to `T_a = 5` by a width-3 convolution.
fn small_problem(seed: u64) -> anyhow::Result<(ExperimentConfig, Vec<AVSample>)> {
    let mut spec = SyntheticSpec::standard(seed);
    spec.subjects = 1;
    spec.samples_per_subject = 8;
    spec.audio_steps = 7;
    spec.audio_features = 4;
    spec.visual = SynthVisual::Features { dim: 6 };
    let data = synthesize_dataset(&spec)?.dataset;
    let mut cfg = ExperimentConfig::for_dataset(&data);
    cfg.model.latent_dim = 8;
    cfg.model.encoders.audio.layers = vec![AudioLayer {
        channels: 6,
        width: 3,
        stride: 1,
    }];
    Ok((cfg, data.samples))
}

pub fn gradcheck(args: GradCheckArgs) -> anyhow::Result<bool> {
    let (experiment, samples, seed, modality) = match &args.config {
        Some(path) => {
            let r = RunConfig::load(path)?.resolve(args.seed, None, args.modality)?;
            (r.experiment, r.data.samples, r.seed, r.modality)
        }
        None => {
            let seed = require_seed(args.seed, None)?;
            let (cfg, samples) = small_problem(seed)?;
            (cfg, samples, seed, args.modality.unwrap_or(Modality::Fused))
        }
    };
    if args.samples == 0 || args.samples > samples.len() {
        return Err(usage(format!(
            "--samples must lie in 1..={}, got {}",
            samples.len(),
            args.samples
        )));
    }
    let model = FusionModel::init(experiment.model.clone(), seed)?;
    let batch: Vec<&AVSample> = samples.iter().take(args.samples).collect();
    let (_, analytic) = model.loss_and_grads(&batch, modality, None)?;
    let cfg = GradCheckConfig {
        max_coords: args.max_coords,
        seed,
        ..GradCheckConfig::default()
    };
    let report = grad_check(
        model.params(),
        &analytic,
        |p| model.loss_at(p, &batch, modality, None),
        cfg,
    )
    .context("finite-difference evaluation failed")?;
    let w = report
        .params
        .iter()
        .map(|p| p.name.len())
        .max()
        .unwrap_or(9)
        .max(9);
    println!(
        "{:<w$}  {:>6}  {:>12}",
        "Parameter", "Coords", "Max rel err"
    );
    for p in &report.params {
        println!(
            "{:<w$}  {:>6}  {:>12.3e}",
            p.name, p.coords_checked, p.max_rel_error
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {:.0e}): {}",
        report.max_rel_error(),
        report.tol,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(report.passed())
}
