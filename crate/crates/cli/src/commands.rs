//! One function per subcommand. Each returns a summary; printing is left to the caller.

use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cfgpilot::checkpoint::Persist;
use cfgpilot::config::{ActorKind, RunConfig};
use cfgpilot::diffusion::classifier::train_classifier_with;
use cfgpilot::diffusion::denoiser::{train_denoiser_with, validation_loss};
use cfgpilot::diffusion::{gen_dataset, Denoiser, NoiseSchedule, ProxyClassifier, ShapeDataset, NUM_CLASSES};
use cfgpilot::io::{load_dataset, read_pgm, save_dataset, write_pgm};
use cfgpilot::metrics::{self, mean_std};
use cfgpilot::policy::{Actor, ClassicalActor, Critic, HybridActor};
use cfgpilot::rl::{
    run_inference, run_training, Controller, EnvSlot, GuidanceEnv, GuidanceModels, LogRow, RolloutBuffer,
    TrainingOutcome, LOG_COLUMNS,
};
use cfgpilot::seed::{derive, stream};
use cfgpilot::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layout::{parse_sample_stem, sample_stem};
use crate::report::{merge_eval_csvs, write_eval_csv, EvalRow, Report};
use crate::Settings;

macro_rules! progress {
    ($s:expr, $($arg:tt)*) => {
        if $s.verbose {
            eprintln!($($arg)*);
        }
    };
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn require(path: &Path, hint: &str) -> Result<()> {
    ensure!(path.exists(), "{} not found ({hint})", path.display());
    Ok(())
}

/// Loads the dataset, naming the missing directory on failure.
pub fn load_data(settings: &Settings) -> Result<ShapeDataset> {
    let dir = settings.layout().data();
    require(&dir, "run gen-data first")?;
    load_dataset(&dir).with_context(|| format!("cannot load dataset from {}", dir.display()))
}

/// Pretrained models the controller stages depend on.
pub struct Pretrained {
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub classifier: ProxyClassifier,
}

impl Pretrained {
    pub fn load(settings: &Settings) -> Result<Self> {
        let layout = settings.layout();
        let (d, c) = (layout.denoiser_checkpoint(), layout.classifier_checkpoint());
        require(&d, "run train-denoiser first")?;
        require(&c, "run train-classifier first")?;
        Ok(Self {
            schedule: NoiseSchedule::new(settings.config.schedule)?,
            denoiser: Denoiser::load(&d).with_context(|| format!("cannot load {}", d.display()))?,
            classifier: ProxyClassifier::load(&c).with_context(|| format!("cannot load {}", c.display()))?,
        })
    }

    pub fn models(&self) -> GuidanceModels<'_> {
        GuidanceModels {
            schedule: &self.schedule,
            denoiser: &self.denoiser,
            classifier: &self.classifier,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSummary {
    pub dir: PathBuf,
    pub count: usize,
    pub class_counts: Vec<usize>,
}

pub fn gen_data(settings: &Settings) -> Result<DataSummary> {
    let cfg = &settings.config;
    let ds = gen_dataset(derive(cfg.seed, stream::DATASET), cfg.dataset.n_per_class);
    let dir = settings.layout().data();
    create_dir(&dir)?;
    save_dataset(&dir, &ds).with_context(|| format!("cannot write dataset to {}", dir.display()))?;
    Ok(DataSummary {
        dir,
        count: ds.len(),
        class_counts: ds.class_counts().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSummary {
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
}

pub fn train_denoiser(settings: &Settings) -> Result<DenoiserSummary> {
    let cfg = &settings.config;
    let ds = load_data(settings)?;
    let schedule = NoiseSchedule::new(cfg.schedule)?;
    let (model, report) =
        train_denoiser_with(&ds, &schedule, &cfg.denoiser, derive(cfg.seed, stream::DENOISER), |e, loss| {
            progress!(settings, "denoiser epoch {e}: loss {loss:.5}");
        })?;
    let layout = settings.layout();
    create_dir(&layout.denoiser_dir())?;
    write_csv(
        &layout.denoiser_dir().join("loss.csv"),
        &["epoch", "train_loss"],
        report.epoch_losses.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]),
    )?;
    let checkpoint = layout.denoiser_checkpoint();
    model.save(&checkpoint)?;
    Ok(DenoiserSummary {
        checkpoint,
        epochs: report.epoch_losses.len(),
        initial_val_loss: report.initial_val_loss,
        final_val_loss: report.final_val_loss,
    })
}

/// Validation loss of a stored denoiser on the stored dataset.
pub fn denoiser_validation_loss(settings: &Settings, checkpoint: &Path) -> Result<f64> {
    let ds = load_data(settings)?;
    let schedule = NoiseSchedule::new(settings.config.schedule)?;
    let model = Denoiser::load(checkpoint)?;
    Ok(validation_loss(&model, &ds, &schedule, derive(settings.config.seed, stream::DENOISER))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSummary {
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub test_accuracy: f64,
}

pub fn train_classifier(settings: &Settings) -> Result<ClassifierSummary> {
    let cfg = &settings.config;
    let ds = load_data(settings)?;
    let (clf, report) =
        train_classifier_with(&ds, &cfg.classifier, derive(cfg.seed, stream::CLASSIFIER), |e, loss| {
            progress!(settings, "classifier epoch {e}: loss {loss:.5}");
        })?;
    let layout = settings.layout();
    create_dir(&layout.classifier_dir())?;
    write_csv(
        &layout.classifier_dir().join("loss.csv"),
        &["epoch", "train_loss"],
        report.epoch_losses.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]),
    )?;
    let checkpoint = layout.classifier_checkpoint();
    clf.save(&checkpoint)?;
    Ok(ClassifierSummary {
        checkpoint,
        epochs: report.epoch_losses.len(),
        test_accuracy: report.test_accuracy,
    })
}

/// Freshly initialized actor of the configured kind. Both learned kinds draw
/// from the same seed stream, and the critic uses its own stream, so switching
/// the actor kind changes nothing else.
pub fn init_actor(config: &RunConfig, kind: ActorKind) -> Result<Actor> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, stream::ACTOR));
    Ok(match kind {
        ActorKind::Quantum => Actor::Hybrid(HybridActor::new(config.vqc, &config.networks.head_hidden, &mut rng)?),
        ActorKind::Classical => {
            Actor::Classical(ClassicalActor::new(&config.networks.classical_hidden, &mut rng)?)
        }
        ActorKind::Fixed => bail!("the fixed controller has no trainable actor"),
    })
}

pub fn init_critic(config: &RunConfig) -> Result<Critic> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, stream::CRITIC));
    Ok(Critic::new(&config.networks.critic_hidden, &mut rng)?)
}

/// Environment slots with per-env latent/label and policy-noise streams.
pub fn env_slots<'a>(config: &RunConfig, models: GuidanceModels<'a>) -> Result<Vec<EnvSlot<GuidanceEnv<'a>>>> {
    let (env_base, noise_base) = (derive(config.seed, stream::ENVS), derive(config.seed, stream::POLICY_NOISE));
    (0..config.ppo.n_envs as u64)
        .map(|i| {
            Ok(EnvSlot {
                env: GuidanceEnv::new(models, config.reward, config.cfg0, derive(env_base, i))?,
                rng: ChaCha8Rng::seed_from_u64(derive(noise_base, i)),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ControllerSummary {
    pub dir: PathBuf,
    pub outcome: TrainingOutcome,
}

pub fn train_controller(settings: &Settings) -> Result<ControllerSummary> {
    train_controller_with(settings, |_, _| ControlFlow::Continue(()))
}

/// As [`train_controller`], with a hook that sees every iteration's log row and
/// rollout buffer and may stop training early.
pub fn train_controller_with(
    settings: &Settings,
    mut observe: impl FnMut(&LogRow, &RolloutBuffer) -> ControlFlow<()>,
) -> Result<ControllerSummary> {
    let cfg = &settings.config;
    let kind = cfg.actor;
    let actor = init_actor(cfg, kind)?;
    let critic = init_critic(cfg)?;
    let pretrained = Pretrained::load(settings)?;
    let mut slots = env_slots(cfg, pretrained.models())?;
    let outcome = run_training(
        &mut slots,
        actor,
        critic,
        &cfg.ppo,
        cfg.iterations,
        cfg.workers,
        derive(cfg.seed, stream::PPO),
        |row, buffer| {
            progress!(
                settings,
                "iteration {}: reward {:.5} |a| {:.4} g {:.4} clip {:.3}",
                row.iteration,
                row.mean_reward,
                row.mean_abs_action,
                row.mean_guidance,
                row.clip_fraction
            );
            observe(row, buffer)
        },
    )?;

    let layout = settings.layout();
    let dir = layout.controller_dir(kind);
    create_dir(&dir)?;
    write_csv(
        &layout.training_log(kind),
        &LOG_COLUMNS,
        outcome.log.iter().map(|r| {
            std::iter::once(r.iteration.to_string())
                .chain(r.values().iter().map(f64::to_string))
                .collect()
        }),
    )?;
    outcome.best_actor.save(&layout.actor_checkpoint(kind))?;
    outcome.best_critic.save(&layout.critic_checkpoint(kind))?;
    outcome.actor.save(&dir.join("last_actor.ckpt"))?;
    outcome.critic.save(&dir.join("last_critic.ckpt"))?;
    Ok(ControllerSummary { dir, outcome })
}

/// The trained actor for `kind`, or `None` for the fixed controller.
pub fn load_actor(settings: &Settings, kind: ActorKind) -> Result<Option<Actor>> {
    if kind == ActorKind::Fixed {
        return Ok(None);
    }
    let path = settings.layout().actor_checkpoint(kind);
    require(&path, "run train-controller first")?;
    let actor = Actor::load(&path).with_context(|| format!("cannot load {}", path.display()))?;
    let expected = init_actor(&settings.config, kind)?.kind_name();
    ensure!(
        actor.kind_name() == expected,
        "{} holds a {} actor, expected {expected}",
        path.display(),
        actor.kind_name()
    );
    Ok(Some(actor))
}

/// `(label, seed)` of the `i`-th sample; identical for every controller.
pub fn sample_plan(config: &RunConfig, n: usize) -> Vec<(usize, u64)> {
    let labels: Vec<usize> = if config.sample.labels.is_empty() {
        (0..NUM_CLASSES).collect()
    } else {
        config.sample.labels.clone()
    };
    let base = derive(config.seed, stream::SAMPLES);
    (0..n).map(|i| (labels[i % labels.len()], derive(base, i as u64))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub dir: PathBuf,
    pub count: usize,
    pub mean_reward: f64,
    pub accuracy: f64,
}

const TRACE_COLUMNS: [&str; 5] = ["step", "t", "action", "guidance", "reward"];

pub fn sample(settings: &Settings) -> Result<SampleSummary> {
    let cfg = &settings.config;
    ensure!(cfg.sample.n > 0, "sample.n must be positive");
    let actor = load_actor(settings, cfg.actor)?;
    let pretrained = Pretrained::load(settings)?;
    let controller = match &actor {
        Some(a) => Controller::Learned(a),
        None => Controller::Fixed,
    };
    let dir = settings.layout().samples_dir(cfg.actor);
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("cannot clear {}", dir.display()))?;
    }
    create_dir(&dir)?;

    let mut summary_rows = Vec::with_capacity(cfg.sample.n);
    let (mut reward_sum, mut correct) = (0.0, 0usize);
    for (index, (label, seed)) in sample_plan(cfg, cfg.sample.n).into_iter().enumerate() {
        let trace = run_inference(controller, pretrained.models(), &cfg.reward, label, cfg.cfg0, seed)?;
        let stem = sample_stem(label, seed, index);
        write_pgm(&dir.join(format!("{stem}.pgm")), &trace.image)?;
        if cfg.sample.png {
            write_png(&dir.join(format!("{stem}.png")), &trace.image)?;
        }
        write_csv(
            &dir.join(format!("{stem}.csv")),
            &TRACE_COLUMNS,
            trace.steps.iter().map(|s| {
                vec![
                    s.step.to_string(),
                    s.t.to_string(),
                    s.action.to_string(),
                    s.guidance.to_string(),
                    s.reward.to_string(),
                ]
            }),
        )?;
        let predicted = pretrained.classifier.predict_label(trace.image.pixels())?;
        correct += usize::from(predicted == label);
        reward_sum += trace.total_reward;
        progress!(settings, "sample {index}: label {label} predicted {predicted} reward {:.5}", trace.total_reward);
        summary_rows.push(vec![
            stem,
            label.to_string(),
            predicted.to_string(),
            trace.total_reward.to_string(),
        ]);
    }
    write_csv(
        &dir.join("summary.csv"),
        &["sample", "label", "predicted", "total_reward"],
        summary_rows,
    )?;
    let n = cfg.sample.n as f64;
    Ok(SampleSummary {
        dir,
        count: cfg.sample.n,
        mean_reward: reward_sum / n,
        accuracy: correct as f64 / n,
    })
}

fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .context("image buffer size mismatch")?;
    buf.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Sampled images in a directory, ordered by sample index.
pub fn list_samples(dir: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read sample directory {}", dir.display()))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (label, _, index) = parse_sample_stem(stem)
            .with_context(|| format!("{} is not named label_seed_index.pgm", path.display()))?;
        ensure!(label < NUM_CLASSES, "{} has label {label} out of range", path.display());
        found.push((index, path, label));
    }
    ensure!(!found.is_empty(), "no sample images in {}", dir.display());
    found.sort();
    Ok(found.into_iter().map(|(_, p, l)| (p, l)).collect())
}

/// 8-bit round trip, so references sit on the same grid as stored samples.
fn quantized(img: &GrayImage) -> Result<GrayImage> {
    Ok(GrayImage::from_u8(img.width(), img.height(), &img.to_u8())?)
}

/// Metrics of every sample in `dir` against the class-matched test image with
/// the smallest MSE, plus proxy-classifier accuracy on the samples.
pub fn evaluate_dir(
    dir: &Path,
    model: &str,
    params: usize,
    dataset: &ShapeDataset,
    classifier: &ProxyClassifier,
) -> Result<EvalRow> {
    let refs: Vec<Vec<GrayImage>> = (0..NUM_CLASSES)
        .map(|c| dataset.test_of_class(c).map(quantized).collect())
        .collect::<Result<_>>()?;
    let (mut psnr, mut ssim, mut lpips) = (Vec::new(), Vec::new(), Vec::new());
    let mut correct = 0usize;
    let samples = list_samples(dir)?;
    for (path, label) in &samples {
        let img = read_pgm(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut best: Option<(f64, &GrayImage)> = None;
        for r in &refs[*label] {
            let mse = metrics::mse_255(&img, r)?;
            if best.is_none_or(|(m, _)| mse < m) {
                best = Some((mse, r));
            }
        }
        let (_, reference) = best.with_context(|| format!("no test images of class {label}"))?;
        psnr.push(metrics::psnr(&img, reference)?);
        ssim.push(metrics::ssim(&img, reference)?);
        lpips.push(metrics::lpips_proxy(&img, reference, classifier)?);
        correct += usize::from(classifier.predict_label(img.pixels())? == *label);
    }
    let ((pm, ps), (sm, ss), (lm, ls)) = (mean_std(&psnr), mean_std(&ssim), mean_std(&lpips));
    Ok(EvalRow {
        model: model.to_owned(),
        psnr_mean: pm,
        psnr_std: ps,
        ssim_mean: sm,
        ssim_std: ss,
        lpips_mean: lm,
        lpips_std: ls,
        params,
        accuracy: correct as f64 / samples.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub csv: PathBuf,
    pub row: EvalRow,
}

pub fn evaluate(settings: &Settings) -> Result<EvalSummary> {
    let kind = settings.config.actor;
    let layout = settings.layout();
    let params = load_actor(settings, kind)?.map_or(0, |a| a.param_count());
    let dataset = load_data(settings)?;
    let clf_path = layout.classifier_checkpoint();
    require(&clf_path, "run train-classifier first")?;
    let classifier = ProxyClassifier::load(&clf_path)?;
    let row = evaluate_dir(&layout.samples_dir(kind), kind.name(), params, &dataset, &classifier)?;
    let csv = layout.eval_csv(kind);
    write_eval_csv(&csv, std::slice::from_ref(&row))?;
    Ok(EvalSummary { csv, row })
}

/// Eval CSVs in `out/eval`, sorted by file name.
pub fn default_report_inputs(settings: &Settings) -> Result<Vec<PathBuf>> {
    let dir = settings.layout().eval_dir();
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"));
    paths.sort();
    Ok(paths)
}

pub fn report(settings: &Settings, inputs: &[PathBuf]) -> Result<Report> {
    let inputs = if inputs.is_empty() {
        default_report_inputs(settings)?
    } else {
        inputs.to_vec()
    };
    let report = merge_eval_csvs(&inputs)?;
    let dir = settings.layout().report_dir();
    create_dir(&dir)?;
    report.write_csv(&dir.join("report.csv"))?;
    fs::write(dir.join("report.txt"), report.render())?;
    Ok(report)
}
