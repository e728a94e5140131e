use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::{
    distillation_loss, early_stop, mtl_weights, EpochRecord, LossBreakdown, TeacherSource, TeacherTargets,
    TrainConfig, TrainLog,
};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use crate::data::{batch_order, Dataset, Example, Split};
use crate::eval::{config_hash, evaluate_examples, EvalReport};
use crate::model::{build_model, Architecture, CheckpointMeta, Model, ModelCheckpoint, ParamMode};
use crate::rng::{derive_seed, stream};
use crate::{par, Error, Result};

/// The teacher a student learns from.
#[derive(Debug, Clone)]
pub enum Teacher {
    /// Parameters never change.
    Frozen(Model),
    /// Updated on its own cross-entropy every step.
    Joint(Model),
}

impl Teacher {
    pub fn model(&self) -> &Model {
        match self {
            Teacher::Frozen(m) | Teacher::Joint(m) => m,
        }
    }
}

/// What the observer sees after every optimizer step.
pub struct StepInfo<'a> {
    /// 1-based.
    pub epoch: usize,
    /// 0-based within the epoch.
    pub step: usize,
    /// Batch mean.
    pub loss: &'a LossBreakdown,
    pub per_utterance: &'a [LossBreakdown],
    /// Student attention weights per utterance.
    pub alphas: &'a [Vec<f64>],
    pub teacher: Option<&'a Model>,
    pub model: &'a Model,
}

pub type Observer<'o> = &'o mut dyn FnMut(&StepInfo<'_>) -> Result<()>;

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub best: ModelCheckpoint,
    pub last: ModelCheckpoint,
    pub log: TrainLog,
    /// Final teacher of a joint run.
    pub teacher: Option<Model>,
    /// Test-split report of the best checkpoint, when a run directory was given.
    pub metrics: Option<EvalReport>,
}

struct UttResult {
    grads: BTreeMap<String, Tensor>,
    teacher_grads: Option<BTreeMap<String, Tensor>>,
    loss: LossBreakdown,
    alpha: Vec<f64>,
    correct: bool,
}

fn utterance_step(
    model: &Model,
    teacher: Option<&Teacher>,
    cfg: &TrainConfig,
    ex: &Example,
    (a, b): (f64, f64),
) -> Result<UttResult> {
    let f = &ex.features;
    let mut g = Graph::new();
    let out = model.forward(&mut g, f, ParamMode::Trainable)?;
    let l_cls = g.cross_entropy(out.logits, ex.label)?;
    let correct = crate::model::argmax(g.value(out.logits).data()) == ex.label;

    let (total, loss, teacher_grads) = match teacher {
        None => {
            let v = g.value(l_cls).item();
            let loss = LossBreakdown {
                l_cls: v,
                a: 1.0,
                l_total: v,
                ..LossBreakdown::default()
            };
            (l_cls, loss, None)
        }
        Some(t) => {
            let joint = matches!(t, Teacher::Joint(_));
            let mut tg = Graph::new();
            let mode = if joint { ParamMode::Trainable } else { ParamMode::Frozen };
            let tout = t.model().forward(&mut tg, f, mode)?;
            let student_frames = g.value(out.frame_features).rows();
            let targets = TeacherTargets::aligned(
                tg.value(tout.frame_features),
                tg.value(tout.alpha),
                tg.value(tout.pooled),
                student_frames,
            )?;
            let teacher_grads = if joint {
                let ce = tg.cross_entropy(tout.logits, ex.label)?;
                Some(tg.backward(ce)?.param_grads()?)
            } else {
                None
            };
            let (l_attn, l_feat) = distillation_loss(&mut g, &out, &targets, cfg.distill_parts, cfg.distill_level)?;
            let l_dis = g.add(l_attn, l_feat)?;
            let wa = g.scale(l_cls, a)?;
            let wb = g.scale(l_dis, b)?;
            let total = g.add(wa, wb)?;
            let loss = LossBreakdown {
                l_cls: g.value(l_cls).item(),
                l_attn: g.value(l_attn).item(),
                l_feat: g.value(l_feat).item(),
                l_dis: g.value(l_dis).item(),
                a,
                b,
                l_total: g.value(total).item(),
            };
            (total, loss, teacher_grads)
        }
    };
    loss.check()?;
    let grads = g.backward(total)?.param_grads()?;
    Ok(UttResult {
        grads,
        teacher_grads,
        loss,
        alpha: g.value(out.alpha).data().to_vec(),
        correct,
    })
}

/// Mean of per-utterance gradients, summed in batch order.
fn mean_grads(parts: impl Iterator<Item = BTreeMap<String, Tensor>>, n: usize) -> BTreeMap<String, Tensor> {
    let mut acc: Option<BTreeMap<String, Tensor>> = None;
    for p in parts {
        match &mut acc {
            None => acc = Some(p),
            Some(acc) => {
                for (k, v) in p {
                    let dst = acc.get_mut(&k).expect("same parameter set");
                    for (d, s) in dst.data_mut().iter_mut().zip(v.data()) {
                        *d += s;
                    }
                }
            }
        }
    }
    let mut acc = acc.unwrap_or_default();
    let scale = 1.0 / n as f64;
    for v in acc.values_mut() {
        for d in v.data_mut() {
            *d *= scale;
        }
    }
    acc
}

/// Fraction of `examples` classified correctly.
pub fn accuracy(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptySplit("accuracy".into()));
    }
    let hits = par::map(examples, |ex| model.predict(&ex.features).map(|p| p == ex.label));
    let mut n = 0;
    for h in hits {
        n += h? as usize;
    }
    Ok(n as f64 / examples.len() as f64)
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    for (split, xs) in [(Split::Train, &ds.train), (Split::Validation, &ds.validation)] {
        if xs.is_empty() {
            return Err(Error::EmptySplit(split.to_string()));
        }
    }
    Ok(())
}

/// Builds or loads the teacher a student run needs.
pub fn resolve_teacher(cfg: &TrainConfig, n_intents: usize) -> Result<Option<Teacher>> {
    if cfg.arch != Architecture::Student {
        return Ok(None);
    }
    match &cfg.teacher {
        None => Err(Error::Config("the student needs a `teacher` source".into())),
        Some(TeacherSource::PretrainedFrozen { checkpoint }) => {
            Ok(Some(Teacher::Frozen(ModelCheckpoint::load(checkpoint)?.model)))
        }
        Some(TeacherSource::JointFromScratch) => {
            let m = build_model(
                Architecture::Teacher,
                &cfg.model,
                n_intents,
                derive_seed(cfg.seed, "joint-teacher"),
            )?;
            Ok(Some(Teacher::Joint(m)))
        }
    }
}

/// Teacher pretraining: prosody encoder + pooling + linear head, CE only.
pub fn train_teacher(ds: &Dataset, cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<TrainOutput> {
    if cfg.arch != Architecture::Teacher {
        return Err(Error::Config(format!("train_teacher needs arch Teacher (got {})", cfg.arch)));
    }
    fit(ds, cfg, None, run_dir, None)
}

/// CE-only training of either baseline.
pub fn train_baseline(ds: &Dataset, cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<TrainOutput> {
    if !matches!(cfg.arch, Architecture::BaselinePlain | Architecture::BaselineLocalConcat) {
        return Err(Error::Config(format!("train_baseline needs a baseline arch (got {})", cfg.arch)));
    }
    fit(ds, cfg, None, run_dir, None)
}

/// Distillation training of the acoustic student against `teacher`.
pub fn train_student(
    ds: &Dataset,
    cfg: &TrainConfig,
    teacher: Teacher,
    run_dir: Option<&Path>,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutput> {
    if cfg.arch != Architecture::Student {
        return Err(Error::Config(format!("train_student needs arch Student (got {})", cfg.arch)));
    }
    fit(ds, cfg, Some(teacher), run_dir, observer)
}

/// Dispatches on `cfg.arch`, resolving the teacher for student runs.
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutput> {
    let teacher = resolve_teacher(cfg, ds.n_intents)?;
    fit(ds, cfg, teacher, run_dir, observer)
}

/// The shared training loop.
pub fn fit(
    ds: &Dataset,
    cfg: &TrainConfig,
    teacher: Option<Teacher>,
    run_dir: Option<&Path>,
    mut observer: Option<Observer<'_>>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_dataset(ds)?;
    if let Some(ex) = ds.train.iter().chain(&ds.validation).find(|e| e.label >= ds.n_intents) {
        return Err(Error::LabelOutOfRange {
            label: ex.label,
            classes: ds.n_intents,
        });
    }
    let mut model = build_model(cfg.arch, &cfg.model, ds.n_intents, cfg.seed)?;
    let mut teacher = teacher;
    if let Some(t) = &teacher {
        let tc = t.model().config;
        if tc.arch != Architecture::Teacher {
            return Err(Error::Config(format!("teacher checkpoint has arch {}", tc.arch)));
        }
        if tc.n_intents != model.config.n_intents {
            return Err(Error::IntentMismatch {
                left: tc.n_intents,
                right: model.config.n_intents,
            });
        }
        if tc.encoder.hidden_channels != model.config.encoder.hidden_channels {
            return Err(Error::Config(format!(
                "teacher width {} != student width {}",
                tc.encoder.hidden_channels, model.config.encoder.hidden_channels
            )));
        }
        if tc.feature_mask != cfg.model.feature_mask {
            return Err(Error::Config(
                "teacher feature_mask differs from the configured feature_mask".into(),
            ));
        }
    } else if cfg.arch == Architecture::Student {
        return Err(Error::Config("the student needs a teacher".into()));
    }

    if let Some(dir) = run_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config = serde_json::to_string_pretty(cfg)?;
        fs::write(dir.join("config.json"), config).map_err(|e| Error::io(dir.join("config.json"), e))?;
    }

    let mut adam = AdamState::new(AdamConfig::default());
    let mut teacher_adam = AdamState::new(AdamConfig::default());
    let mut log = TrainLog::new(cfg.arch, cfg.seed);
    let mut best: Option<(Model, usize, f64)> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let order = batch_order(ds.train.len(), cfg.batch_size, cfg.seed, epoch - 1)?;
        let mut mtl_rng = stream(cfg.seed, &format!("mtl/epoch{epoch}"));
        let mut step_losses = Vec::with_capacity(order.len());
        let mut correct = 0usize;

        for (step, idx) in order.iter().enumerate() {
            let ab = mtl_weights(cfg.mtl_scheme, &mut mtl_rng);
            let results = par::map(idx, |&i| utterance_step(&model, teacher.as_ref(), cfg, &ds.train[i], ab))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let per_utterance: Vec<LossBreakdown> = results.iter().map(|r| r.loss).collect();
            let batch_loss = LossBreakdown::mean(&per_utterance);
            batch_loss.check()?;
            correct += results.iter().filter(|r| r.correct).count();
            let alphas: Vec<Vec<f64>> = results.iter().map(|r| r.alpha.clone()).collect();

            let mut student_parts = Vec::with_capacity(results.len());
            let mut teacher_parts = Vec::new();
            for r in results {
                student_parts.push(r.grads);
                if let Some(tg) = r.teacher_grads {
                    teacher_parts.push(tg);
                }
            }
            let grads = mean_grads(student_parts.into_iter(), idx.len());
            adam_step(&mut model.params, &grads, &mut adam, |n| cfg.lr_for(n))?;
            if let Some(Teacher::Joint(t)) = &mut teacher {
                let tgrads = mean_grads(teacher_parts.into_iter(), idx.len());
                adam_step(&mut t.params, &tgrads, &mut teacher_adam, |n| cfg.lr_for(n))?;
            }

            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepInfo {
                    epoch,
                    step,
                    loss: &batch_loss,
                    per_utterance: &per_utterance,
                    alphas: &alphas,
                    teacher: teacher.as_ref().map(Teacher::model),
                    model: &model,
                })?;
            }
            step_losses.push(batch_loss);
        }

        let val_accuracy = accuracy(&model, &ds.validation)?;
        let teacher_val_accuracy = match &teacher {
            Some(Teacher::Joint(t)) => Some(accuracy(t, &ds.validation)?),
            _ => None,
        };
        if best.as_ref().is_none_or(|b| val_accuracy > b.2) {
            best = Some((model.clone(), epoch, val_accuracy));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        let record = EpochRecord {
            epoch,
            train_loss: LossBreakdown::mean(&step_losses),
            train_accuracy: correct as f64 / ds.train.len() as f64,
            val_accuracy,
            teacher_val_accuracy,
            best_epoch,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch} arch={} loss={:.4} train_acc={:.3} val_acc={:.3} best={best_epoch}",
            cfg.arch,
            record.train_loss.l_total,
            record.train_accuracy,
            val_accuracy
        );
        log.epochs.push(record);
        if early_stop(&log, cfg.early_stop_patience) {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }

    let (best_model, best_epoch, best_acc) = best.expect("at least one epoch");
    let best = ModelCheckpoint::new(
        best_model,
        CheckpointMeta {
            epoch: best_epoch,
            best_val_accuracy: best_acc,
            seed: cfg.seed,
        },
    );
    let last = ModelCheckpoint::new(
        model,
        CheckpointMeta {
            epoch: log.current_epoch().unwrap_or(0),
            best_val_accuracy: best_acc,
            seed: cfg.seed,
        },
    );

    let mut metrics = None;
    if let Some(dir) = run_dir {
        let best_path = dir.join("best.ckpt");
        best.save(&best_path)?;
        last.save(&dir.join("last.ckpt"))?;
        log.save(&dir.join("log.jsonl"))?;
        if !ds.test.is_empty() {
            let (cm, _) = evaluate_examples(&best.model, &ds.test)?;
            let report = EvalReport::from_confusion(
                &cm,
                best_path.display().to_string(),
                config_hash(&serde_json::to_value(cfg)?),
                cfg.seed,
            );
            report.save(&dir.join("metrics.json"))?;
            metrics = Some(report);
        }
    }
    Ok(TrainOutput {
        best,
        last,
        log,
        teacher: match teacher {
            Some(Teacher::Joint(t)) => Some(t),
            _ => None,
        },
        metrics,
    })
}
