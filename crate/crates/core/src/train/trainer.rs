//! Two-stage training loop: small patches first, then large patches
//! warm-started from the stage-1 weights.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{sample_batch, SampleStore};
use crate::error::{Error, Result};
use crate::jpeg::Subsampling;
use crate::model::{save_checkpoint, Model};
use crate::tensor::{adam_step, AdamState};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub decay: f64,
    pub every_epochs: usize,
}

impl LrSchedule {
    /// Learning rate after `completed` epochs.
    pub fn at_epoch(&self, completed: usize) -> f64 {
        self.start * self.decay.powi((completed / self.every_epochs) as i32)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub qf_range: (u8, u8),
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub lr: LrSchedule,
    pub seed: u64,
    pub crop_size: usize,
    pub crop_stride: usize,
    pub steps_per_epoch: usize,
    pub subsampling: Subsampling,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            qf_range: (1, 60),
            stage1: StageConfig { patch_size: 64, batch_size: 256, epochs: 4 },
            stage2: StageConfig { patch_size: 256, batch_size: 32, epochs: 2 },
            lr: LrSchedule { start: 1e-4, decay: 0.1, every_epochs: 20 },
            seed: 0,
            crop_size: 256,
            crop_stride: 128,
            steps_per_epoch: 100,
            subsampling: Subsampling::S420,
            validation_fraction: 0.02,
        }
    }
}

impl TrainConfig {
    /// Minutes-scale preset used by tests and the demo pipeline.
    pub fn toy() -> Self {
        TrainConfig {
            stage1: StageConfig { patch_size: 48, batch_size: 8, epochs: 8 },
            stage2: StageConfig { patch_size: 96, batch_size: 4, epochs: 1 },
            lr: LrSchedule { start: 1e-4, decay: 0.1, every_epochs: 20 },
            crop_size: 128,
            crop_stride: 128,
            steps_per_epoch: 200,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.qf_range;
        if lo < 1 || lo > hi || hi > 100 {
            return Err(Error::Config(format!("qf_range ({}, {}) must satisfy 1 <= lo <= hi <= 100", lo, hi)));
        }
        for (name, stage) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if stage.patch_size == 0 || stage.patch_size % 8 != 0 {
                return Err(Error::Config(format!(
                    "{} patch size {} must be a positive multiple of 8",
                    name, stage.patch_size
                )));
            }
            if stage.patch_size > self.crop_size {
                return Err(Error::Config(format!(
                    "{} patch size {} exceeds crop size {}",
                    name, stage.patch_size, self.crop_size
                )));
            }
            if stage.batch_size == 0 {
                return Err(Error::Config(format!("{} batch size must be positive", name)));
            }
        }
        if self.lr.every_epochs == 0 || !(self.lr.start > 0.0) {
            return Err(Error::Config("lr schedule wants start > 0 and a positive epoch period".into()));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Reads TOML or JSON by extension.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LossPoint {
    pub stage: usize,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub curve: Vec<LossPoint>,
    pub stage1_initial_loss: f64,
    pub stage1_final_loss: f64,
    pub stage2_initial_loss: Option<f64>,
    pub final_loss: f64,
}

impl TrainReport {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("stage,epoch,step,lr,loss\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{},{:e},{}", p.stage, p.epoch, p.step, p.lr, p.loss);
        }
        out
    }
}

fn run_stage(
    stage_no: usize,
    stage: &StageConfig,
    config: &TrainConfig,
    model: &mut Model<f32>,
    store: &SampleStore,
    rng: &mut ChaCha12Rng,
    out_dir: Option<&Path>,
    curve: &mut Vec<LossPoint>,
) -> Result<(f64, f64)> {
    let train_idx = store.training_indices();
    let val_idx = store.validation_indices();
    let mut adam = AdamState::new(&model.params.shapes(), config.lr.start);
    let mut first_loss = None;
    let mut last_loss = f64::NAN;

    for epoch in 0..stage.epochs {
        adam.lr = config.lr.at_epoch(epoch);
        for step in 0..config.steps_per_epoch {
            let batch = sample_batch(
                store,
                &train_idx,
                stage.patch_size,
                stage.batch_size,
                config.qf_range,
                config.subsampling,
                rng,
            )?;
            let mut pass = model.build_forward(&batch.input, true)?;
            let target = pass.graph.leaf(batch.target, false);
            let loss_var = pass.graph.l1_loss(pass.output, target)?;
            let loss = pass.graph.value(loss_var).data()[0] as f64;
            if !loss.is_finite() {
                dump_divergence(out_dir, curve, stage_no, epoch, step, loss);
                return Err(Error::Diverged(format!(
                    "non-finite loss {} at stage {} epoch {} step {}",
                    loss, stage_no, epoch, step
                )));
            }
            first_loss.get_or_insert(loss);
            last_loss = loss;

            let mut grads = pass.graph.backward(loss_var)?;
            let grad_tensors: Vec<_> = pass
                .param_vars
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    grads.take(*v).unwrap_or_else(|| {
                        crate::tensor::Tensor::zeros(model.params.entries()[i].1.shape())
                    })
                })
                .collect();
            let mut tensors = model.params.tensors_mut();
            adam_step(&mut tensors, &grad_tensors, &mut adam)?;

            curve.push(LossPoint {
                stage: stage_no,
                epoch,
                step,
                lr: adam.lr,
                loss,
            });
        }

        // quick divergence check on held-out crops
        if !val_idx.is_empty() {
            let mut val_rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x5A5A_5A5A);
            let vb = sample_batch(
                store,
                &val_idx,
                stage.patch_size,
                stage.batch_size.min(4),
                config.qf_range,
                config.subsampling,
                &mut val_rng,
            )?;
            let pass = model.build_forward(&vb.input, false)?;
            let mut g = pass.graph;
            let tgt = g.leaf(vb.target, false);
            let lv = g.l1_loss(pass.output, tgt)?;
            let vloss = g.value(lv).data()[0] as f64;
            if !vloss.is_finite() {
                dump_divergence(out_dir, curve, stage_no, epoch, config.steps_per_epoch, vloss);
                return Err(Error::Diverged(format!(
                    "non-finite validation loss after stage {} epoch {}",
                    stage_no, epoch
                )));
            }
        }

        if let Some(dir) = out_dir {
            let path = dir.join(format!("checkpoint_stage{}_epoch{}.qgcn", stage_no, epoch));
            save_checkpoint(model, path)?;
        }
    }
    Ok((first_loss.unwrap_or(f64::NAN), last_loss))
}

fn dump_divergence(
    out_dir: Option<&Path>,
    curve: &[LossPoint],
    stage: usize,
    epoch: usize,
    step: usize,
    loss: f64,
) {
    let tail: Vec<String> = curve
        .iter()
        .rev()
        .take(10)
        .map(|p| format!("stage {} epoch {} step {}: loss {}", p.stage, p.epoch, p.step, p.loss))
        .collect();
    let body = format!(
        "diverged at stage {} epoch {} step {} with loss {}\nlast points:\n{}\n",
        stage,
        epoch,
        step,
        loss,
        tail.join("\n")
    );
    eprintln!("{}", body);
    if let Some(dir) = out_dir {
        let _ = std::fs::write(dir.join("divergence_dump.txt"), body);
    }
}

/// Runs both stages. Checkpoints and the loss curve land in `out_dir`
/// when given; the final model is returned in place.
pub fn train(
    config: &TrainConfig,
    model: &mut Model<f32>,
    store: &SampleStore,
    out_dir: Option<&Path>,
    eval_paths: &[PathBuf],
) -> Result<TrainReport> {
    config.validate()?;
    store.assert_disjoint_from(eval_paths)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        store.write_manifest(dir.join("train_manifest.jsonl"))?;
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut curve = Vec::new();

    let (s1_first, s1_last) =
        run_stage(1, &config.stage1, config, model, store, &mut rng, out_dir, &mut curve)?;
    let (s2_first, s2_last) = if config.stage2.epochs > 0 {
        let (f, l) =
            run_stage(2, &config.stage2, config, model, store, &mut rng, out_dir, &mut curve)?;
        (Some(f), l)
    } else {
        (None, s1_last)
    };

    let report = TrainReport {
        curve,
        stage1_initial_loss: s1_first,
        stage1_final_loss: s1_last,
        stage2_initial_loss: s2_first,
        final_loss: s2_last,
    };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("loss_curve.csv"), report.curve_csv())
            .map_err(|e| Error::io(dir.join("loss_curve.csv"), e))?;
        save_checkpoint(model, dir.join("model.qgcn"))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_arithmetic() {
        let lr = LrSchedule { start: 1e-4, decay: 0.1, every_epochs: 20 };
        assert!((lr.at_epoch(0) - 1e-4).abs() < 1e-18);
        assert!((lr.at_epoch(19) - 1e-4).abs() < 1e-18);
        assert!((lr.at_epoch(20) - 1e-5).abs() < 1e-18);
        // after 45 epochs: two decays
        assert!((lr.at_epoch(45) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::toy().validate().is_ok());
        let bad = TrainConfig { qf_range: (0, 60), ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { qf_range: (30, 20), ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            stage1: StageConfig { patch_size: 63, batch_size: 8, epochs: 1 },
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::toy();

        let toml_path = dir.path().join("train.toml");
        std::fs::write(&toml_path, toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(TrainConfig::from_file(&toml_path).unwrap(), cfg);

        let json_path = dir.path().join("train.json");
        std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(TrainConfig::from_file(&json_path).unwrap(), cfg);
    }
}
