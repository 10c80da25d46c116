//! Optimization: bias-corrected Adam, cosine-annealed learning rate,
//! deterministic training loop with best-checkpoint retention, binary
//! checkpoint format, and split evaluation.

use crate::config::TrainConfig;
use crate::data::{self, Sample};
use crate::error::{Error, Result};
use crate::loss;
use crate::metrics::{self, MetricsReport, EVAL_THRESHOLD};
use crate::model::{ParamSet, PhiSegModel};
use crate::rng;
use crate::tensor::{Tape, Tensor};
use rand::Rng;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment buffers plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        AdamState { m, v, step: 0 }
    }
}

/// One bias-corrected Adam update over every parameter.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::InvalidArgument {
            op: "adam_step",
            message: format!("{} gradients for {} parameters", grads.len(), params.len()),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                message: format!("non-finite gradient on parameter `{}`", p.name),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..g.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p.tensor.data[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Cosine annealing: eta_min + (lr0 - eta_min) * (1 + cos(pi*t/T)) / 2 with
/// t = epoch mod t_max, so the schedule restarts at lr0 every t_max epochs.
pub fn cosine_lr(epoch: usize, lr0: f64, t_max: usize, eta_min: f64) -> f64 {
    let t = (epoch % t_max) as f64;
    eta_min + 0.5 * (lr0 - eta_min) * (1.0 + (PI * t / t_max as f64).cos())
}

/// Scale all gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm. `max_norm <= 0` disables clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

// ---- checkpoint format ----

pub const CKPT_MAGIC: &[u8; 8] = b"PHISEG01";

type Record = (String, Vec<usize>, Vec<f64>);

/// On-disk training state: config echo, model state records, Adam state,
/// epoch, and the best validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub records: Vec<Record>,
    pub adam: Vec<Record>,
    pub epoch: u64,
    pub best_val_loss: f64,
}

fn push_record(out: &mut Vec<u8>, (name, shape, data): &Record) {
    out.extend((name.len() as u64).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend((d as u64).to_le_bytes());
    }
    for &v in data {
        out.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail<T>(&self, what: &str) -> Result<T> {
        Err(Error::Format {
            what: format!("checkpoint {what}"),
            offset: self.pos,
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return self.fail(what);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn record(&mut self) -> Result<Record> {
        let name_len = self.u64("record name length")? as usize;
        let name = match std::str::from_utf8(self.take(name_len, "record name")?) {
            Ok(s) => s.to_string(),
            Err(_) => return self.fail("record name (invalid UTF-8)"),
        };
        let rank = self.u32("record rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64("record dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(self.f64("record payload")?);
        }
        Ok((name, shape, data))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(CKPT_MAGIC);
        out.extend((self.config_text.len() as u64).to_le_bytes());
        out.extend(self.config_text.as_bytes());
        out.extend((self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            push_record(&mut out, r);
        }
        out.extend((self.adam.len() as u64).to_le_bytes());
        for r in &self.adam {
            push_record(&mut out, r);
        }
        out.extend(self.epoch.to_le_bytes());
        out.extend(self.best_val_loss.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CKPT_MAGIC {
            return Err(Error::Format { what: "checkpoint magic".into(), offset: 0 });
        }
        let cfg_len = r.u64("config length")? as usize;
        let config_text = match std::str::from_utf8(r.take(cfg_len, "config echo")?) {
            Ok(s) => s.to_string(),
            Err(_) => return r.fail("config echo (invalid UTF-8)"),
        };
        let n = r.u64("record count")? as usize;
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            records.push(r.record()?);
        }
        let n = r.u64("adam record count")? as usize;
        let mut adam = Vec::with_capacity(n);
        for _ in 0..n {
            adam.push(r.record()?);
        }
        let epoch = r.u64("epoch")?;
        let best_val_loss = r.f64("best validation loss")?;
        if r.pos != bytes.len() {
            return r.fail("trailing bytes");
        }
        Ok(Checkpoint { config_text, records, adam, epoch, best_val_loss })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuild the model this checkpoint was saved from.
    pub fn restore_model(&self) -> Result<(TrainConfig, PhiSegModel)> {
        let config = TrainConfig::parse(&self.config_text)?;
        let mut model = PhiSegModel::new(config.encoder_spec(), config.filter_spec(), config.seed)?;
        model.load_state_records(&self.records)?;
        Ok((config, model))
    }
}

fn snapshot(config: &TrainConfig, model: &PhiSegModel, adam: &AdamState, epoch: u64, best: f64) -> Checkpoint {
    let mut adam_records: Vec<Record> = Vec::with_capacity(2 * adam.m.len() + 1);
    for (p, m) in model.params.iter().zip(&adam.m) {
        adam_records.push((format!("adam.m.{}", p.name), vec![m.len()], m.clone()));
    }
    for (p, v) in model.params.iter().zip(&adam.v) {
        adam_records.push((format!("adam.v.{}", p.name), vec![v.len()], v.clone()));
    }
    adam_records.push(("adam.step".into(), vec![], vec![adam.step as f64]));
    Checkpoint {
        config_text: config.serialize(),
        records: model.state_records(),
        adam: adam_records,
        epoch,
        best_val_loss: best,
    }
}

// ---- training loop ----

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub best_val_loss: f64,
    pub best_epoch: u64,
    pub final_val_iou: f64,
}

fn batch_loss(
    model: &mut PhiSegModel,
    config: &TrainConfig,
    images: &Tensor,
    masks: &Tensor,
) -> Result<(Tape, crate::tensor::Var, Vec<crate::tensor::Var>)> {
    let mut tape = Tape::new();
    let out = model.forward_train(&mut tape, images)?;
    let w = config.loss_weights()?;
    let total = loss::total_loss(&mut tape, &out.phi_masks, out.pred, masks, &w)?;
    Ok((tape, total, out.param_vars))
}

fn gather_grads(tape: &Tape, param_vars: &[crate::tensor::Var], params: &ParamSet) -> Vec<Vec<f64>> {
    param_vars
        .iter()
        .zip(params.iter())
        .map(|(&var, p)| match tape.grad(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; p.tensor.numel()],
        })
        .collect()
}

/// Evaluate total loss and IoU of one sample in eval mode.
fn eval_sample(model: &PhiSegModel, config: &TrainConfig, s: &Sample) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let (img, mask) = data::stack(&[s])?;
    let out = model.forward_eval(&mut tape, &img)?;
    let w = config.loss_weights()?;
    let total = loss::total_loss(&mut tape, &out.phi_masks, out.pred, &mask, &w)?;
    let loss_v = tape.data(total)[0];
    let pred_bin = metrics::binarize(tape.data(out.pred), EVAL_THRESHOLD);
    let gt_bin = metrics::binarize(&mask.data, EVAL_THRESHOLD);
    let (h, wd) = (img.shape[2], img.shape[3]);
    let report = metrics::metrics(&pred_bin, &gt_bin, h, wd)?;
    Ok((loss_v, report.iou))
}

/// Full training protocol: augmented multi-scale mini-batches, Adam with
/// cosine-annealed learning rate, per-epoch validation, best-checkpoint
/// retention, and a history CSV. Deterministic in (config, dataset bytes).
pub fn train_loop(config: &TrainConfig, data_root: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let train_set = data::load_split(data_root, "train")?;
    let val_set = data::load_split(data_root, "val")?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument {
            op: "train_loop",
            message: format!("no training samples under {}", data_root.display()),
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let ckpt_path = out_dir.join("best.ckpt");
    let history_path = out_dir.join("history.csv");

    let mut model = PhiSegModel::new(config.encoder_spec(), config.filter_spec(), config.seed)?;
    let mut adam = AdamState::new(&model.params);
    let mut history = String::from("epoch,lr,train_loss,val_loss,val_iou\n");

    let mut best: Option<Checkpoint> = None;
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0u64;
    let mut final_val_iou = 0.0;

    let finish = |best: Option<Checkpoint>,
                  history: &str,
                  model: &PhiSegModel,
                  adam: &AdamState,
                  best_val: f64,
                  best_epoch: u64,
                  final_val_iou: f64|
     -> Result<TrainOutcome> {
        let ckpt = match best {
            Some(c) => c,
            None => snapshot(config, model, adam, 0, best_val),
        };
        ckpt.save(&ckpt_path)?;
        fs::write(&history_path, history).map_err(|e| Error::io(history_path.display().to_string(), e))?;
        Ok(TrainOutcome {
            checkpoint_path: ckpt_path.clone(),
            history_path: history_path.clone(),
            best_val_loss: best_val,
            best_epoch,
            final_val_iou,
        })
    };

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.lr0, config.t_max, config.eta_min);

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut order_rng = rng::stream(config.seed, "order", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = order_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut aug_rng = rng::stream(config.seed, "augment", epoch as u64);
        let mut scale_rng = rng::stream(config.seed, "scale", epoch as u64);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut samples: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if config.augment {
                        data::augment(&train_set[i], &mut aug_rng)
                    } else {
                        train_set[i].clone()
                    }
                })
                .collect();
            if config.multiscale {
                let scale = data::draw_scale(&mut scale_rng);
                samples = samples.iter().map(|s| data::rescale_sample(s, scale)).collect();
            }
            let refs: Vec<&Sample> = samples.iter().collect();
            let (images, masks) = data::stack(&refs)?;

            let (mut tape, total, param_vars) = batch_loss(&mut model, config, &images, &masks)?;
            let loss_v = tape.data(total)[0];
            if !loss_v.is_finite() {
                // keep the best state seen so far and report the divergence
                finish(best, &history, &model, &adam, best_val, best_epoch, final_val_iou)?;
                return Err(Error::Diverged {
                    message: format!("loss {loss_v} at epoch {epoch}"),
                });
            }
            tape.backward(total)?;
            let mut grads = gather_grads(&tape, &param_vars, &model.params);
            drop(tape);
            clip_global_norm(&mut grads, config.grad_clip);
            if let Err(e) = adam_step(&mut model.params, &grads, &mut adam, lr) {
                finish(best, &history, &model, &adam, best_val, best_epoch, final_val_iou)?;
                return Err(e);
            }
            epoch_loss += loss_v;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;

        let (mut val_loss, mut val_iou) = (0.0, 0.0);
        if val_set.is_empty() {
            val_loss = train_loss; // no validation data: fall back to train loss
        } else {
            for s in &val_set {
                let (l, i) = eval_sample(&model, config, s)?;
                val_loss += l;
                val_iou += i;
            }
            val_loss /= val_set.len() as f64;
            val_iou /= val_set.len() as f64;
        }
        final_val_iou = val_iou;

        history.push_str(&format!(
            "{epoch},{lr},{train_loss:.6},{val_loss:.6},{val_iou:.6}\n"
        ));

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch as u64;
            best = Some(snapshot(config, &model, &adam, epoch as u64, best_val));
        }
    }

    finish(best, &history, &model, &adam, best_val, best_epoch, final_val_iou)
}

/// Per-sample metrics of a checkpoint over one split, plus the field-wise
/// mean (absent when the split is empty).
pub fn evaluate(
    ckpt: &Checkpoint,
    data_root: &Path,
    split: &str,
) -> Result<(Vec<(String, MetricsReport)>, Option<MetricsReport>)> {
    let (config, model) = ckpt.restore_model()?;
    let samples = data::load_split(data_root, split)?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let mut tape = Tape::new();
        let (img, mask) = data::stack(&[s])?;
        let out = model.forward_eval(&mut tape, &img)?;
        let pred_bin = metrics::binarize(tape.data(out.pred), EVAL_THRESHOLD);
        let gt_bin = metrics::binarize(&mask.data, EVAL_THRESHOLD);
        let report = metrics::metrics(&pred_bin, &gt_bin, img.shape[2], img.shape[3])?;
        rows.push((s.id.clone(), report));
    }
    let _ = config;
    if rows.is_empty() {
        return Ok((rows, None));
    }
    let n = rows.len() as f64;
    let mut agg = MetricsReport { iou: 0.0, dice: 0.0, acc: 0.0, pre: 0.0, rec: 0.0, f1: 0.0, assd: 0.0 };
    for (_, r) in &rows {
        agg.iou += r.iou;
        agg.dice += r.dice;
        agg.acc += r.acc;
        agg.pre += r.pre;
        agg.rec += r.rec;
        agg.f1 += r.f1;
        agg.assd += r.assd;
    }
    agg.iou /= n;
    agg.dice /= n;
    agg.acc /= n;
    agg.pre /= n;
    agg.rec /= n;
    agg.f1 /= n;
    agg.assd /= n;
    Ok((rows, Some(agg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        let (lr0, eta) = (1e-4, 1e-7);
        assert_eq!(cosine_lr(0, lr0, 25, eta), lr0);
        // wrap: epoch == t_max restarts at lr0
        assert_eq!(cosine_lr(25, lr0, 25, eta), lr0);
        // just below t_max approaches eta_min
        let near_end = cosine_lr(24, lr0, 25, eta);
        assert!(near_end < lr0 * 0.01 && near_end >= eta);
        // midpoint: cos(pi/2) = 0 gives the average
        let mid = cosine_lr(25 / 2, lr0, 25, eta);
        let expect = eta + 0.5 * (lr0 - eta) * (1.0 + (PI * 12.0 / 25.0).cos());
        assert_eq!(mid, expect);
    }

    #[test]
    fn cosine_schedule_monotone_within_cycle() {
        let mut prev = f64::INFINITY;
        for e in 0..25 {
            let lr = cosine_lr(e, 1e-4, 25, 1e-7);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn scalar_params(x: f64) -> ParamSet {
        let mut s = ParamSet::default();
        s.push("x", Tensor::new(vec![1], vec![x]).with_grad());
        s
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = scalar_params(1.5);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[vec![0.0]], &mut state, 0.1).unwrap();
        assert_eq!(params.iter().next().unwrap().tensor.data[0], 1.5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[vec![1.0]], &mut state, 0.1).unwrap();
        let x = params.iter().next().unwrap().tensor.data[0];
        assert!((x + 0.1).abs() < 1e-8, "first step should be ~ -lr, got {x}");
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut params = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            let x = params.iter().next().unwrap().tensor.data[0];
            adam_step(&mut params, &[vec![2.0 * x]], &mut state, 0.1).unwrap();
        }
        let x = params.iter().next().unwrap().tensor.data[0];
        assert!(x.abs() < 0.05, "after 100 steps |x| = {}", x.abs());
    }

    #[test]
    fn adam_rejects_nan_gradient_with_name() {
        let mut params = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[vec![f64::NAN]], &mut state, 0.1).unwrap_err();
        assert!(err.to_string().contains('x'), "{err}");
    }

    #[test]
    fn clip_rescales_when_above() {
        let mut grads = vec![vec![3.0], vec![4.0]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        let after: f64 = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        // disabled clipping leaves gradients alone
        let mut grads = vec![vec![3.0], vec![4.0]];
        clip_global_norm(&mut grads, 0.0);
        assert_eq!(grads, vec![vec![3.0], vec![4.0]]);
    }

    #[test]
    fn checkpoint_bytes_roundtrip() {
        let ckpt = Checkpoint {
            config_text: "[loss]\nalpha = 0.5\n".into(),
            records: vec![("w".into(), vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])],
            adam: vec![
                ("adam.m.w".into(), vec![4], vec![0.0; 4]),
                ("adam.step".into(), vec![], vec![7.0]),
            ],
            epoch: 3,
            best_val_loss: 0.25,
        };
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes); // save -> load -> save identical

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        match Checkpoint::from_bytes(&corrupt) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected magic error, got {other:?}"),
        }
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::Format { .. })));
    }
}
