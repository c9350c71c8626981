//! Optimisation and evaluation: Adam with inverse-time learning-rate decay,
//! class-weighted binary cross-entropy, recording-level confusion counts and
//! the sensitivity/specificity/Macc summary.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode, Tensor};
use crate::data::{CycleRecord, Label};
use crate::model::{aggregate_recording, mix, rng_for, Network};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent with the same decayed rate.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub dropout: f64,
    pub l2_conv: f64,
    pub pool: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// `(w_normal, w_abnormal)`; derived from the training labels when absent.
    pub class_weights: Option<(f64, f64)>,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.0012843784,
            lr_decay: 0.0001132885,
            dropout: 0.5,
            l2_conv: 0.0486,
            pool: 2,
            batch_size: 64,
            epochs: 150,
            class_weights: None,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(name, format!("must be positive, got {v}")))
            }
        };
        positive("lr0", self.lr0)?;
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::arg("lr_decay", format!("must be non-negative, got {}", self.lr_decay)));
        }
        if self.batch_size < 2 {
            return Err(Error::arg("batch_size", "batchnorm needs batches of at least 2"));
        }
        if let Some((n, a)) = self.class_weights {
            positive("class_weights", n)?;
            positive("class_weights", a)?;
        }
        Ok(())
    }

    /// Learning rate of update `t` (1-based): `lr0 / (1 + decay·t)`.
    pub fn lr_at(&self, t: u64) -> f64 {
        self.lr0 / (1.0 + self.lr_decay * t as f64)
    }
}

/// First and second moment estimates, keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

/// One Adam update of `param` at step `t ≥ 1` with rate `lr`.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, m: &mut [f64], v: &mut [f64], t: u64, lr: f64) -> Result<()> {
    if t == 0 {
        return Err(Error::arg("t", "Adam steps are counted from 1"));
    }
    if param.shape() != grad.shape() || m.len() != param.len() || v.len() != param.len() {
        return Err(Error::shape(
            "adam_step",
            format!("param {:?}, grad {:?}, moments {}/{}", param.shape(), grad.shape(), m.len(), v.len()),
        ));
    }
    let c1 = 1.0 - ADAM_BETA1.powf(t as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(t as f64);
    for (((p, &g), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Balanced inverse-frequency weights `w_c = total / (2·count_c)`.
pub fn class_weights_from(labels: &[Label]) -> Result<(f64, f64)> {
    let abnormal = labels.iter().filter(|&&l| l == Label::Abnormal).count();
    let normal = labels.len() - abnormal;
    if normal == 0 || abnormal == 0 {
        return Err(Error::arg(
            "labels",
            format!("need both classes, got {normal} normal and {abnormal} abnormal"),
        ));
    }
    let total = labels.len() as f64;
    Ok((total / (2.0 * normal as f64), total / (2.0 * abnormal as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean weighted loss over the epoch's training cycles, penalty included.
    pub loss: f64,
    pub val_macc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation checkpoint, or the final one without validation data.
    pub net: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Trains `net` on `train`, selecting the epoch with the best validation
/// Macc when `val` is given (the first such epoch on ties).
pub fn train_fold(mut net: Network, train: &[CycleRecord], val: Option<&[CycleRecord]>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ncfg = net.config();
    if ncfg.dropout != cfg.dropout || ncfg.l2_conv != cfg.l2_conv || ncfg.pool != cfg.pool {
        return Err(Error::arg("cfg", "dropout, l2_conv and pool must match the network configuration"));
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            net,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    if train.is_empty() {
        return Err(Error::arg("train", "no training cycles"));
    }
    let labels: Vec<Label> = train.iter().map(|c| c.label).collect();
    let derived = class_weights_from(&labels)?;
    let (w_n, w_a) = cfg.class_weights.unwrap_or(derived);

    let inputs = cycle_rows(&net, train)?;
    let row_len = inputs[0].len();
    let mut batch_shape = net.prepare_input(&[&train[0].samples])?.shape().to_vec();

    let mut state = AdamState::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng_for(cfg.seed, "train.shuffle");
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (batch_index, idx) in order.chunks(cfg.batch_size).enumerate() {
            // Train-mode batchnorm is undefined for a single sample.
            if idx.len() < 2 {
                continue;
            }
            let step = net.step + 1;
            let lr = cfg.lr_at(step);
            batch_shape[0] = idx.len();
            let mut data = Vec::with_capacity(idx.len() * row_len);
            for &i in idx {
                data.extend_from_slice(&inputs[i]);
            }
            let targets: Vec<f64> = idx.iter().map(|&i| train[i].label.target()).collect();
            let weights: Vec<f64> = idx
                .iter()
                .map(|&i| if train[i].label == Label::Abnormal { w_a } else { w_n })
                .collect();

            let mut g = Graph::new();
            let mut stats = net.running_stats().clone();
            let trace = net.trace(&mut g, Tensor::new(batch_shape.clone(), data)?, Mode::Train, mix(cfg.seed, step), &mut stats)?;
            let mut loss = g.weighted_bce(trace.probs, &targets, &weights)?;
            if let Some(pen) = net.l2_penalty(&mut g, &trace)? {
                loss = g.add(loss, pen)?;
            }
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    lr,
                    batch: batch_index,
                });
            }
            let mut grads = g.backward(loss)?;
            for (name, id) in &trace.leaves {
                let Some(grad) = grads.take(*id) else { continue };
                let mut value = net.params()[name].value.clone();
                match cfg.optimizer {
                    Optimizer::Adam => {
                        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; value.len()]);
                        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; value.len()]);
                        adam_step(&mut value, &grad, m, v, step, lr)?;
                    }
                    Optimizer::Sgd => {
                        for (p, gr) in value.data_mut().iter_mut().zip(grad.data()) {
                            *p -= lr * gr;
                        }
                    }
                }
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        lr,
                        batch: batch_index,
                    });
                }
                net.set_param(name, value)?;
            }
            net.set_running_stats(stats)?;
            net.step = step;
            loss_sum += value * idx.len() as f64;
            seen += idx.len();
        }
        let val_macc = match val {
            Some(v) => Some(evaluate(&net, v)?.macc),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            lr: cfg.lr_at(net.step.max(1)),
            loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
            val_macc,
        });
        if let Some(m) = val_macc {
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, epoch, net.clone()));
            }
        }
    }
    Ok(match best {
        Some((_, epoch, best_net)) => TrainOutcome {
            net: best_net,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            net,
            history,
            best_epoch: None,
        },
    })
}

/// Each cycle prepared for the network's front-end, flattened.
fn cycle_rows(net: &Network, cycles: &[CycleRecord]) -> Result<Vec<Vec<f64>>> {
    cycles
        .iter()
        .map(|c| Ok(net.prepare_input(&[&c.samples])?.into_data()))
        .collect()
}

/// Confusion counts and rates for one validation set. Rates are percentages;
/// abnormal is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub macc: f64,
    /// Fraction of individual cycles classified correctly, in percent.
    pub cycle_accuracy: f64,
}

impl FoldMetrics {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Result<Self> {
        if tp + fn_ == 0 || tn + fp == 0 {
            return Err(Error::arg("counts", "both classes must be present to rate sensitivity and specificity"));
        }
        let sensitivity = 100.0 * tp as f64 / (tp + fn_) as f64;
        let specificity = 100.0 * tn as f64 / (tn + fp) as f64;
        Ok(Self {
            tp,
            tn,
            fp,
            fn_,
            sensitivity,
            specificity,
            macc: macc(sensitivity, specificity),
            cycle_accuracy: f64::NAN,
        })
    }
}

pub fn macc(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity + specificity) / 2.0
}

/// Half-up rounding to two decimals. A relative nudge absorbs binary
/// representation error, so `72.435` rounds to `72.44`.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    (scaled + 0.5 + 1e-9 * scaled.abs().max(1.0)).floor() / 100.0
}

/// Recording-level evaluation: cycle probabilities are averaged per recording
/// and rounded, then counted against the recording label.
pub fn evaluate(net: &Network, cycles: &[CycleRecord]) -> Result<FoldMetrics> {
    if cycles.is_empty() {
        return Err(Error::arg("cycles", "nothing to evaluate"));
    }
    let refs: Vec<&[f64]> = cycles.iter().map(|c| c.samples.as_slice()).collect();
    let probs = net.predict(&refs, 64)?;
    let mut by_recording: BTreeMap<&str, (Label, Vec<f64>)> = BTreeMap::new();
    let mut correct_cycles = 0usize;
    for (c, &p) in cycles.iter().zip(&probs) {
        let entry = by_recording.entry(&c.recording_id).or_insert_with(|| (c.label, Vec::new()));
        if entry.0 != c.label {
            return Err(Error::arg("cycles", format!("recording {} has cycles with both labels", c.recording_id)));
        }
        entry.1.push(p);
        correct_cycles += usize::from((p >= 0.5) == (c.label == Label::Abnormal));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (label, mut ps) in by_recording.into_values() {
        // Sorting makes the mean independent of cycle order.
        ps.sort_by(f64::total_cmp);
        let (_, predicted) = aggregate_recording(&ps)?;
        match (label, predicted) {
            (Label::Abnormal, 1) => tp += 1,
            (Label::Abnormal, _) => fn_ += 1,
            (Label::Normal, 0) => tn += 1,
            (Label::Normal, _) => fp += 1,
        }
    }
    let mut m = FoldMetrics::from_counts(tp, tn, fp, fn_)?;
    m.cycle_accuracy = 100.0 * correct_cycles as f64 / cycles.len() as f64;
    Ok(m)
}

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::arg("values", "no folds to summarise"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldMetrics>,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub macc: MeanStd,
}

pub fn cross_fold_summary(folds: Vec<FoldMetrics>) -> Result<EvalReport> {
    let col = |f: fn(&FoldMetrics) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
    Ok(EvalReport {
        sensitivity: col(|m| m.sensitivity)?,
        specificity: col(|m| m.specificity)?,
        macc: col(|m| m.macc)?,
        folds,
    })
}

impl EvalReport {
    /// CSV with one row per fold plus `mean` and `std` rows, two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,tp,tn,fp,fn,sensitivity,specificity,macc,cycle_accuracy\n");
        for (i, m) in self.folds.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{},{:.2},{:.2},{:.2},{:.2}\n",
                m.tp,
                m.tn,
                m.fp,
                m.fn_,
                round2(m.sensitivity),
                round2(m.specificity),
                round2(m.macc),
                round2(m.cycle_accuracy)
            ));
        }
        for (name, pick) in [("mean", (|s: &MeanStd| s.mean) as fn(&MeanStd) -> f64), ("std", |s: &MeanStd| s.std)] {
            out.push_str(&format!(
                "{name},,,,,{:.2},{:.2},{:.2},\n",
                round2(pick(&self.sensitivity)),
                round2(pick(&self.specificity)),
                round2(pick(&self.macc))
            ));
        }
        out
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,loss,val_macc\n");
    for h in history {
        let v = h.val_macc.map(|m| format!("{m:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{:.10e},{:.10e},{v}\n", h.epoch, h.lr, h.loss));
    }
    out
}

/// Fraction (percent) of cycles whose rounded probability matches the label.
pub fn cycle_accuracy(net: &Network, cycles: &[CycleRecord]) -> Result<f64> {
    let refs: Vec<&[f64]> = cycles.iter().map(|c| c.samples.as_slice()).collect();
    let probs = net.predict(&refs, 64)?;
    let correct = cycles.iter().zip(&probs).filter(|(c, &p)| (p >= 0.5) == (c.label == Label::Abnormal)).count();
    Ok(100.0 * correct as f64 / cycles.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitKind;
    use crate::model::{Frontend, NetworkConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_are_table_values() {
        let c = TrainConfig::default();
        assert_eq!(c.lr0, 0.0012843784);
        assert_eq!(c.lr_decay, 0.0001132885);
        assert_eq!((c.dropout, c.l2_conv, c.pool), (0.5, 0.0486, 2));
    }

    #[test]
    fn decayed_rate_at_ten_thousand_steps() {
        let c = TrainConfig::default();
        let ratio = c.lr_at(10_000) / c.lr0;
        assert!((ratio - 1.0 / (1.0 + 1.132885)).abs() < 1e-12);
        assert!((ratio - 0.4689).abs() < 1e-4);
    }

    #[test]
    fn adam_first_step_is_normalised() {
        // Hand-stepped: m = 0.1·g, v = 0.001·g², m̂ = g, v̂ = g², Δ = lr·g/(|g| + ε).
        for g in [0.3, -2.0, 1e-3] {
            let mut p = Tensor::scalar(1.0);
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            adam_step(&mut p, &Tensor::scalar(g), &mut m, &mut v, 1, 0.01).unwrap();
            let want = 1.0 - 0.01 * g / (g.abs() + ADAM_EPS);
            assert!((p.item() - want).abs() < 1e-15);
            assert!((m[0] - 0.1 * g).abs() < 1e-15);
            assert!((v[0] - 0.001 * g * g).abs() <= 1e-15 * g * g);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut p = Tensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        let (mut m, mut v) = (vec![0.5, -0.5], vec![0.2, 0.3]);
        adam_step(&mut p, &Tensor::zeros(&[2]), &mut m, &mut v, 5, 0.1).unwrap();
        assert_eq!(m, vec![0.45, -0.45]);
        assert!((v[0] - 0.1998).abs() < 1e-15 && (v[1] - 0.2997).abs() < 1e-15);
        // Moments alone still move the parameter; the gradient contributes nothing.
        let mut q = Tensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        let (mut m0, mut v0) = (vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut q, &Tensor::zeros(&[2]), &mut m0, &mut v0, 1, 0.1).unwrap();
        assert_eq!(q.data(), &[1.0, -1.0]);
        assert!(adam_step(&mut q, &Tensor::zeros(&[3]), &mut m0, &mut v0, 1, 0.1).is_err());
        assert!(adam_step(&mut q, &Tensor::zeros(&[2]), &mut m0, &mut v0, 0, 0.1).is_err());
    }

    #[test]
    fn class_weight_examples() {
        let mut labels = vec![Label::Normal; 79];
        labels.extend([Label::Abnormal; 21]);
        let (n, a) = class_weights_from(&labels).unwrap();
        assert!((n - 100.0 / 158.0).abs() < 1e-12 && (n - 0.633).abs() < 1e-3);
        assert!((a - 100.0 / 42.0).abs() < 1e-12 && (a - 2.381).abs() < 1e-3);
        let even: Vec<Label> = (0..10).map(|i| if i % 2 == 0 { Label::Normal } else { Label::Abnormal }).collect();
        assert_eq!(class_weights_from(&even).unwrap(), (1.0, 1.0));
        assert!(class_weights_from(&[Label::Normal; 4]).is_err());
    }

    #[test]
    fn metric_arithmetic() {
        assert_eq!(round2(macc(63.76, 81.11)), 72.44);
        assert_eq!(round2(macc(86.47, 86.47)), 86.47);
        assert_eq!(round2(macc(91.57, 57.14)), 74.36);
        let m = FoldMetrics::from_counts(10, 10, 0, 0).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.macc), (100.0, 100.0, 100.0));
        let m = FoldMetrics::from_counts(3, 8, 2, 1).unwrap();
        assert!((m.sensitivity - 75.0).abs() < 1e-12 && (m.specificity - 80.0).abs() < 1e-12);
        assert!(FoldMetrics::from_counts(0, 5, 0, 0).is_err());
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = mean_std(&[72.44, 79.11, 78.82, 79.86]).unwrap();
        assert_eq!(round2(s.mean), 77.56);
        assert!((s.std - 3.44).abs() < 0.005);
        let s = mean_std(&[77.05, 91.10, 91.35, 88.89]).unwrap();
        assert_eq!(round2(s.mean), 87.10);
        assert_eq!(round2(s.std), 6.79);
        assert_eq!(mean_std(&[5.0; 4]).unwrap().std, 0.0);
    }

    /// Two separable classes: low-frequency bursts vs added high-frequency tone.
    fn toy_cycles(n: usize, len: usize, seed: u64) -> Vec<CycleRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Normal } else { Label::Abnormal };
                let f = if label == Label::Abnormal { 250.0 } else { 40.0 };
                let phase = rng.random_range(0.0..6.28);
                let samples = (0..len)
                    .map(|t| (2.0 * std::f64::consts::PI * f * t as f64 / 1000.0 + phase).sin() + rng.random_range(-0.2..0.2))
                    .collect();
                CycleRecord {
                    recording_id: format!("r{i}"),
                    label,
                    start: 0,
                    valid_len: len,
                    samples,
                }
            })
            .collect()
    }

    fn toy_net(seed: u64) -> Network {
        Network::build(NetworkConfig {
            input_len: 200,
            ..NetworkConfig::tconv(Frontend::TconvLp, InitKind::FirBank, true, seed)
        })
        .unwrap()
    }

    #[test]
    fn small_set_can_be_overfit() {
        let cycles = toy_cycles(64, 200, 1);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train_fold(toy_net(3), &cycles, None, &cfg).unwrap();
        assert_eq!(out.history.len(), 50);
        let acc = cycle_accuracy(&out.net, &cycles).unwrap();
        assert!(acc >= 95.0, "{acc}");
        assert!(out.history.last().unwrap().loss < out.history[0].loss);
    }

    #[test]
    fn training_is_deterministic() {
        let cycles = toy_cycles(16, 200, 4);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_fold(toy_net(6), &cycles, Some(&cycles), &cfg).unwrap();
        let b = train_fold(toy_net(6), &cycles, Some(&cycles), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.net.to_bytes().unwrap(), b.net.to_bytes().unwrap());
        assert!(a.best_epoch.is_some());
    }

    #[test]
    fn zero_epochs_leave_the_net_alone() {
        let net = toy_net(7);
        let out = train_fold(
            net.clone(),
            &[],
            None,
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.net, net);
        assert!(out.history.is_empty());
    }

    #[test]
    fn mismatched_or_degenerate_inputs_are_rejected() {
        let cycles = toy_cycles(8, 200, 8);
        let cfg = TrainConfig {
            epochs: 1,
            dropout: 0.3,
            ..TrainConfig::default()
        };
        assert!(train_fold(toy_net(1), &cycles, None, &cfg).is_err());
        let normals: Vec<CycleRecord> = cycles.iter().filter(|c| c.label == Label::Normal).cloned().collect();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train_fold(toy_net(1), &normals, None, &cfg).is_err());
    }

    #[test]
    fn sgd_step_descends_on_a_fixed_batch() {
        let cycles = toy_cycles(8, 200, 9);
        let net = Network::build(NetworkConfig {
            dropout: 0.0,
            ..toy_net(10).config().clone()
        })
        .unwrap();
        let loss_of = |net: &Network| {
            let refs: Vec<&[f64]> = cycles.iter().map(|c| c.samples.as_slice()).collect();
            let mut g = Graph::new();
            let mut stats = net.running_stats().clone();
            let t = net.trace(&mut g, net.prepare_input(&refs).unwrap(), Mode::Train, 0, &mut stats).unwrap();
            let targets: Vec<f64> = cycles.iter().map(|c| c.label.target()).collect();
            let l = g.weighted_bce(t.probs, &targets, &[1.0; 8]).unwrap();
            let l = match net.l2_penalty(&mut g, &t).unwrap() {
                Some(p) => g.add(l, p).unwrap(),
                None => l,
            };
            g.value(l).item()
        };
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            lr0: 1e-6,
            lr_decay: 0.0,
            dropout: 0.0,
            optimizer: Optimizer::Sgd,
            class_weights: Some((1.0, 1.0)),
            ..TrainConfig::default()
        };
        let before = loss_of(&net);
        let after = loss_of(&train_fold(net, &cycles, None, &cfg).unwrap().net);
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn evaluation_ignores_order() {
        let cycles = toy_cycles(12, 200, 11);
        // Group consecutive pairs into 6 recordings of mixed cycles.
        let grouped: Vec<CycleRecord> = cycles
            .iter()
            .enumerate()
            .map(|(i, c)| CycleRecord {
                recording_id: format!("rec{}", i % 6),
                label: if (i % 6) % 2 == 0 { Label::Normal } else { Label::Abnormal },
                ..c.clone()
            })
            .collect();
        let net = toy_net(12);
        let a = evaluate(&net, &grouped).unwrap();
        let mut rev = grouped.clone();
        rev.reverse();
        let b = evaluate(&net, &rev).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tp + a.tn + a.fp + a.fn_, 6);
    }

    #[test]
    fn perfect_classifier_scores_hundred() {
        let cycles = toy_cycles(64, 200, 1);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train_fold(toy_net(3), &cycles, None, &cfg).unwrap();
        let m = evaluate(&out.net, &cycles).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0));
        assert_eq!((m.sensitivity, m.specificity, m.macc), (100.0, 100.0, 100.0));
    }
}
