//! Deterministic mini-batch training with Adam.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::model::{predict_from_logits, ModelGraph};
use crate::tensor::{loss, relative_error, ClassMap, LossKind, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives the train/validation split and the per-epoch shuffles.
    pub seed: u64,
    /// `None` picks sigmoid-bce for one output channel, softmax-ce otherwise.
    pub loss: Option<LossKind>,
    /// Global L2 norm limit on the gradient; off when `None`.
    pub grad_clip: Option<f64>,
    pub validation_fraction: f64,
    /// Training samples used to calibrate convolution scales before the
    /// first step (see [`ModelGraph::calibrate_convolutions`]); 0 disables.
    pub calibration_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 4,
            epochs: 10,
            seed: 0,
            loss: None,
            grad_clip: None,
            validation_fraction: 0.2,
            calibration_samples: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::config("grad_clip", "must be positive"));
        }
        Ok(())
    }

    fn loss_for<T: Real>(&self, model: &ModelGraph<T>) -> LossKind {
        self.loss
            .unwrap_or_else(|| LossKind::for_classes(model.config().num_classes))
    }
}

/// Adam moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T: Real> {
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> OptimState<T> {
    pub fn new(model: &ModelGraph<T>) -> Self {
        Self::for_shapes(model.params().iter().map(|(_, t)| t.shape().to_vec()))
    }

    pub fn for_shapes(shapes: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let zeros: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        OptimState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_update<T: Real>(
    params: Vec<&mut Tensor<T>>,
    grads: &[Tensor<T>],
    state: &mut OptimState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || grads.len() != state.first.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(cfg.beta1.powi(t));
    let c2 = T::one() - T::lit(cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(cfg.learning_rate), T::lit(cfg.epsilon));
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        p.expect_same_shape(g, "adam")?;
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = b1 * md[i] + (T::one() - b1) * gi;
            vd[i] = b2 * vd[i] + (T::one() - b2) * gi * gi;
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Images `T×N×C×H×W` and labels `N×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Real> {
    pub images: Tensor<T>,
    pub labels: ClassMap,
}

impl<T: Real> Batch<T> {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let shape = first.images.shape().to_vec();
        let [phases, bands, h, w] = [shape[0], shape[1], shape[2], shape[3]];
        let frame = bands * h * w;
        let n = samples.len();
        let mut data = vec![T::zero(); phases * n * frame];
        for (b, s) in samples.iter().enumerate() {
            if s.images.shape() != shape.as_slice() {
                return Err(Error::shape("batch", &shape, s.images.shape()));
            }
            for t in 0..phases {
                let src = &s.images.data()[t * frame..(t + 1) * frame];
                let dst = &mut data[(t * n + b) * frame..(t * n + b + 1) * frame];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = T::lit(f64::from(v));
                }
            }
        }
        let labels = ClassMap::concat(&samples.iter().map(|s| s.label.clone()).collect::<Vec<_>>())?;
        Ok(Batch {
            images: Tensor::new([phases, n, bands, h, w], data)?,
            labels,
        })
    }
}

/// Loss and parameter gradients of one batch, without updating anything.
pub fn loss_and_gradients<T: Real>(
    model: &ModelGraph<T>,
    batch: &Batch<T>,
    kind: LossKind,
) -> Result<(f64, Vec<Tensor<T>>)> {
    let (logits, trace) = model.forward(&batch.images)?;
    let (value, grad) = loss(kind, &logits, &batch.labels)?;
    let value = value.as_f64();
    if !value.is_finite() {
        return Err(Error::Divergence(value));
    }
    let grads = model.backward(trace, &grad)?;
    Ok((value, grads.tensors))
}

fn clip<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / norm);
        for g in grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}

/// Forward, loss, backward and one Adam update. Returns the pre-update loss.
pub fn train_step<T: Real>(
    model: &mut ModelGraph<T>,
    batch: &Batch<T>,
    optim: &mut OptimState<T>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (value, mut grads) = loss_and_gradients(model, batch, cfg.loss_for(model))?;
    if let Some(c) = cfg.grad_clip {
        clip(&mut grads, c);
    }
    adam_update(model.params_mut(), &grads, optim, cfg)?;
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation: Option<MetricsReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Writes one JSON object per step.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
        }
        Ok(())
    }
}

/// Seeded shuffle split into `(train, validation)` index lists.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = if n > 1 {
        ((n as f64 * validation_fraction).round() as usize).min(n - 1)
    } else {
        0
    };
    let train = idx.split_off(val);
    (train, idx)
}

/// Number of classes predictions and labels range over.
pub fn label_classes<T: Real>(model: &ModelGraph<T>) -> usize {
    model.config().num_classes.max(2)
}

/// Confusion matrix of `model` over `samples`, evaluated `batch_size` at a time.
pub fn evaluate<T: Real>(model: &ModelGraph<T>, samples: &[&Sample], batch_size: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(label_classes(model));
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = Batch::<T>::from_samples(chunk)?;
        let (logits, _) = model.forward(&batch.images)?;
        cm.accumulate(&predict_from_logits(&logits)?, &batch.labels)?;
    }
    Ok(cm)
}

pub fn fit<T: Real>(model: &mut ModelGraph<T>, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainLog> {
    fit_with(model, dataset, cfg, |_| {})
}

/// [`fit`] with a callback invoked after every step.
pub fn fit_with<T: Real>(
    model: &mut ModelGraph<T>,
    dataset: &[Sample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("fit: empty dataset".into()));
    }
    let (mut train, val) = split_indices(dataset.len(), cfg.validation_fraction, cfg.seed);
    let val_samples: Vec<&Sample> = val.iter().map(|&i| &dataset[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    if cfg.epochs > 0 && cfg.calibration_samples > 0 {
        let refs: Vec<&Sample> = train.iter().take(cfg.calibration_samples).map(|&i| &dataset[i]).collect();
        model.calibrate_convolutions(&Batch::<T>::from_samples(&refs)?.images, 1.0)?;
    }
    let mut optim = OptimState::new(model);
    let mut log = TrainLog::default();
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in train.chunks(cfg.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let batch = Batch::<T>::from_samples(&refs)?;
            let value = train_step(model, &batch, &mut optim, cfg)?;
            epoch_loss += value;
            batches += 1;
            let record = StepRecord {
                epoch,
                step: optim.step,
                loss: value,
                lr: cfg.learning_rate,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            on_step(&record);
            log.steps.push(record);
        }
        let validation = if val_samples.is_empty() {
            None
        } else {
            Some(evaluate(model, &val_samples, cfg.batch_size)?.report()?)
        };
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / batches.max(1) as f64,
            validation,
        });
    }
    Ok(log)
}

/// Repeated [`train_step`] on one fixed batch; returns the loss of every
/// step (the last entry is the final pre-update loss).
pub fn overfit_single_batch<T: Real>(
    model: &mut ModelGraph<T>,
    batch: &Batch<T>,
    steps: usize,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut optim = OptimState::new(model);
    (0..steps)
        .map(|_| train_step(model, batch, &mut optim, cfg))
        .collect()
}

/// Means of consecutive non-overlapping windows of `window` values.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// Scaled synthetic benchmark: train on scenes `0..train_samples`, score on
/// the disjoint scenes `train_samples..train_samples + test_samples`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub arch: crate::model::ArchConfig,
    pub scene: crate::data::SceneSpec,
    pub train: TrainConfig,
    pub train_samples: usize,
    pub test_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub report: MetricsReport,
    pub final_epoch_loss: f64,
    pub wall_seconds: f64,
}

/// Runs the benchmark protocol in precision `T`.
pub fn run_benchmark<T: Real>(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let start = Instant::now();
    let train_set = crate::data::generate_dataset(&cfg.scene, cfg.train_samples)?;
    let test_set = (cfg.train_samples..cfg.train_samples + cfg.test_samples)
        .map(|i| crate::data::generate_scene(&cfg.scene, i).map(|s| s.sample))
        .collect::<Result<Vec<_>>>()?;
    let mut model = ModelGraph::<T>::build(&cfg.arch)?;
    let log = fit(&mut model, &train_set, &cfg.train)?;
    let refs: Vec<&Sample> = test_set.iter().collect();
    let report = evaluate(&model, &refs, cfg.train.batch_size)?.report()?;
    Ok(BenchmarkResult {
        report,
        final_epoch_loss: log.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Worst finite-difference disagreement over the parameters of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    /// Directional derivatives compared.
    pub probes: usize,
    /// Probes discarded because `θ ± h·v` crossed a ReLU or max-pool kink.
    pub discarded: usize,
    pub max_rel_error: f64,
}

/// Central-difference check of every parameter gradient of `model`, grouped
/// by layer.
///
/// The objective is `⟨logits, R⟩` for a seeded Gaussian `R`: backward is
/// linear in the logit gradient, so this exercises it fully while keeping
/// gradients well above the round-off floor of a mean-reduced loss.
///
/// Each tensor is probed along the analytic gradient itself and along
/// `directions` seeded Gaussian directions `v` of unit RMS, comparing `g·v`
/// with `(L(θ + h·v) − L(θ − h·v)) / 2h`. Single coordinates are not probed:
/// in a deep network many of them carry gradients near `ulp(L)/h`, where the
/// difference quotient is pure round-off. A probe whose endpoints land on a
/// different ReLU / max-pool pattern than `θ` is not differentiable along
/// the segment; it is discarded and redrawn (at most `4·directions` times).
pub fn gradcheck_model(
    model: &mut ModelGraph<f64>,
    images: &Tensor<f64>,
    step: f64,
    directions: usize,
    seed: u64,
) -> Result<Vec<LayerCheck>> {
    if !(1e-6..=1e-4).contains(&step) {
        return Err(Error::InvalidArgument(format!("gradcheck step {step} outside [1e-6, 1e-4]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (logits, trace) = model.forward(images)?;
    let base_signature = trace.kink_signature();
    let probe = Tensor::from_fn(logits.shape(), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let analytic = model.backward(trace, &probe)?.tensors;
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let eval = |m: &ModelGraph<f64>| -> Result<(f64, bool)> {
        let (logits, trace) = m.forward(images)?;
        let v = logits.dot(&probe)?;
        if !v.is_finite() {
            return Err(Error::Divergence(v));
        }
        Ok((v, trace.kink_signature() == base_signature))
    };
    let mut rows: Vec<LayerCheck> = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let g = &analytic[ti];
        let orig = model.params_mut()[ti].clone();
        let norm = g.dot(g)?.sqrt();
        let rms = |v: Tensor<f64>| {
            let r = (v.dot(&v).unwrap_or(0.0) / v.len() as f64).sqrt();
            if r > 0.0 {
                v.scale(1.0 / r)
            } else {
                v
            }
        };
        let mut pending: Vec<Tensor<f64>> = Vec::new();
        if norm > 0.0 {
            pending.push(rms(g.clone()));
        }
        let (mut probes, mut discarded, mut redraws) = (0, 0, 0);
        let mut wanted = directions;
        let mut worst = 0f64;
        loop {
            let v = match pending.pop() {
                Some(v) => v,
                None if wanted > 0 && redraws <= 4 * directions => {
                    wanted -= 1;
                    rms(Tensor::from_fn(g.shape(), |_| rng.sample::<f64, _>(rand_distr::StandardNormal)))
                }
                None => break,
            };
            *model.params_mut()[ti] = orig.zip_map(&v, "gradcheck", |p, d| p + step * d)?;
            let (plus, same_plus) = eval(model)?;
            *model.params_mut()[ti] = orig.zip_map(&v, "gradcheck", |p, d| p - step * d)?;
            let (minus, same_minus) = eval(model)?;
            if !(same_plus && same_minus) {
                discarded += 1;
                redraws += 1;
                wanted += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(g.dot(&v)?, numeric));
            probes += 1;
        }
        *model.params_mut()[ti] = orig;
        let layer = name.rsplit_once('.').map_or(name.as_str(), |(l, _)| l).to_string();
        match rows.last_mut() {
            Some(r) if r.layer == layer => {
                r.probes += probes;
                r.discarded += discarded;
                r.max_rel_error = r.max_rel_error.max(worst);
            }
            _ => rows.push(LayerCheck {
                layer,
                probes,
                discarded,
                max_rel_error: worst,
            }),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            ..Default::default()
        }
    }

    #[test]
    fn first_adam_step_is_lr_sized() {
        let mut p = Tensor::<f64>::scalar(0.0);
        let mut st = OptimState::for_shapes([vec![1]]);
        adam_update(vec![&mut p], &[Tensor::scalar(1.0)], &mut st, &scalar_cfg(0.1)).unwrap();
        // m̂ = g, v̂ = g², so the step is −lr·g/(|g| + ε)
        assert!((p.data()[0] + 0.1).abs() < 1e-8);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn repeated_gradient_does_not_grow_step() {
        let mut p = Tensor::<f64>::scalar(0.0);
        let mut st = OptimState::for_shapes([vec![1]]);
        let cfg = scalar_cfg(0.1);
        adam_update(vec![&mut p], &[Tensor::scalar(1.0)], &mut st, &cfg).unwrap();
        let first = p.data()[0];
        adam_update(vec![&mut p], &[Tensor::scalar(1.0)], &mut st, &cfg).unwrap();
        let second = p.data()[0] - first;
        assert!(second.abs() <= first.abs() * (1.0 + 1e-12));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Tensor::<f32>::from_fn([3], |i| i as f32 * 0.37 - 0.2);
        let before = p.clone();
        let mut st = OptimState::for_shapes([vec![3]]);
        adam_update(vec![&mut p], &[Tensor::full([3], 0.5)], &mut st, &scalar_cfg(0.0)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split_indices(10, 0.2, 3);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(split_indices(10, 0.2, 3), (a.clone(), b.clone()));
        let mut all: Vec<_> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(1, 0.2, 0).1.len(), 0);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn smoothing_windows() {
        assert_eq!(smoothed(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0]);
    }
}
