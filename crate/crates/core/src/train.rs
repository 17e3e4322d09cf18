//! Losses, the relative test error, ADAM and the mini-batch training loop.

use crate::error::{invalid, Error, Result};
use crate::grad::{coeff_loss_and_grad, Differentiable};
use crate::pca::PcaBasis;
use crate::pdedata::{gather, Dataset};
use crate::rng::seeded;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(1/N)·Σ‖pred − target‖²`
    AbsoluteMse,
    /// `(1/N)·Σ‖pred − target‖² / ‖target‖²`
    Relative,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::AbsoluteMse => "absolute_mse",
            LossKind::Relative => "relative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "absolute_mse" => Some(LossKind::AbsoluteMse),
            "relative" => Some(LossKind::Relative),
            _ => None,
        }
    }
}

/// Per-sample pieces of a loss over the leading axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    /// Weighted squared error of every sample.
    pub per_sample: Vec<f64>,
    /// `1` for the absolute loss, `1/‖target‖²` for the relative one.
    pub weights: Vec<f64>,
}

fn check_pair(preds: &Tensor, targets: &Tensor, op: &'static str) -> Result<usize> {
    if preds.shape() != targets.shape() || preds.shape().len() < 2 {
        return Err(Error::ShapeMismatch {
            op,
            left: preds.shape().to_vec(),
            right: targets.shape().to_vec(),
        });
    }
    Ok(preds.shape()[0])
}

pub fn loss_terms(preds: &Tensor, targets: &Tensor, kind: LossKind) -> Result<LossTerms> {
    let n = check_pair(preds, targets, "loss")?;
    let per = preds.len() / n;
    let mut per_sample = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, (p, t)) in preds.data().chunks(per).zip(targets.data().chunks(per)).enumerate() {
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let w = match kind {
            LossKind::AbsoluteMse => 1.0,
            LossKind::Relative => {
                let tn: f64 = t.iter().map(|v| v * v).sum();
                if tn == 0.0 {
                    return Err(Error::ZeroNormTarget { index: i });
                }
                1.0 / tn
            }
        };
        per_sample.push(w * sq);
        weights.push(w);
    }
    let loss = per_sample.iter().sum::<f64>() / n as f64;
    Ok(LossTerms {
        loss,
        per_sample,
        weights,
    })
}

/// Empirical risk over samples stacked on the leading axis.
pub fn empirical_loss(preds: &Tensor, targets: &Tensor, kind: LossKind) -> Result<f64> {
    Ok(loss_terms(preds, targets, kind)?.loss)
}

/// `‖outputᵢ − targetᵢ‖ / ‖targetᵢ‖` for every sample.
pub fn relative_errors(outputs: &Tensor, targets: &Tensor) -> Result<Vec<f64>> {
    let n = check_pair(outputs, targets, "relative error")?;
    let per = outputs.len() / n;
    outputs
        .data()
        .chunks(per)
        .zip(targets.data().chunks(per))
        .enumerate()
        .map(|(i, (o, t))| {
            let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tn == 0.0 {
                return Err(Error::ZeroNormTarget { index: i });
            }
            let en = o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok(en / tn)
        })
        .collect()
}

/// Mean of [`relative_errors`].
pub fn relative_test_error(outputs: &Tensor, targets: &Tensor) -> Result<f64> {
    let e = relative_errors(outputs, targets)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[&Tensor], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            v: zeros.clone(),
            m: zeros,
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected ADAM update of every parameter array in place.
pub fn adam_step(params: Vec<&mut Tensor>, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(invalid(format!(
            "ADAM got {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter array {i}")));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((pj, &gj), mj), vj) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mj = b1 * *mj + (1.0 - b1) * gj;
            *vj = b2 * *vj + (1.0 - b2) * gj * gj;
            *pj -= state.lr * (*mj / c1) / ((*vj / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub loss: LossKind,
    /// Learning-rate multiplier applied every `decay_every` epochs.
    pub decay: f64,
    /// `0` means `⌈epochs/4⌉`.
    pub decay_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            shuffle: true,
            loss: LossKind::AbsoluteMse,
            decay: 0.5,
            decay_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("ADAM betas must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || !(0.0..=1.0).contains(&self.decay) || self.decay == 0.0 {
            return Err(invalid("eps must be positive and decay in (0, 1]"));
        }
        Ok(())
    }

    /// Learning rate during epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let every = if self.decay_every == 0 {
            self.epochs.div_ceil(4)
        } else {
            self.decay_every
        };
        self.lr * self.decay.powi((epoch / every.max(1)) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Training loss of the parameters seen during the epoch, averaged over all samples.
    pub train_loss: f64,
    /// Relative error on the test split after the epoch, when one is given.
    pub test_rel_error: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub final_model: M,
    /// Lowest test error, or lowest training loss when there is no test split.
    pub best_model: M,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Evaluates a model on every sample of a dataset, in batches, on mesh values.
pub fn predict<M: Differentiable>(model: &M, basis_u: &PcaBasis, basis_v: &PcaBasis, data: &Dataset) -> Result<Tensor> {
    let (d_in, _) = model.input_dims();
    let (d_out, _) = model.output_dims();
    if data.d_in() != d_in || data.d_out() != d_out || data.n_pts_u() != basis_u.n_points() {
        return Err(Error::ShapeMismatch {
            op: "predict",
            left: data.inputs.shape().to_vec(),
            right: vec![data.len(), d_in, basis_u.n_points()],
        });
    }
    let alpha = basis_u.encode(&data.input_rows())?;
    let beta = model.forward(&alpha, None)?;
    basis_v.decode(&beta)?.reshape(&[data.len(), d_out, basis_v.n_points()])
}

fn check_data<M: Differentiable>(model: &M, basis_u: &PcaBasis, basis_v: &PcaBasis, data: &Dataset) -> Result<()> {
    let (d_in, p_u) = model.input_dims();
    let (d_out, p_v) = model.output_dims();
    let ok = data.d_in() == d_in
        && data.d_out() == d_out
        && data.n_pts_u() == basis_u.n_points()
        && data.n_pts_v() == basis_v.n_points()
        && basis_u.n_components() == p_u
        && basis_v.n_components() == p_v;
    if !ok {
        return Err(Error::ShapeMismatch {
            op: "training data",
            left: vec![data.d_in(), data.n_pts_u(), data.d_out(), data.n_pts_v()],
            right: vec![d_in, basis_u.n_points(), d_out, basis_v.n_points()],
        });
    }
    Ok(())
}

/// Minimizes the empirical risk with ADAM over shuffled mini-batches.
///
/// Input coefficients are computed once. Each epoch records the mean
/// per-sample training loss (summed in sample order, so the value does not
/// depend on the batch layout) and, when `test` is given, the relative test
/// error after the epoch.
pub fn train_loop<M: Differentiable>(
    model: M,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    check_data(&model, basis_u, basis_v, train)?;
    if let Some(t) = test {
        check_data(&model, basis_u, basis_v, t)?;
    }
    let n = train.len();
    let (d_in, p_u) = model.input_dims();
    let alpha_all = basis_u.encode(&train.input_rows())?.reshape(&[n, d_in, p_u])?;

    let mut model = model;
    let mut adam = AdamState::new(&model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, M)> = None;
    let mut sample_loss = vec![0.0; n];

    for epoch in 0..cfg.epochs {
        adam.lr = cfg.lr_at(epoch);
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let alpha = gather(&alpha_all, idx).reshape(&[idx.len() * d_in, p_u])?;
            let targets = gather(&train.outputs, idx);
            let (terms, grads) = coeff_loss_and_grad(&model, &alpha, basis_v, &targets, cfg.loss)?;
            if !terms.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: bi });
            }
            for (&i, v) in idx.iter().zip(terms.per_sample) {
                sample_loss[i] = v;
            }
            adam_step(model.params_mut(), &grads, &mut adam).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { epoch: epoch + 1, batch: bi },
                other => other,
            })?;
        }
        let train_loss = sample_loss.iter().sum::<f64>() / n as f64;
        let test_rel_error = match test {
            Some(t) => Some(relative_test_error(&predict(&model, basis_u, basis_v, t)?, &t.outputs)?),
            None => None,
        };
        let score = test_rel_error.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch + 1, model.clone()));
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            test_rel_error,
            lr: adam.lr,
        });
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
        history,
    })
}
