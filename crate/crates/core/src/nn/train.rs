use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{argmax_rows, backward, cross_entropy_loss, forward, mse_loss};
use super::spec::{LayerParams, LayerSpec, NetworkSpec, Params, Shape};
use crate::datasets::Dataset;
use crate::entropy::square_part;
use crate::error::{dim_err, Error, Result};
use crate::loss::{conv_term, conv_term_grad, dense_term, dense_term_grad_factor, LambdaSchedule, LossForm};
use crate::stats::Direction;
use crate::tensor::{Lu, Matrix};

/// Rows evaluated per forward pass when scoring a whole split.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    Mse,
    CrossEntropy,
}

/// Which dense / conv layers carry an entropy term, as 0-based ordinals
/// among layers of that kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyLayers {
    pub dense: BTreeSet<usize>,
    pub conv: BTreeSet<usize>,
}

impl EntropyLayers {
    pub fn first_dense() -> Self {
        Self {
            dense: [0].into(),
            conv: BTreeSet::new(),
        }
    }

    pub fn first_conv() -> Self {
        Self {
            dense: BTreeSet::new(),
            conv: [0].into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_loss: BaseLoss,
    pub schedule: LambdaSchedule,
    pub form: LossForm,
    pub entropy_layers: EntropyLayers,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub replications: usize,
}

impl TrainConfig {
    /// MSE autoencoder defaults, entropy term on the first weight matrix.
    pub fn autoencoder(lambda: f64) -> Self {
        Self {
            base_loss: BaseLoss::Mse,
            schedule: LambdaSchedule::uniform(lambda, 0.0),
            form: LossForm::default(),
            entropy_layers: EntropyLayers::first_dense(),
            optimizer: AdamConfig::default(),
            batch_size: 128,
            max_epochs: 100,
            patience: 7,
            min_delta: 1e-5,
            seed: 0,
            replications: 1,
        }
    }

    /// Cross-entropy classifier defaults, entropy term on the first conv layer.
    pub fn cnn(lambda: f64) -> Self {
        Self {
            base_loss: BaseLoss::CrossEntropy,
            schedule: LambdaSchedule::uniform(0.0, lambda),
            entropy_layers: EntropyLayers::first_conv(),
            min_delta: 0.0,
            ..Self::autoencoder(0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::InvalidArgument("patience must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidArgument("max_epochs must be >= 1".into()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::InvalidArgument("min_delta must be >= 0".into()));
        }
        self.form.validate()?;
        self.optimizer.validate()
    }

    pub fn direction(&self) -> Direction {
        match self.base_loss {
            BaseLoss::Mse => Direction::LowerIsBetter,
            BaseLoss::CrossEntropy => Direction::HigherIsBetter,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// mean base loss over each epoch's batches
    pub train_loss: Vec<f64>,
    /// per-epoch train MSE (autoencoder) or running train accuracy (classifier)
    pub train_metric: Vec<f64>,
    /// per-epoch validation MSE or accuracy
    pub val_metric: Vec<f64>,
    pub stopping_epoch: usize,
    pub params: Params,
    pub wall_seconds: f64,
    pub seed: u64,
}

impl RunResult {
    pub fn final_val(&self) -> f64 {
        *self.val_metric.last().expect("at least one epoch")
    }

    pub fn final_train(&self) -> f64 {
        *self.train_metric.last().expect("at least one epoch")
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.train_metric) == bits(&other.train_metric)
            && bits(&self.val_metric) == bits(&other.val_metric)
            && self.stopping_epoch == other.stopping_epoch
            && self.seed == other.seed
            && self.params.buffers().iter().zip(other.params.buffers()).all(|(a, b)| bits(a) == bits(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once the trace holds more than `patience` epochs and the epoch that
/// last improved the running best (by a strictly positive amount of at least
/// `min_delta`) lies `patience` or more entries back, counting itself.
pub fn early_stop_check(trace: &[f64], patience: usize, min_delta: f64, direction: Direction) -> StopDecision {
    if trace.len() <= patience {
        return StopDecision::Continue;
    }
    let mut best = trace[0];
    let mut best_idx = 0;
    for (i, &v) in trace.iter().enumerate().skip(1) {
        let gain = match direction {
            Direction::LowerIsBetter => best - v,
            Direction::HigherIsBetter => v - best,
        };
        if gain > 0.0 && gain >= min_delta {
            best = v;
            best_idx = i;
        }
    }
    if trace.len() - best_idx >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

/// Entropy-loss value and its gradient (laid out like `params`; `None` when
/// no term is active, so λ = 0 leaves base training untouched).
pub fn entropy_loss_and_grad(
    spec: &NetworkSpec,
    params: &Params,
    config: &TrainConfig,
) -> Result<(f64, Option<Params>)> {
    let mut total = 0.0;
    let mut grads: Option<Params> = None;
    let (mut dense_ord, mut conv_ord) = (0usize, 0usize);

    for (idx, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        match (layer, p) {
            (LayerSpec::Dense { .. }, LayerParams::Dense(d)) => {
                let ord = dense_ord;
                dense_ord += 1;
                let lambda = config.schedule.dense_lambda(ord);
                if lambda == 0.0 || !config.entropy_layers.dense.contains(&ord) {
                    continue;
                }
                let lu = Lu::factor(&square_part(&d.weight)?)?;
                let ld = lu.logabsdet();
                total += dense_term(ld, lambda, config.form);
                if let Some(f) = dense_term_grad_factor(ld, lambda, config.form)? {
                    let g = grads.get_or_insert_with(|| Params::zeros(spec));
                    if let LayerParams::Dense(gd) = &mut g.layers[idx] {
                        gd.weight.set_block(0, 0, &lu.inverse_transpose()?.scale(f))?;
                    }
                }
            }
            (LayerSpec::Conv { .. }, LayerParams::Conv(c)) => {
                let ord = conv_ord;
                conv_ord += 1;
                if !config.entropy_layers.conv.contains(&ord) {
                    continue;
                }
                for f in 0..c.filters {
                    for ch in 0..c.in_channels {
                        let lambda = config.schedule.conv_lambda(ord, f, ch);
                        if lambda == 0.0 {
                            continue;
                        }
                        let c11 = c.c11(f, ch);
                        total += conv_term(c11, lambda, config.form);
                        let gv = conv_term_grad(c11, lambda, config.form)?;
                        let g = grads.get_or_insert_with(|| Params::zeros(spec));
                        if let LayerParams::Conv(gc) = &mut g.layers[idx] {
                            gc.weight[c.slice_offset(f, ch)] += gv;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok((total, grads))
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let cols = m.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::new(idx.len(), cols, data).expect("row gather")
}

/// Target of a supervised step: the inputs themselves or class labels.
enum Targets<'a> {
    Reconstruct,
    Labels(&'a [u8]),
}

struct Problem<'a> {
    spec: NetworkSpec,
    input: Shape,
    x: Matrix,
    y: Targets<'a>,
    val_x: Matrix,
    val_y: Targets<'a>,
}

fn shape_of(ds: &Dataset, what: &str) -> Result<Shape> {
    let shape = ds
        .image_shape()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} set is empty")))?;
    if ds.images.iter().any(|t| t.shape() != shape) {
        return Err(dim_err(format!("{what} set mixes image shapes")));
    }
    Ok(shape)
}

/// Mean per-element MSE (autoencoder) or accuracy (classifier) over a split.
pub fn evaluate(spec: &NetworkSpec, params: &Params, input: Shape, data: &Dataset, base: BaseLoss) -> Result<f64> {
    let x = data.to_matrix();
    match base {
        BaseLoss::Mse => score(spec, params, input, &x, &Targets::Reconstruct),
        BaseLoss::CrossEntropy => score(spec, params, input, &x, &Targets::Labels(&data.labels)),
    }
}

fn score(spec: &NetworkSpec, params: &Params, input: Shape, x: &Matrix, y: &Targets) -> Result<f64> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot score an empty split".into()));
    }
    let mut acc = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let xb = gather_rows(x, &idx);
        let out = forward(spec, params, input, &xb)?;
        match y {
            Targets::Reconstruct => {
                let (l, _) = mse_loss(out.output(), &xb)?;
                acc += l * idx.len() as f64;
            }
            Targets::Labels(labels) => {
                acc += argmax_rows(out.output())
                    .iter()
                    .zip(&idx)
                    .filter(|(p, &i)| **p == labels[i] as usize)
                    .count() as f64;
            }
        }
    }
    Ok(acc / n as f64)
}

fn run(problem: &Problem, config: &TrainConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let spec = &problem.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Params::glorot(spec, &mut rng);
    let mut state = AdamState::new(&params);
    let n = problem.x.rows();
    let mut order: Vec<usize> = (0..n).collect();

    let mut result = RunResult {
        train_loss: vec![],
        train_metric: vec![],
        val_metric: vec![],
        stopping_epoch: 0,
        params: params.clone(),
        wall_seconds: 0.0,
        seed: config.seed,
    };

    for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut metric_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let xb = gather_rows(&problem.x, batch);
            let cache = forward(spec, &params, problem.input, &xb)?;
            let (loss, grad) = match &problem.y {
                Targets::Reconstruct => {
                    let (l, g) = mse_loss(cache.output(), &xb)?;
                    metric_sum += l * batch.len() as f64;
                    (l, g)
                }
                Targets::Labels(labels) => {
                    let yb: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
                    metric_sum += argmax_rows(cache.output())
                        .iter()
                        .zip(&yb)
                        .filter(|(p, &l)| **p == l as usize)
                        .count() as f64;
                    cross_entropy_loss(cache.output(), &yb)?
                }
            };
            loss_sum += loss * batch.len() as f64;
            let (_, extra) = entropy_loss_and_grad(spec, &params, config)?;
            let grads = backward(spec, &params, &cache, &grad, extra.as_ref())?;
            adam_step(&mut params, &grads, &mut state, &config.optimizer)?;
        }
        result.train_loss.push(loss_sum / n as f64);
        result.train_metric.push(metric_sum / n as f64);
        result
            .val_metric
            .push(score(spec, &params, problem.input, &problem.val_x, &problem.val_y)?);
        if early_stop_check(&result.val_metric, config.patience, config.min_delta, config.direction())
            == StopDecision::Stop
        {
            break;
        }
    }
    result.stopping_epoch = result.val_metric.len();
    result.params = params;
    result.wall_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Dense(in→latent) + sigmoid + dense(latent→in), trained on reconstruction MSE.
pub fn train_autoencoder(config: &TrainConfig, latent: usize, train: &Dataset, val: &Dataset) -> Result<RunResult> {
    if latent < 1 {
        return Err(Error::InvalidArgument("latent dimension must be >= 1".into()));
    }
    let input = shape_of(train, "training")?;
    if shape_of(val, "validation")? != input {
        return Err(dim_err("training and validation image shapes differ"));
    }
    let n_in = input.0 * input.1 * input.2;
    let problem = Problem {
        spec: NetworkSpec::autoencoder(n_in, latent),
        input: (n_in, 1, 1),
        x: train.to_matrix(),
        y: Targets::Reconstruct,
        val_x: val.to_matrix(),
        val_y: Targets::Reconstruct,
    };
    run(&problem, &TrainConfig { base_loss: BaseLoss::Mse, ..config.clone() })
}

/// Conv blocks of the given widths, flatten, 10-way softmax; cross-entropy.
pub fn train_cnn(config: &TrainConfig, widths: &[usize], train: &Dataset, val: &Dataset) -> Result<RunResult> {
    let input = shape_of(train, "training")?;
    if shape_of(val, "validation")? != input {
        return Err(dim_err("training and validation image shapes differ"));
    }
    let problem = Problem {
        spec: NetworkSpec::cnn(input, widths, crate::datasets::NUM_CLASSES)?,
        input,
        x: train.to_matrix(),
        y: Targets::Labels(&train.labels),
        val_x: val.to_matrix(),
        val_y: Targets::Labels(&val.labels),
    };
    run(&problem, &TrainConfig { base_loss: BaseLoss::CrossEntropy, ..config.clone() })
}
