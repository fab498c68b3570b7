//! Projected-gradient training of certifiably convex models.
//!
//! Gradients flow through the PReLU/max-pool stages with fixed
//! conventions (pools route to the smallest-index argmax, the PReLU
//! subgradient at zero is the right derivative 1). After every step the
//! parameters are projected back onto the admissible set: hidden and
//! read-out weights clamped to `[0, inf)`, PReLU slopes to `[0, 1]`. Every
//! iterate therefore carries the structural convexity certificate; the
//! trainer re-validates after each step and aborts if that ever failed.
//!
//! The module also provides the random positive-weight ReLU targets and
//! the dimensional-ablation harness used to study how well small
//! certified models fit larger unconstrained-width convex networks.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::cnf::{prelu, CnfLayer, CnfModel, CnfOutput, InputFunctional};
use crate::error::{CvxError, Result};
use crate::geometry::{SampleSet, Vector};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Knobs for [`train`]. `batch_size >= n` means full-batch descent.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub jensen_probes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            learning_rate: 1e-3,
            batch_size: 1000,
            seed: 0,
            jensen_probes: 200,
        }
    }
}

/// Training outcome. `train_mse[k]` is the full-training-set MSE at
/// iterate `k` (entry 0 is the initial model), `jensen_gap` the largest
/// sampled gap over all logged iterates, and `param_ratio` the fraction of
/// the data-generating model's parameters (filled by the ablation harness,
/// which knows the target).
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub test_mse: Option<f64>,
    pub jensen_gap: f64,
    pub param_count: usize,
    pub param_ratio: Option<f64>,
}

// --- random convex targets ---------------------------------------------------

/// Two-hidden-layer ReLU network with nonnegative hidden and output
/// weights; convex in its input for every parameter draw.
#[derive(Debug, Clone)]
pub struct ConvexTarget {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

impl ConvexTarget {
    pub fn evaluate(&self, x: &Vector) -> f64 {
        let col = Array2::from_shape_vec((x.dim(), 1), x.coords().to_vec())
            .expect("column reshape");
        self.evaluate_columns(&col)[0]
    }

    /// Evaluate on points stored as columns.
    pub fn evaluate_columns(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut h1 = self.w1.dot(x) + &self.b1.view().insert_axis(Axis(1));
        h1.mapv_inplace(|v| v.max(0.0));
        let mut h2 = self.w2.dot(&h1) + &self.b2.view().insert_axis(Axis(1));
        h2.mapv_inplace(|v| v.max(0.0));
        let out = self.w3.dot(&h2);
        out + self.b3
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    /// Rigorous Lipschitz upper bound from `||A||_2 <= sqrt(||A||_1 ||A||_inf)`
    /// per layer; safe for labeling data generated by this network.
    pub fn lipschitz_upper(&self) -> f64 {
        holder_norm(&self.w1) * holder_norm(&self.w2) * self.w3.dot(&self.w3).sqrt()
    }
}

fn holder_norm(a: &Array2<f64>) -> f64 {
    let max_col = a
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let max_row = a
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    (max_col * max_row).sqrt()
}

/// Seeded random convex target: first layer signed, deeper weights folded
/// to nonnegative, He-style scale `sqrt(2 / fan_in)`.
pub fn random_convex_target(dim: usize, width: usize, seed: u64) -> ConvexTarget {
    let mut r = rng::stream(seed, "convex-target");
    let s1 = (2.0 / dim as f64).sqrt();
    let s2 = (2.0 / width as f64).sqrt();
    ConvexTarget {
        w1: Array2::from_shape_fn((width, dim), |_| r.sample::<f64, _>(StandardNormal) * s1),
        b1: Array1::from_shape_fn(width, |_| r.sample::<f64, _>(StandardNormal) * 0.1),
        w2: Array2::from_shape_fn((width, width), |_| {
            (r.sample::<f64, _>(StandardNormal) * s2).abs()
        }),
        b2: Array1::from_shape_fn(width, |_| r.sample::<f64, _>(StandardNormal) * 0.1),
        w3: Array1::from_shape_fn(width, |_| (r.sample::<f64, _>(StandardNormal) * s2).abs()),
        b3: r.sample::<f64, _>(StandardNormal) * 0.1,
    }
}

// --- batched forward / backward ----------------------------------------------

/// Per-layer parameter gradients; shapes mirror the model.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub slopes: Array1<f64>,
}

/// Full parameter gradient of the batch MSE.
#[derive(Debug, Clone)]
pub struct CnfGradients {
    pub directions: Array2<f64>,
    pub offsets: Array1<f64>,
    pub layers: Vec<LayerGradients>,
    pub output_weights: Array1<f64>,
    pub output_bias: f64,
}

impl CnfGradients {
    fn non_finite_block(&self) -> Option<&'static str> {
        if self.directions.iter().any(|v| !v.is_finite()) {
            return Some("input directions");
        }
        if self.offsets.iter().any(|v| !v.is_finite()) {
            return Some("input offsets");
        }
        for g in &self.layers {
            if g.weights.iter().any(|v| !v.is_finite())
                || g.bias.iter().any(|v| !v.is_finite())
                || g.slopes.iter().any(|v| !v.is_finite())
            {
                return Some("hidden layer");
            }
        }
        if self.output_weights.iter().any(|v| !v.is_finite()) || !self.output_bias.is_finite() {
            return Some("read-out");
        }
        None
    }
}

struct BatchTrace {
    feats: Array2<f64>,
    layer_u: Vec<Array2<f64>>,
    layer_pooled: Vec<Array2<f64>>,
    /// winning pre-pool row per (part, sample); ties to the smallest index
    layer_argmax: Vec<Array2<usize>>,
    out: Array1<f64>,
}

fn direction_matrix(model: &CnfModel) -> Array2<f64> {
    let m = model.feature_count();
    let dim = model.input_dim();
    let mut p = Array2::zeros((m, dim));
    for (r, f) in model.inputs.iter().enumerate() {
        for (c, v) in f.direction.coords().iter().enumerate() {
            p[[r, c]] = *v;
        }
    }
    p
}

fn forward_batch(model: &CnfModel, x: &Array2<f64>, keep_trace: bool) -> BatchTrace {
    let n = x.ncols();
    let p = direction_matrix(model);
    let mut feats = p.dot(x);
    for (r, f) in model.inputs.iter().enumerate() {
        feats.row_mut(r).mapv_inplace(|v| v + f.offset);
    }
    let mut v = feats.clone();
    let mut layer_u = Vec::new();
    let mut layer_pooled = Vec::new();
    let mut layer_argmax = Vec::new();
    for layer in &model.hidden {
        let u = layer.weights.dot(&v) + &layer.bias.view().insert_axis(Axis(1));
        let parts = layer.pooled_width();
        let mut pooled = Array2::zeros((parts, n));
        let mut argmax = Array2::zeros((parts, n));
        for (k, part) in layer.partition.iter().enumerate() {
            for s in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for &i in part {
                    let a = prelu(u[[i, s]], layer.slopes[i]);
                    if a > best || (a == best && i < best_i) {
                        best = a;
                        best_i = i;
                    }
                }
                pooled[[k, s]] = best;
                argmax[[k, s]] = best_i;
            }
        }
        v = pooled.clone();
        if keep_trace {
            layer_u.push(u);
            layer_argmax.push(argmax);
        }
        layer_pooled.push(pooled);
    }
    let out = model.output.weights.dot(&v) + model.output.bias;
    BatchTrace { feats, layer_u, layer_pooled, layer_argmax, out }
}

/// Model outputs on points stored as columns (no gradient bookkeeping).
pub fn forward_columns(model: &CnfModel, x: &Array2<f64>) -> Array1<f64> {
    forward_batch(model, x, false).out
}

/// Batch MSE and its full analytic gradient. Points are columns of `x`.
pub fn mse_and_gradient(
    model: &CnfModel,
    x: &Array2<f64>,
    y: &Array1<f64>,
) -> Result<(f64, CnfGradients)> {
    let report = model.validate();
    if let Some(first) = report.first() {
        return Err(CvxError::InvalidModel(first.to_string()));
    }
    if x.nrows() != model.input_dim() {
        return Err(CvxError::DimMismatch { expected: model.input_dim(), got: x.nrows() });
    }
    if x.ncols() != y.len() {
        return Err(CvxError::LengthMismatch { left: x.ncols(), right: y.len() });
    }
    let n = x.ncols();
    let trace = forward_batch(model, x, true);
    let err = &trace.out - y;
    let mse = err.dot(&err) / n as f64;
    // dL/dout
    let g = err.mapv(|e| 2.0 * e / n as f64);

    let depth = model.hidden.len();
    let v_last = if depth == 0 { &trace.feats } else { &trace.layer_pooled[depth - 1] };
    let output_weights_grad = v_last.dot(&g);
    let output_bias_grad = g.sum();

    // delta on the pooled outputs of the deepest layer
    let mut delta = Array2::from_shape_fn((model.output.weights.len(), n), |(k, s)| {
        model.output.weights[k] * g[s]
    });

    let mut layers: Vec<LayerGradients> = Vec::with_capacity(depth);
    for l in (0..depth).rev() {
        let layer = &model.hidden[l];
        let u = &trace.layer_u[l];
        let argmax = &trace.layer_argmax[l];
        let pre = layer.pre_pool_width();
        // route pooled gradients to the winning coordinates
        let mut d_u = Array2::zeros((pre, n));
        for k in 0..layer.pooled_width() {
            for s in 0..n {
                d_u[[argmax[[k, s]], s]] += delta[[k, s]];
            }
        }
        // chain through PReLU: derivative 1 for u >= 0, slope for u < 0;
        // the slope gradient is u itself on the negative branch
        let mut d_slopes = Array1::zeros(pre);
        for ((i, s), du) in d_u.indexed_iter_mut() {
            let ui = u[[i, s]];
            if ui < 0.0 {
                d_slopes[i] += *du * ui;
                *du *= layer.slopes[i];
            }
        }
        let v_prev = if l == 0 { &trace.feats } else { &trace.layer_pooled[l - 1] };
        let weights_grad = d_u.dot(&v_prev.t());
        let bias_grad = d_u.sum_axis(Axis(1));
        delta = layer.weights.t().dot(&d_u);
        layers.push(LayerGradients { weights: weights_grad, bias: bias_grad, slopes: d_slopes });
    }
    layers.reverse();

    let directions = delta.dot(&x.t());
    let offsets = delta.sum_axis(Axis(1));
    Ok((
        mse,
        CnfGradients {
            directions,
            offsets,
            layers,
            output_weights: output_weights_grad,
            output_bias: output_bias_grad,
        },
    ))
}

/// One descent step (no projection).
pub fn apply_step(model: &mut CnfModel, grads: &CnfGradients, lr: f64) {
    for (r, f) in model.inputs.iter_mut().enumerate() {
        let coords: Vec<f64> = f
            .direction
            .coords()
            .iter()
            .enumerate()
            .map(|(c, v)| v - lr * grads.directions[[r, c]])
            .collect();
        f.direction = Vector::new(coords).expect("finite step");
        f.offset -= lr * grads.offsets[r];
    }
    for (layer, g) in model.hidden.iter_mut().zip(&grads.layers) {
        layer.weights.zip_mut_with(&g.weights, |w, d| *w -= lr * d);
        layer.bias.zip_mut_with(&g.bias, |b, d| *b -= lr * d);
        layer.slopes.zip_mut_with(&g.slopes, |a, d| *a -= lr * d);
    }
    model.output.weights.zip_mut_with(&grads.output_weights, |w, d| *w -= lr * d);
    model.output.bias -= lr * grads.output_bias;
}

/// Project onto the admissible set: hidden and read-out weights clamped to
/// `[0, inf)`, PReLU slopes to `[0, 1]`. Admissible models are fixed
/// points.
pub fn project(model: &mut CnfModel) {
    for layer in &mut model.hidden {
        layer.weights.mapv_inplace(|w| w.max(0.0));
        layer.slopes.mapv_inplace(|a| a.clamp(0.0, 1.0));
    }
    model.output.weights.mapv_inplace(|w| w.max(0.0));
}

/// Smallest distance to a nonlinearity kink at `x`: pre-activation
/// magnitudes and pool winner margins. Used to filter finite-difference
/// probes away from subgradient ambiguity.
pub fn kink_margin(model: &CnfModel, x: &Vector) -> f64 {
    let col = Array2::from_shape_vec((x.dim(), 1), x.coords().to_vec()).expect("column reshape");
    let trace = forward_batch(model, &col, true);
    let mut margin = f64::INFINITY;
    for (layer, u) in model.hidden.iter().zip(&trace.layer_u) {
        for v in u.iter() {
            margin = margin.min(v.abs());
        }
        for part in &layer.partition {
            if part.len() < 2 {
                continue;
            }
            let mut top = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for &i in part {
                let a = prelu(u[[i, 0]], layer.slopes[i]);
                if a > top {
                    second = top;
                    top = a;
                } else if a > second {
                    second = a;
                }
            }
            margin = margin.min(top - second);
        }
    }
    margin
}

fn columns_of(samples: &SampleSet) -> (Array2<f64>, Array1<f64>) {
    let dim = samples.dim();
    let n = samples.len();
    let mut x = Array2::zeros((dim, n));
    for (s, p) in samples.points().iter().enumerate() {
        for (c, v) in p.coords().iter().enumerate() {
            x[[c, s]] = *v;
        }
    }
    (x, Array1::from(samples.values().to_vec()))
}

fn bounding_box(samples: &SampleSet) -> (Vec<f64>, Vec<f64>) {
    let dim = samples.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in samples.points() {
        for (c, v) in p.coords().iter().enumerate() {
            lo[c] = lo[c].min(*v);
            hi[c] = hi[c].max(*v);
        }
    }
    (lo, hi)
}

/// Largest sampled Jensen gap `f(tx + (1-t)y) - t f(x) - (1-t) f(y)` over
/// seeded draws from the box; nonpositive up to float noise for convex `f`.
pub fn jensen_gap<F: Fn(&Vector) -> f64>(
    f: F,
    probes: usize,
    lower: &[f64],
    upper: &[f64],
    seed: u64,
) -> f64 {
    let mut r = rng::stream(seed, "jensen");
    let dim = lower.len();
    let draw = |r: &mut rand_chacha::ChaCha8Rng| {
        Vector::new(
            (0..dim)
                .map(|c| {
                    if lower[c] < upper[c] {
                        r.gen_range(lower[c]..upper[c])
                    } else {
                        lower[c]
                    }
                })
                .collect(),
        )
        .expect("finite box draw")
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probes.max(1) {
        let a = draw(&mut r);
        let b = draw(&mut r);
        let t: f64 = r.gen_range(0.0..1.0);
        let mid = a.scaled(t).add(&b.scaled(1.0 - t));
        let gap = f(&mid) - t * f(&a) - (1.0 - t) * f(&b);
        worst = worst.max(gap);
    }
    worst
}

/// Minimize the MSE on `data` by projected (sub)gradient descent.
///
/// Every iterate is projected back into the admissible class and
/// re-validated, so the convexity certificate holds throughout training.
/// `train_mse` records the full-data MSE at every iterate; the Jensen gap
/// is sampled at roughly ten logged iterates (always including the first
/// and last).
pub fn train(
    model: &CnfModel,
    data: &SampleSet,
    test: Option<&SampleSet>,
    cfg: &TrainConfig,
) -> Result<(CnfModel, TrainReport)> {
    let report = model.validate();
    if let Some(first) = report.first() {
        return Err(CvxError::InvalidModel(first.to_string()));
    }
    if data.dim() != model.input_dim() {
        return Err(CvxError::DimMismatch { expected: model.input_dim(), got: data.dim() });
    }
    let (x_all, y_all) = columns_of(data);
    let n = data.len();
    let (lo, hi) = bounding_box(data);
    let log_every = (cfg.iterations / 10).max(1);

    let mut current = model.clone();
    let mut rng_batch = rng::stream(cfg.seed, "minibatch");
    let mut train_mse = Vec::with_capacity(cfg.iterations + 1);
    {
        let out = forward_columns(&current, &x_all);
        let err = &out - &y_all;
        train_mse.push(err.dot(&err) / n as f64);
    }
    let mut jensen_worst = f64::NEG_INFINITY;
    let log_jensen = |model: &CnfModel, worst: &mut f64, iterate: usize| {
        let gap = jensen_gap(
            |x| model.forward_unchecked(x),
            cfg.jensen_probes,
            &lo,
            &hi,
            rng::mix(cfg.seed, &[iterate as u64]),
        );
        *worst = worst.max(gap);
    };
    log_jensen(&current, &mut jensen_worst, 0);

    let full_batch = cfg.batch_size >= n;
    let mut indices: Vec<usize> = (0..n).collect();
    for it in 0..cfg.iterations {
        let (mse_batch, grads) = if full_batch {
            mse_and_gradient(&current, &x_all, &y_all)?
        } else {
            indices.shuffle(&mut rng_batch);
            let chosen = &indices[..cfg.batch_size.min(n)];
            let mut xb = Array2::zeros((data.dim(), chosen.len()));
            let mut yb = Array1::zeros(chosen.len());
            for (j, &s) in chosen.iter().enumerate() {
                xb.column_mut(j).assign(&x_all.column(s));
                yb[j] = y_all[s];
            }
            mse_and_gradient(&current, &xb, &yb)?
        };
        if !mse_batch.is_finite() {
            return Err(CvxError::NonFiniteLoss { iteration: it, block: "loss".into() });
        }
        if let Some(block) = grads.non_finite_block() {
            return Err(CvxError::NonFiniteLoss { iteration: it, block: block.into() });
        }
        apply_step(&mut current, &grads, cfg.learning_rate);
        project(&mut current);
        let post = current.validate();
        if let Some(first) = post.first() {
            return Err(CvxError::InvalidModel(format!(
                "projection failed to restore admissibility at iteration {it}: {first}"
            )));
        }
        let out = forward_columns(&current, &x_all);
        let err = &out - &y_all;
        train_mse.push(err.dot(&err) / n as f64);
        if (it + 1) % log_every == 0 || it + 1 == cfg.iterations {
            log_jensen(&current, &mut jensen_worst, it + 1);
        }
    }

    let test_mse = test.map(|t| {
        let (xt, yt) = columns_of(t);
        let out = forward_columns(&current, &xt);
        let err = &out - &yt;
        err.dot(&err) / t.len() as f64
    });
    let param_count = current.param_count();
    Ok((
        current,
        TrainReport {
            train_mse,
            test_mse,
            jensen_gap: jensen_worst,
            param_count,
            param_ratio: None,
        },
    ))
}

// --- sizing and initialization -------------------------------------------------

/// Width of the data-generating networks in the ablation study.
pub const ABLATION_TARGET_WIDTH: usize = 500;

/// Fraction of the target's parameter count the trained model is sized to.
pub const CNF_PARAM_RATIO_TARGET: f64 = 0.323;

/// Parameter count of the standard trainable architecture: `width` input
/// features, two hidden stages of `width` with singleton pools, scalar
/// read-out.
pub fn cnf_param_count(dim: usize, width: usize) -> usize {
    2 * width * width + width * (dim + 6) + 1
}

/// Hidden width whose parameter count lands closest to
/// [`CNF_PARAM_RATIO_TARGET`] times the target's.
pub fn solve_cnf_width(dim: usize, target_params: usize) -> usize {
    let goal = CNF_PARAM_RATIO_TARGET * target_params as f64;
    // positive root of 2w^2 + (dim + 6)w + 1 = goal
    let b = (dim + 6) as f64;
    let root = ((-b + (b * b + 8.0 * (goal - 1.0)).sqrt()) / 4.0).max(1.0);
    let mut best = root.floor().max(1.0) as usize;
    let mut best_err = f64::INFINITY;
    for w in best..=best + 2 {
        let err = (cnf_param_count(dim, w) as f64 - goal).abs();
        if err < best_err {
            best_err = err;
            best = w;
        }
    }
    best
}

/// Seeded admissible model of the standard trainable architecture: signed
/// input directions at He scale, nonnegative hidden/read-out weights drawn
/// as `|N(0, 2/fan_in)|`, slopes at 0.25, biases at zero.
pub fn init_cnf(dim: usize, width: usize, seed: u64) -> CnfModel {
    let mut r = rng::stream(seed, "cnf-init");
    let s_in = (2.0 / dim as f64).sqrt();
    let s_h = (2.0 / width as f64).sqrt();
    let inputs = (0..width)
        .map(|_| InputFunctional {
            direction: Vector::new(
                (0..dim).map(|_| r.sample::<f64, _>(StandardNormal) * s_in).collect(),
            )
            .expect("finite draws"),
            offset: 0.0,
        })
        .collect();
    let mut hidden = Vec::with_capacity(2);
    for _ in 0..2 {
        hidden.push(CnfLayer {
            weights: Array2::from_shape_fn((width, width), |_| {
                (r.sample::<f64, _>(StandardNormal) * s_h).abs()
            }),
            bias: Array1::zeros(width),
            slopes: Array1::from_elem(width, 0.25),
            partition: (0..width).map(|i| vec![i]).collect(),
        });
    }
    let output = CnfOutput {
        weights: Array1::from_shape_fn(width, |_| (r.sample::<f64, _>(StandardNormal) * s_h).abs()),
        bias: 0.0,
    };
    CnfModel { inputs, hidden, output }
}

// --- ablation harness ----------------------------------------------------------

/// One training run in the ablation table.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub dim: usize,
    pub run: usize,
    pub param_ratio: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub jensen_gap: f64,
}

/// Mean and standard deviation over the runs of one dimension.
#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub dim: usize,
    pub param_ratio_mean: f64,
    pub param_ratio_std: f64,
    pub train_mse_mean: f64,
    pub train_mse_std: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
    pub jensen_gap_mean: f64,
    pub jensen_gap_std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<AblationSummary>,
}

impl AblationTable {
    /// Fixed-column CSV: `dim,run,param_ratio,train_mse,test_mse,jensen_gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,run,param_ratio,train_mse,test_mse,jensen_gap\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.dim, row.run, row.param_ratio, row.train_mse, row.test_mse, row.jensen_gap
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seeded uniform draws from the centered unit box, labeled through `f`.
pub fn boxed_samples<F: Fn(&Vector) -> f64>(
    dim: usize,
    count: usize,
    lipschitz: f64,
    f: F,
    seed: u64,
    label: &str,
) -> Result<SampleSet> {
    let mut r = rng::stream(seed, label);
    let pts: Vec<Vector> = (0..count)
        .map(|_| {
            Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).expect("finite draw")
        })
        .collect();
    let values: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    SampleSet::new(pts, values, lipschitz)
}

/// For each dimension and run: draw a random convex target, fit a model
/// sized to roughly a third of its parameters on 1000 samples, and report
/// parameter ratio, train/test MSE, and the sampled Jensen gap.
pub fn ablation(
    dims: &[usize],
    runs: usize,
    target_width: usize,
    cfg: &TrainConfig,
) -> Result<AblationTable> {
    if dims.is_empty() {
        return Err(CvxError::Empty("ablation dims"));
    }
    if runs == 0 {
        return Err(CvxError::NonPositive { context: "ablation runs", value: 0.0 });
    }
    let mut rows = Vec::with_capacity(dims.len() * runs);
    for &dim in dims {
        for run in 0..runs {
            let run_seed = rng::mix(cfg.seed, &[dim as u64, run as u64]);
            let target = random_convex_target(dim, target_width, run_seed);
            let l = target.lipschitz_upper();
            let train_data =
                boxed_samples(dim, 1000, l, |x| target.evaluate(x), run_seed, "train-samples")?;
            let test_data =
                boxed_samples(dim, 200, l, |x| target.evaluate(x), run_seed, "test-samples")?;
            let width = solve_cnf_width(dim, target.param_count());
            let model = init_cnf(dim, width, run_seed);
            let (_, report) = train(&model, &train_data, Some(&test_data), cfg)?;
            rows.push(AblationRow {
                dim,
                run,
                param_ratio: report.param_count as f64 / target.param_count() as f64,
                train_mse: *report.train_mse.last().expect("at least the initial MSE"),
                test_mse: report.test_mse.expect("test set provided"),
                jensen_gap: report.jensen_gap,
            });
        }
    }
    let summaries = dims
        .iter()
        .map(|&dim| {
            let select = |f: fn(&AblationRow) -> f64| -> Vec<f64> {
                rows.iter().filter(|r| r.dim == dim).map(f).collect()
            };
            let (pr_m, pr_s) = mean_std(&select(|r| r.param_ratio));
            let (tr_m, tr_s) = mean_std(&select(|r| r.train_mse));
            let (te_m, te_s) = mean_std(&select(|r| r.test_mse));
            let (j_m, j_s) = mean_std(&select(|r| r.jensen_gap));
            AblationSummary {
                dim,
                param_ratio_mean: pr_m,
                param_ratio_std: pr_s,
                train_mse_mean: tr_m,
                train_mse_std: tr_s,
                test_mse_mean: te_m,
                test_mse_std: te_s,
                jensen_gap_mean: j_m,
                jensen_gap_std: j_s,
            }
        })
        .collect();
    Ok(AblationTable { rows, summaries })
}
