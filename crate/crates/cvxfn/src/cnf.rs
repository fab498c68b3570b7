//! Certifiably convex networks.
//!
//! A [`CnfModel`] maps `x` to a scalar through affine input features
//! `<p_m, x> + q_m`, hidden stages of nonnegative affine maps followed by
//! coordinatewise PReLU (slopes in `[0, 1]`) and max-pooling over a
//! partition of the stage, and a nonnegative affine read-out. Every model
//! passing [`CnfModel::validate`] is convex and Lipschitz outright:
//! nonnegative combinations and pointwise maxima of convex nondecreasing
//! pieces stay convex, so the certificate is structural and no functional
//! testing is involved. An explicit Lipschitz constant comes from the
//! product of layer operator norms ([`CnfModel::lipschitz_bound`]).
//!
//! [`embed_dualnet`] realizes a max-affine reconstruction exactly in this
//! class: identity weights, unit PReLU slopes, and one max-pool over all
//! coordinates.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dual::DualNet;
use crate::error::{CvxError, Result};
use crate::geometry::{dot, Vector};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// One affine input feature `x -> <direction, x> + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFunctional {
    pub direction: Vector,
    pub offset: f64,
}

/// One hidden stage: nonnegative affine map, PReLU, max-pool.
#[derive(Debug, Clone, PartialEq)]
pub struct CnfLayer {
    /// Nonnegative matrix, `pre_pool x prev_width`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// PReLU slopes in `[0, 1]`, one per pre-pool coordinate.
    pub slopes: Array1<f64>,
    /// Disjoint non-empty index sets covering `0..pre_pool`; one pooled
    /// output per part. Singleton parts make the pool an identity.
    pub partition: Vec<Vec<usize>>,
}

impl CnfLayer {
    pub fn pre_pool_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn pooled_width(&self) -> usize {
        self.partition.len()
    }
}

/// Nonnegative affine read-out.
#[derive(Debug, Clone, PartialEq)]
pub struct CnfOutput {
    pub weights: Array1<f64>,
    pub bias: f64,
}

/// A certifiably convex and Lipschitz network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnfModel {
    pub inputs: Vec<InputFunctional>,
    pub hidden: Vec<CnfLayer>,
    pub output: CnfOutput,
}

/// Where a certificate violation was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRef {
    Hidden(usize),
    Output,
}

impl std::fmt::Display for LayerRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerRef::Hidden(i) => write!(f, "hidden layer {i}"),
            LayerRef::Output => write!(f, "output layer"),
        }
    }
}

/// A single admissibility failure, locating the offending coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CertificateViolation {
    EmptyInputs,
    InputDimMismatch { index: usize, expected: usize, got: usize },
    NegativeWeight { layer: LayerRef, row: usize, col: usize, value: f64 },
    SlopeOutOfRange { layer: usize, index: usize, value: f64 },
    BadPartition { layer: usize, detail: String },
    ShapeMismatch { layer: LayerRef, detail: String },
    NonFinite { layer: LayerRef, detail: String },
}

impl std::fmt::Display for CertificateViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CertificateViolation::EmptyInputs => write!(f, "model has no input functionals"),
            CertificateViolation::InputDimMismatch { index, expected, got } => {
                write!(f, "input functional {index}: dim {got}, expected {expected}")
            }
            CertificateViolation::NegativeWeight { layer, row, col, value } => {
                write!(f, "{layer}: negative weight {value} at ({row}, {col})")
            }
            CertificateViolation::SlopeOutOfRange { layer, index, value } => {
                write!(f, "hidden layer {layer}: slope {value} at {index} outside [0, 1]")
            }
            CertificateViolation::BadPartition { layer, detail } => {
                write!(f, "hidden layer {layer}: bad partition: {detail}")
            }
            CertificateViolation::ShapeMismatch { layer, detail } => {
                write!(f, "{layer}: {detail}")
            }
            CertificateViolation::NonFinite { layer, detail } => {
                write!(f, "{layer}: non-finite value in {detail}")
            }
        }
    }
}

/// Result of the structural admissibility check. A model with an empty
/// violation list is convex and Lipschitz by construction.
#[derive(Debug, Clone, Default)]
pub struct CertificateReport {
    pub violations: Vec<CertificateViolation>,
}

impl CertificateReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&CertificateViolation> {
        self.violations.first()
    }
}

impl std::fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "certificate: pass")
        } else {
            writeln!(f, "certificate: FAIL ({} violations)", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

const MAX_REPORTED_VIOLATIONS: usize = 32;

impl CnfModel {
    /// Structural admissibility check: nonnegative hidden/output weights,
    /// PReLU slopes in `[0, 1]`, valid partitions, chained shapes, finite
    /// parameters. Violations are collected (up to a cap), not thrown.
    pub fn validate(&self) -> CertificateReport {
        let mut report = CertificateReport::default();
        let push = |report: &mut CertificateReport, v: CertificateViolation| {
            if report.violations.len() < MAX_REPORTED_VIOLATIONS {
                report.violations.push(v);
            }
        };

        if self.inputs.is_empty() {
            push(&mut report, CertificateViolation::EmptyInputs);
            return report;
        }
        let dim = self.inputs[0].direction.dim();
        for (i, f) in self.inputs.iter().enumerate() {
            if f.direction.dim() != dim {
                push(
                    &mut report,
                    CertificateViolation::InputDimMismatch {
                        index: i,
                        expected: dim,
                        got: f.direction.dim(),
                    },
                );
            }
            if !f.offset.is_finite() {
                push(
                    &mut report,
                    CertificateViolation::NonFinite {
                        layer: LayerRef::Hidden(0),
                        detail: format!("input offset {i}"),
                    },
                );
            }
        }

        let mut width = self.inputs.len();
        for (l, layer) in self.hidden.iter().enumerate() {
            let here = LayerRef::Hidden(l);
            let pre = layer.pre_pool_width();
            if layer.weights.ncols() != width {
                push(
                    &mut report,
                    CertificateViolation::ShapeMismatch {
                        layer: here,
                        detail: format!(
                            "weights have {} columns, previous width is {width}",
                            layer.weights.ncols()
                        ),
                    },
                );
            }
            if layer.bias.len() != pre || layer.slopes.len() != pre {
                push(
                    &mut report,
                    CertificateViolation::ShapeMismatch {
                        layer: here,
                        detail: format!(
                            "bias/slopes lengths ({}, {}) do not match {pre} rows",
                            layer.bias.len(),
                            layer.slopes.len()
                        ),
                    },
                );
                continue;
            }
            for ((r, c), w) in layer.weights.indexed_iter() {
                if !w.is_finite() {
                    push(
                        &mut report,
                        CertificateViolation::NonFinite {
                            layer: here,
                            detail: format!("weight ({r}, {c})"),
                        },
                    );
                } else if *w < 0.0 {
                    push(
                        &mut report,
                        CertificateViolation::NegativeWeight {
                            layer: here,
                            row: r,
                            col: c,
                            value: *w,
                        },
                    );
                }
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                push(
                    &mut report,
                    CertificateViolation::NonFinite { layer: here, detail: "bias".into() },
                );
            }
            for (i, a) in layer.slopes.iter().enumerate() {
                if !a.is_finite() || !(0.0..=1.0).contains(a) {
                    push(
                        &mut report,
                        CertificateViolation::SlopeOutOfRange { layer: l, index: i, value: *a },
                    );
                }
            }
            // partition: disjoint, non-empty parts covering exactly 0..pre
            let mut seen = vec![false; pre];
            let mut partition_ok = true;
            if layer.partition.is_empty() {
                push(
                    &mut report,
                    CertificateViolation::BadPartition { layer: l, detail: "no parts".into() },
                );
                partition_ok = false;
            }
            for (k, part) in layer.partition.iter().enumerate() {
                if part.is_empty() {
                    push(
                        &mut report,
                        CertificateViolation::BadPartition {
                            layer: l,
                            detail: format!("part {k} is empty"),
                        },
                    );
                    partition_ok = false;
                }
                for &i in part {
                    if i >= pre {
                        push(
                            &mut report,
                            CertificateViolation::BadPartition {
                                layer: l,
                                detail: format!("part {k} references index {i} >= {pre}"),
                            },
                        );
                        partition_ok = false;
                    } else if seen[i] {
                        push(
                            &mut report,
                            CertificateViolation::BadPartition {
                                layer: l,
                                detail: format!("index {i} appears in more than one part"),
                            },
                        );
                        partition_ok = false;
                    } else {
                        seen[i] = true;
                    }
                }
            }
            if partition_ok {
                if let Some(missing) = seen.iter().position(|s| !s) {
                    push(
                        &mut report,
                        CertificateViolation::BadPartition {
                            layer: l,
                            detail: format!("index {missing} is in no part"),
                        },
                    );
                }
            }
            width = layer.pooled_width();
        }

        if self.output.weights.len() != width {
            push(
                &mut report,
                CertificateViolation::ShapeMismatch {
                    layer: LayerRef::Output,
                    detail: format!(
                        "read-out has {} weights, previous width is {width}",
                        self.output.weights.len()
                    ),
                },
            );
        }
        for (c, w) in self.output.weights.iter().enumerate() {
            if !w.is_finite() {
                push(
                    &mut report,
                    CertificateViolation::NonFinite {
                        layer: LayerRef::Output,
                        detail: format!("weight {c}"),
                    },
                );
            } else if *w < 0.0 {
                push(
                    &mut report,
                    CertificateViolation::NegativeWeight {
                        layer: LayerRef::Output,
                        row: 0,
                        col: c,
                        value: *w,
                    },
                );
            }
        }
        if !self.output.bias.is_finite() {
            push(
                &mut report,
                CertificateViolation::NonFinite { layer: LayerRef::Output, detail: "bias".into() },
            );
        }
        report
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].direction.dim()
    }

    pub fn feature_count(&self) -> usize {
        self.inputs.len()
    }

    /// Dimension of the span of the input directions (model metadata; no
    /// operation depends on it).
    pub fn rank(&self) -> usize {
        let dirs: Vec<Vector> = self.inputs.iter().map(|f| f.direction.clone()).collect();
        crate::geometry::Subspace::span(&dirs, self.input_dim()).map(|s| s.dim()).unwrap_or(0)
    }

    /// Trainable parameter count: input directions and offsets, hidden
    /// weights/biases/slopes, read-out weights and bias.
    pub fn param_count(&self) -> usize {
        let inputs = self.inputs.len() * (self.input_dim() + 1);
        let hidden: usize =
            self.hidden.iter().map(|l| l.weights.len() + l.bias.len() + l.slopes.len()).sum();
        inputs + hidden + self.output.weights.len() + 1
    }

    /// Evaluate the model; errors on dimension mismatch or if the model
    /// fails validation (naming the first finding).
    pub fn forward(&self, x: &Vector) -> Result<f64> {
        let report = self.validate();
        if let Some(first) = report.first() {
            return Err(CvxError::InvalidModel(first.to_string()));
        }
        if x.dim() != self.input_dim() {
            return Err(CvxError::DimMismatch { expected: self.input_dim(), got: x.dim() });
        }
        Ok(self.forward_unchecked(x))
    }

    /// Forward pass without re-validating; callers guarantee admissibility
    /// and matching dims.
    pub(crate) fn forward_unchecked(&self, x: &Vector) -> f64 {
        let features: Vec<f64> =
            self.inputs.iter().map(|f| dot(&f.direction, x) + f.offset).collect();
        self.forward_features_unchecked(&features)
    }

    /// Evaluate the post-input stages on raw feature values.
    pub fn forward_features(&self, features: &[f64]) -> Result<f64> {
        let report = self.validate();
        if let Some(first) = report.first() {
            return Err(CvxError::InvalidModel(first.to_string()));
        }
        if features.len() != self.feature_count() {
            return Err(CvxError::DimMismatch {
                expected: self.feature_count(),
                got: features.len(),
            });
        }
        Ok(self.forward_features_unchecked(features))
    }

    pub(crate) fn forward_features_unchecked(&self, features: &[f64]) -> f64 {
        let mut v = Array1::from(features.to_vec());
        for layer in &self.hidden {
            let u = layer.weights.dot(&v) + &layer.bias;
            let mut pooled = Array1::zeros(layer.pooled_width());
            for (k, part) in layer.partition.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for &i in part {
                    let act = prelu(u[i], layer.slopes[i]);
                    if act > best {
                        best = act;
                    }
                }
                pooled[k] = best;
            }
            v = pooled;
        }
        self.output.weights.dot(&v) + self.output.bias
    }

    /// Upper bound on the Lipschitz constant: the product of hidden-layer
    /// operator norms (power iteration, relative tolerance 1e-8), times the
    /// read-out norm, times the root-sum-square of the input directions.
    pub fn lipschitz_bound(&self) -> f64 {
        let mut product = self.output.weights.dot(&self.output.weights).sqrt();
        for layer in &self.hidden {
            product *= operator_norm(&layer.weights);
        }
        let input_mass: f64 =
            self.inputs.iter().map(|f| dot(&f.direction, &f.direction)).sum::<f64>().sqrt();
        product * input_mass
    }
}

#[inline]
pub(crate) fn prelu(u: f64, slope: f64) -> f64 {
    // ReLU(u) - slope * ReLU(-u)
    if u >= 0.0 {
        u
    } else {
        slope * u
    }
}

/// Reference (unfused) implementation of one hidden stage's nonlinearity:
/// coordinatewise PReLU followed by per-part maxima. Cross-checks the fused
/// forward path.
pub fn pooled_prelu_reference(
    u: &[f64],
    slopes: &[f64],
    partition: &[Vec<usize>],
) -> Result<Vec<f64>> {
    if u.len() != slopes.len() {
        return Err(CvxError::LengthMismatch { left: u.len(), right: slopes.len() });
    }
    if slopes.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(CvxError::InvalidModel("slope outside [0, 1]".into()));
    }
    let activated: Vec<f64> = u
        .iter()
        .zip(slopes)
        .map(|(ui, a)| {
            let pos = ui.max(0.0);
            let neg = (-ui).max(0.0);
            pos - a * neg
        })
        .collect();
    let mut out = Vec::with_capacity(partition.len());
    for part in partition {
        if part.is_empty() || part.iter().any(|i| *i >= u.len()) {
            return Err(CvxError::InvalidModel("bad partition part".into()));
        }
        out.push(part.iter().map(|i| activated[*i]).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(out)
}

/// Spectral norm by power iteration on `A^T A` from the all-ones start
/// vector. For the nonnegative matrices of a valid model the leading
/// singular vector is itself nonnegative, so the start always has overlap
/// and the iteration converges.
pub(crate) fn operator_norm(a: &Array2<f64>) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(cols, 1.0 / (cols as f64).sqrt());
    let mut sigma = 0.0f64;
    for _ in 0..200 {
        let w = a.dot(&v);
        let new_sigma = w.dot(&w).sqrt();
        if new_sigma == 0.0 {
            return 0.0;
        }
        let back = a.t().dot(&w);
        let back_norm = back.dot(&back).sqrt();
        if back_norm == 0.0 {
            return new_sigma;
        }
        v = back / back_norm;
        if (new_sigma - sigma).abs() <= 1e-8 * new_sigma.max(1e-300) {
            return new_sigma;
        }
        sigma = new_sigma;
    }
    sigma
}

/// Realize a max-affine model exactly as a two-stage network: features
/// `(p_m, c_m)`, identity weights with unit PReLU slopes, one max-pool
/// over all coordinates, unit read-out.
pub fn embed_dualnet(net: &DualNet) -> CnfModel {
    let m = net.size();
    let inputs = net
        .directions()
        .iter()
        .zip(net.intercepts())
        .map(|(p, c)| InputFunctional { direction: p.clone(), offset: *c })
        .collect();
    CnfModel {
        inputs,
        hidden: vec![CnfLayer {
            weights: Array2::eye(m),
            bias: Array1::zeros(m),
            slopes: Array1::from_elem(m, 1.0),
            partition: vec![(0..m).collect()],
        }],
        output: CnfOutput { weights: Array1::from(vec![1.0]), bias: 0.0 },
    }
}

/// Seeded admissible model with random architecture; useful for probing
/// the certificate empirically.
pub fn random_valid_cnf(dim: usize, seed: u64) -> CnfModel {
    let mut r = rng::stream(seed, "random-cnf");
    let m = r.gen_range(1..=6usize);
    let depth = r.gen_range(1..=3usize);
    let inputs = (0..m)
        .map(|_| InputFunctional {
            direction: Vector::new((0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
                .expect("finite draws"),
            offset: r.sample::<f64, _>(StandardNormal),
        })
        .collect();
    let mut width = m;
    let mut hidden = Vec::with_capacity(depth);
    for _ in 0..depth {
        let pre = r.gen_range(1..=8usize);
        let scale = (2.0 / width as f64).sqrt();
        let weights = Array2::from_shape_fn((pre, width), |_| {
            (r.sample::<f64, _>(StandardNormal) * scale).abs()
        });
        let bias = Array1::from_shape_fn(pre, |_| 0.3 * r.sample::<f64, _>(StandardNormal));
        let slopes = Array1::from_shape_fn(pre, |_| r.gen_range(0.0..=1.0));
        let mut idx: Vec<usize> = (0..pre).collect();
        idx.shuffle(&mut r);
        let parts = r.gen_range(1..=pre);
        let mut partition: Vec<Vec<usize>> = vec![Vec::new(); parts];
        for (pos, i) in idx.into_iter().enumerate() {
            partition[pos % parts].push(i);
        }
        hidden.push(CnfLayer { weights, bias, slopes, partition });
        width = parts;
    }
    let output = CnfOutput {
        weights: Array1::from_shape_fn(width, |_| (r.sample::<f64, _>(StandardNormal) * 0.8).abs()),
        bias: r.sample::<f64, _>(StandardNormal),
    };
    CnfModel { inputs, hidden, output }
}

// --- persistence -----------------------------------------------------------

pub const CNF_FORMAT: &str = "cnf/1";

#[derive(Debug, Serialize, Deserialize)]
pub struct CnfInputFile {
    pub p: Vec<f64>,
    pub q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CnfLayerFile {
    #[serde(rename = "A")]
    pub weights: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub partition: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CnfOutputFile {
    #[serde(rename = "A")]
    pub weights: Vec<f64>,
    pub b: f64,
}

/// Versioned JSON document for [`CnfModel`].
#[derive(Debug, Serialize, Deserialize)]
pub struct CnfFile {
    pub format: String,
    pub input: Vec<CnfInputFile>,
    pub layers: Vec<CnfLayerFile>,
    pub output: CnfOutputFile,
}

impl CnfModel {
    pub fn to_file(&self) -> CnfFile {
        CnfFile {
            format: CNF_FORMAT.to_string(),
            input: self
                .inputs
                .iter()
                .map(|f| CnfInputFile { p: f.direction.coords().to_vec(), q: f.offset })
                .collect(),
            layers: self
                .hidden
                .iter()
                .map(|l| CnfLayerFile {
                    weights: l.weights.rows().into_iter().map(|row| row.to_vec()).collect(),
                    b: l.bias.to_vec(),
                    alpha: l.slopes.to_vec(),
                    partition: l.partition.clone(),
                })
                .collect(),
            output: CnfOutputFile { weights: self.output.weights.to_vec(), b: self.output.bias },
        }
    }

    /// Decode and re-run the certificate check, refusing inadmissible
    /// documents with the full report.
    pub fn from_file(file: CnfFile) -> Result<CnfModel> {
        let model = Self::from_file_unvalidated(file)?;
        let report = model.validate();
        if !report.is_valid() {
            return Err(CvxError::InvalidModel(report.to_string()));
        }
        Ok(model)
    }

    /// Decode without the admissibility check; used by tooling that wants
    /// to report certificate failures rather than refuse the document.
    pub fn from_file_unvalidated(file: CnfFile) -> Result<CnfModel> {
        if file.format != CNF_FORMAT {
            return Err(CvxError::Parse(format!(
                "unsupported format '{}' (expected {CNF_FORMAT})",
                file.format
            )));
        }
        let mut inputs = Vec::with_capacity(file.input.len());
        for f in file.input {
            if !f.q.is_finite() {
                return Err(CvxError::NonFinite { context: "input offset" });
            }
            inputs.push(InputFunctional { direction: Vector::new(f.p)?, offset: f.q });
        }
        let mut hidden = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            let rows = l.weights.len();
            let cols = l.weights.first().map_or(0, Vec::len);
            let mut w = Array2::zeros((rows, cols));
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != cols {
                    return Err(CvxError::InvalidModel(format!("layer {i} row {r} is ragged")));
                }
                for (c, v) in row.iter().enumerate() {
                    w[[r, c]] = *v;
                }
            }
            hidden.push(CnfLayer {
                weights: w,
                bias: Array1::from(l.b),
                slopes: Array1::from(l.alpha),
                partition: l.partition,
            });
        }
        Ok(CnfModel {
            inputs,
            hidden,
            output: CnfOutput { weights: Array1::from(file.output.weights), bias: file.output.b },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<CnfModel> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{BuildConfig, DualNet};
    use crate::geometry::SampleSet;
    use rand::Rng;

    fn v(coords: &[f64]) -> Vector {
        Vector::new(coords.to_vec()).unwrap()
    }

    fn max_pool_model(dirs: &[Vector], offsets: &[f64]) -> CnfModel {
        let m = dirs.len();
        CnfModel {
            inputs: dirs
                .iter()
                .zip(offsets)
                .map(|(p, q)| InputFunctional { direction: p.clone(), offset: *q })
                .collect(),
            hidden: vec![CnfLayer {
                weights: Array2::eye(m),
                bias: Array1::zeros(m),
                slopes: Array1::from_elem(m, 1.0),
                partition: vec![(0..m).collect()],
            }],
            output: CnfOutput { weights: Array1::from(vec![1.0]), bias: 0.0 },
        }
    }

    #[test]
    fn validate_flags_negative_weight_with_coordinates() {
        let mut model = random_valid_cnf(2, 1);
        model.hidden[0].weights[[0, 0]] = -0.5;
        let report = model.validate();
        assert!(!report.is_valid());
        match report.first().unwrap() {
            CertificateViolation::NegativeWeight { layer, row, col, value } => {
                assert_eq!(*layer, LayerRef::Hidden(0));
                assert_eq!((*row, *col), (0, 0));
                assert_eq!(*value, -0.5);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn validate_flags_bad_slope_and_partition() {
        let mut model = random_valid_cnf(2, 2);
        model.hidden[0].slopes[0] = 1.5;
        let report = model.validate();
        assert!(matches!(
            report.first().unwrap(),
            CertificateViolation::SlopeOutOfRange { index: 0, .. }
        ));

        let mut model = random_valid_cnf(2, 3);
        model.hidden[0].partition = vec![vec![0, 0]];
        assert!(!model.validate().is_valid());
    }

    #[test]
    fn forward_computes_max_pool_of_features() {
        let dirs = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, 0.0])];
        let offsets = vec![0.1, -0.2, 0.0];
        let model = max_pool_model(&dirs, &offsets);
        assert!(model.validate().is_valid());
        let mut r = rng::stream(7, "pool-check");
        for _ in 0..200 {
            let x = v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
            let direct = dirs
                .iter()
                .zip(&offsets)
                .map(|(p, q)| dot(p, &x) + q)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(model.forward(&x).unwrap(), direct);
        }
    }

    #[test]
    fn zero_weights_give_constant() {
        let mut model = random_valid_cnf(3, 4);
        for layer in &mut model.hidden {
            layer.weights.fill(0.0);
        }
        model.output.weights.fill(0.0);
        let c = model.forward(&v(&[0.0, 0.0, 0.0])).unwrap();
        let mut r = rng::stream(9, "const-check");
        for _ in 0..50 {
            let x = v(&[r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)]);
            assert_eq!(model.forward(&x).unwrap(), c);
        }
        assert_eq!(c, model.output.bias);
    }

    #[test]
    fn zero_slope_matches_hand_relu() {
        // alpha = 0 turns PReLU into ReLU; check against a scalar path
        let mut model = random_valid_cnf(2, 11);
        for layer in &mut model.hidden {
            layer.slopes.fill(0.0);
        }
        let mut r = rng::stream(12, "relu-check");
        for _ in 0..100 {
            let x = v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
            let mut feats: Vec<f64> =
                model.inputs.iter().map(|f| dot(&f.direction, &x) + f.offset).collect();
            for layer in &model.hidden {
                let mut u = vec![0.0; layer.pre_pool_width()];
                for row in 0..layer.pre_pool_width() {
                    let mut acc = layer.bias[row];
                    for (col, feat) in feats.iter().enumerate() {
                        acc += layer.weights[[row, col]] * feat;
                    }
                    u[row] = acc.max(0.0);
                }
                feats = layer
                    .partition
                    .iter()
                    .map(|part| part.iter().map(|i| u[*i]).fold(f64::NEG_INFINITY, f64::max))
                    .collect();
            }
            let mut out = model.output.bias;
            for (w, f) in model.output.weights.iter().zip(&feats) {
                out += w * f;
            }
            let got = model.forward(&x).unwrap();
            assert!((got - out).abs() <= 4.0 * f64::EPSILON * out.abs().max(1.0));
        }
    }

    #[test]
    fn pooled_reference_examples() {
        let got = pooled_prelu_reference(&[-2.0, 3.0], &[0.5, 0.5], &[vec![0, 1]]).unwrap();
        assert_eq!(got, vec![3.0]); // max(PReLU(-2) = -1, 3)
        let got = pooled_prelu_reference(&[-2.0, -4.0], &[0.5, 0.5], &[vec![0, 1]]).unwrap();
        assert_eq!(got, vec![-1.0]);
        // alpha = 1: identity values
        let got = pooled_prelu_reference(&[-2.0, 3.0], &[1.0, 1.0], &[vec![0], vec![1]]).unwrap();
        assert_eq!(got, vec![-2.0, 3.0]);
        // alpha = 0: ReLU values
        let got = pooled_prelu_reference(&[-2.0, 3.0], &[0.0, 0.0], &[vec![0], vec![1]]).unwrap();
        assert_eq!(got, vec![0.0, 3.0]);
        assert!(pooled_prelu_reference(&[0.0], &[2.0], &[vec![0]]).is_err());
    }

    #[test]
    fn fused_stage_matches_reference() {
        let mut r = rng::stream(13, "fused-stage");
        for seed in 0..20u64 {
            let model = random_valid_cnf(2, seed + 500);
            let layer = &model.hidden[0];
            let width = layer.weights.ncols();
            let feats: Vec<f64> = (0..width).map(|_| r.gen_range(-3.0..3.0)).collect();
            let u = layer.weights.dot(&Array1::from(feats.clone())) + &layer.bias;
            let reference = pooled_prelu_reference(
                u.as_slice().unwrap(),
                layer.slopes.as_slice().unwrap(),
                &layer.partition,
            )
            .unwrap();
            let mut pooled = vec![0.0; layer.pooled_width()];
            for (k, part) in layer.partition.iter().enumerate() {
                pooled[k] = part
                    .iter()
                    .map(|i| prelu(u[*i], layer.slopes[*i]))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            for (a, b) in pooled.iter().zip(&reference) {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lipschitz_bound_examples() {
        // identity hidden weights, unit read-out, two orthonormal inputs
        let model = max_pool_model(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[0.0, 0.0]);
        assert!((model.lipschitz_bound() - 2.0f64.sqrt()).abs() < 1e-8);

        let mut zeroed = model.clone();
        zeroed.output.weights.fill(0.0);
        assert_eq!(zeroed.lipschitz_bound(), 0.0);

        // homogeneity in the input directions
        let mut scaled = model.clone();
        for f in &mut scaled.inputs {
            f.direction = f.direction.scaled(3.0);
        }
        assert!((scaled.lipschitz_bound() - 3.0 * model.lipschitz_bound()).abs() < 1e-8);
    }

    #[test]
    fn lipschitz_bound_dominates_probes() {
        let mut r = rng::stream(15, "lip-probe");
        for seed in 0..20u64 {
            let model = random_valid_cnf(3, seed + 900);
            let bound = model.lipschitz_bound();
            for _ in 0..100 {
                let a =
                    v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
                let b =
                    v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
                let fa = model.forward(&a).unwrap();
                let fb = model.forward(&b).unwrap();
                assert!(
                    (fa - fb).abs() <= bound * a.dist(&b) + 1e-9,
                    "bound {bound} violated: gap {}",
                    (fa - fb).abs()
                );
            }
        }
    }

    #[test]
    fn certificate_implies_convexity_on_probes() {
        let mut r = rng::stream(17, "jensen-probe");
        for seed in 0..20u64 {
            let model = random_valid_cnf(2, seed + 1300);
            for _ in 0..200 {
                let a = v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
                let b = v(&[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
                let t: f64 = r.gen_range(0.0..1.0);
                let mid = a.scaled(t).add(&b.scaled(1.0 - t));
                let gap = model.forward(&mid).unwrap()
                    - t * model.forward(&a).unwrap()
                    - (1.0 - t) * model.forward(&b).unwrap();
                assert!(gap <= 1e-9, "Jensen gap {gap} at seed {seed}");
            }
        }
    }

    #[test]
    fn feature_monotonicity() {
        // the post-input network is coordinatewise non-decreasing
        let mut r = rng::stream(19, "monotone");
        for seed in 0..20u64 {
            let model = random_valid_cnf(2, seed + 1700);
            let m = model.feature_count();
            for _ in 0..50 {
                let feats: Vec<f64> = (0..m).map(|_| r.gen_range(-2.0..2.0)).collect();
                let base = model.forward_features(&feats).unwrap();
                let k = r.gen_range(0..m);
                let mut bumped = feats.clone();
                bumped[k] += r.gen_range(0.0..1.0);
                let up = model.forward_features(&bumped).unwrap();
                assert!(up >= base - 1e-12, "increase at {k} dropped output");
            }
        }
    }

    #[test]
    fn embedding_matches_dual_evaluate() {
        let s =
            SampleSet::new(vec![v(&[0.0]), v(&[0.5]), v(&[1.0])], vec![0.0, 0.5, 1.0], 1.0)
                .unwrap();
        let net = DualNet::from_directions(&s, vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])]).unwrap();
        let model = embed_dualnet(&net);
        assert!(model.validate().is_valid());
        for x in [0.0, 0.5, 0.75, 1.0] {
            let xv = v(&[x]);
            assert_eq!(model.forward(&xv).unwrap(), net.evaluate(&xv).unwrap());
        }

        // single direction: plain affine functional
        let one = SampleSet::new(vec![v(&[0.5])], vec![2.0], 1.0).unwrap();
        let net1 = DualNet::build(&one, 0.5, &BuildConfig::default()).unwrap();
        let m1 = embed_dualnet(&net1);
        assert_eq!(m1.feature_count(), 1);
        assert_eq!(m1.forward(&v(&[3.0])).unwrap(), net1.evaluate(&v(&[3.0])).unwrap());

        // random net, 500 points
        let mut r = rng::stream(21, "embed");
        let f = crate::reference::random_max_affine(2, 5, 1.0, 2);
        let pts: Vec<Vector> =
            (0..7).map(|_| v(&[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])).collect();
        let ys: Vec<f64> = pts.iter().map(|p| f.evaluate(p)).collect();
        let s = SampleSet::new(pts, ys, 1.0).unwrap();
        let net = DualNet::build_with_eta(&s, 0.25, &BuildConfig::default()).unwrap();
        let model = embed_dualnet(&net);
        for _ in 0..500 {
            let x = v(&[r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)]);
            let gap = (model.forward(&x).unwrap() - net.evaluate(&x).unwrap()).abs();
            assert!(gap <= 1e-12, "embedding deviates by {gap}");
        }
    }

    #[test]
    fn json_round_trip_and_refusal() {
        let model = random_valid_cnf(2, 33);
        let text = model.to_json().unwrap();
        let back = CnfModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);

        // tamper a weight negative: loader must refuse with the report
        let mut file = model.to_file();
        file.layers[0].weights[0][0] = -1.0;
        let err = CnfModel::from_file(file).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("negative weight"), "message was: {msg}");
        assert!(msg.contains("(0, 0)"), "message was: {msg}");
    }
}
