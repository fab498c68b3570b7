//! Exact compilation of coordinatewise min/max into ReLU networks.
//!
//! `compile_max(q)` builds a binary tournament of the pairwise gadget
//! `max(a, b) = ReLU(a - b) + ReLU(b) - ReLU(-b)` (three hidden neurons per
//! pair; odd entries pass through the identity pair `ReLU(v) - ReLU(-v)`).
//! Stage combinations are folded into the following affine layer, so the
//! network stays a plain ReLU-MLP with `ceil(log2 q)` activation stages and
//! one final affine read-out. `compile_min` is the sign mirror of
//! `compile_max` and satisfies `min(z) = -max(-z)` bit-for-bit.
//!
//! The compiled networks are sparse: counting nonzero parameters, a
//! tournament over `q >= 2` inputs fits in size 16q and width 3q.
//! [`AssembledNetwork`] stacks the compiled pieces into the full
//! reconstruction evaluator: an inner min network collapses the data
//! offsets per direction, an outer max network folds the affine pieces.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CvxError, Result};
use crate::geometry::{dot, SampleSet, Vector};

/// One affine layer `x -> W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ReluLayer {
    fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn in_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// A fully-connected network applying ReLU after every layer except the
/// last. A single-layer network is purely affine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<ReluLayer>,
    input_dim: usize,
}

/// Exact parameter accounting for a [`ReluNetwork`].
///
/// `size` counts nonzero weight and bias entries (the compiled tournaments
/// are sparsely connected; dense zero padding is free). `depth` counts
/// affine layers; `activation_stages = depth - 1` counts the ReLU stages
/// between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub size: usize,
    pub width: usize,
    pub depth: usize,
    pub activation_stages: usize,
}

impl ReluNetwork {
    pub fn new(layers: Vec<ReluLayer>, input_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(CvxError::Empty("network layers"));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != prev {
                return Err(CvxError::InvalidModel(format!(
                    "layer {i} expects input {} but receives {prev}",
                    layer.in_dim()
                )));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(CvxError::InvalidModel(format!(
                    "layer {i} bias length {} does not match {} rows",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            prev = layer.out_dim();
        }
        Ok(Self { layers, input_dim })
    }

    /// The identity on `dim` coordinates (one affine layer).
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![ReluLayer { weights: Array2::eye(dim), bias: Array1::zeros(dim) }],
            input_dim: dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("networks are non-empty").out_dim()
    }

    pub fn layers(&self) -> &[ReluLayer] {
        &self.layers
    }

    /// Affine + ReLU evaluation; the last layer stays affine.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim {
            return Err(CvxError::DimMismatch { expected: self.input_dim, got: z.len() });
        }
        let mut x = Array1::from(z.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.weights.dot(&x) + &layer.bias;
            if i != last {
                x.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(x.to_vec())
    }

    /// Forward pass of a scalar-output network.
    pub fn forward_scalar(&self, z: &[f64]) -> Result<f64> {
        let out = self.forward(z)?;
        if out.len() != 1 {
            return Err(CvxError::InvalidModel(format!(
                "expected scalar output, network has {} outputs",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Nonzero-parameter size, hidden width, and depth accounting.
    pub fn complexity(&self) -> Complexity {
        let size = self
            .layers
            .iter()
            .map(|l| {
                l.weights.iter().filter(|w| **w != 0.0).count()
                    + l.bias.iter().filter(|b| **b != 0.0).count()
            })
            .sum();
        let depth = self.layers.len();
        let width = if depth == 1 {
            self.input_dim
        } else {
            self.layers[..depth - 1].iter().map(ReluLayer::out_dim).max().unwrap_or(0)
        };
        Complexity { size, width, depth, activation_stages: depth - 1 }
    }
}

/// How one tournament stage maps `k` current values to gadget neurons and
/// back to `ceil(k/2)` next values.
struct Stage {
    /// values -> pre-activation neurons; entries in {0, +1, -1}
    expand: Array2<f64>,
    /// post-ReLU neurons -> next values; entries in {0, +1, -1}
    combine: Array2<f64>,
}

fn tournament_stage(k: usize) -> Stage {
    let pairs = k / 2;
    let odd = k % 2;
    let neurons = 3 * pairs + 2 * odd;
    let next = pairs + odd;
    let mut expand = Array2::zeros((neurons, k));
    let mut combine = Array2::zeros((next, neurons));
    for p in 0..pairs {
        let (a, b) = (2 * p, 2 * p + 1);
        let row = 3 * p;
        // [a - b, b, -b]
        expand[[row, a]] = 1.0;
        expand[[row, b]] = -1.0;
        expand[[row + 1, b]] = 1.0;
        expand[[row + 2, b]] = -1.0;
        // max(a, b) = ReLU(a - b) + ReLU(b) - ReLU(-b)
        combine[[p, row]] = 1.0;
        combine[[p, row + 1]] = 1.0;
        combine[[p, row + 2]] = -1.0;
    }
    if odd == 1 {
        let v = k - 1;
        let row = 3 * pairs;
        // identity pass-through v = ReLU(v) - ReLU(-v)
        expand[[row, v]] = 1.0;
        expand[[row + 1, v]] = -1.0;
        combine[[pairs, row]] = 1.0;
        combine[[pairs, row + 1]] = -1.0;
    }
    Stage { expand, combine }
}

/// Exact `max(z_1, ..., z_q)` as a ReLU network. For `q >= 2` the result
/// has at most `16q` nonzero parameters, width at most `3q`, and
/// `ceil(log2 q)` activation stages; `q = 1` returns the identity.
pub fn compile_max(q: usize) -> Result<ReluNetwork> {
    if q < 1 {
        return Err(CvxError::NonPositive { context: "tournament arity", value: q as f64 });
    }
    if q == 1 {
        return Ok(ReluNetwork::identity(1));
    }
    let mut stages = Vec::new();
    let mut k = q;
    while k > 1 {
        stages.push(tournament_stage(k));
        k = k / 2 + k % 2;
    }
    // fold each stage's combine into the next stage's expand
    let mut layers = Vec::with_capacity(stages.len() + 1);
    layers.push(ReluLayer {
        weights: stages[0].expand.clone(),
        bias: Array1::zeros(stages[0].expand.nrows()),
    });
    for s in 1..stages.len() {
        let fused = stages[s].expand.dot(&stages[s - 1].combine);
        let rows = fused.nrows();
        layers.push(ReluLayer { weights: fused, bias: Array1::zeros(rows) });
    }
    let last = stages.last().expect("q >= 2 has at least one stage");
    layers.push(ReluLayer { weights: last.combine.clone(), bias: Array1::zeros(1) });
    ReluNetwork::new(layers, q)
}

/// Exact `min(z_1, ..., z_q)`: the sign mirror of [`compile_max`], so that
/// `forward(compile_min(q), z) == -forward(compile_max(q), -z)` holds
/// bit-for-bit.
pub fn compile_min(q: usize) -> Result<ReluNetwork> {
    let mut net = compile_max(q)?;
    if net.layers.len() == 1 {
        // identity: min of one value is the value
        return Ok(net);
    }
    let last = net.layers.len() - 1;
    net.layers[0].weights.mapv_inplace(|w| -w);
    net.layers[last].weights.mapv_inplace(|w| -w);
    net.layers[last].bias.mapv_inplace(|b| -b);
    Ok(net)
}

/// The reconstruction as a composite network: per direction, the inner min
/// network collapses `y_n - <p_m, xi_n>` into an offset once; evaluation
/// feeds `<p_m, x> + offset_m` through the outer max network.
#[derive(Debug, Clone)]
pub struct AssembledNetwork {
    directions: Vec<Vector>,
    offsets: Vec<f64>,
    max_net: ReluNetwork,
    min_net: ReluNetwork,
}

/// Assemble the evaluator for the given samples and slope directions.
pub fn assemble(samples: &SampleSet, directions: &[Vector]) -> Result<AssembledNetwork> {
    if directions.is_empty() {
        return Err(CvxError::Empty("directions"));
    }
    let l = samples.lipschitz();
    for p in directions {
        if p.dim() != samples.dim() {
            return Err(CvxError::DimMismatch { expected: samples.dim(), got: p.dim() });
        }
        if p.norm() > l + 1e-10 {
            return Err(CvxError::InvalidModel(format!(
                "direction norm {} exceeds Lipschitz bound {l}",
                p.norm()
            )));
        }
    }
    let min_net = compile_min(samples.len())?;
    let max_net = compile_max(directions.len())?;
    let offsets = directions
        .iter()
        .map(|p| {
            let gaps: Vec<f64> = samples
                .points()
                .iter()
                .zip(samples.values())
                .map(|(xi, y)| y - dot(p, xi))
                .collect();
            min_net.forward_scalar(&gaps)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AssembledNetwork { directions: directions.to_vec(), offsets, max_net, min_net })
}

impl AssembledNetwork {
    /// Rebuild the evaluator from a stored model: the per-direction
    /// offsets are already collapsed into the intercepts, so the inner min
    /// network degenerates to the identity.
    pub fn from_dualnet(net: &crate::dual::DualNet) -> Result<AssembledNetwork> {
        Ok(AssembledNetwork {
            directions: net.directions().to_vec(),
            offsets: net.intercepts().to_vec(),
            max_net: compile_max(net.size())?,
            min_net: compile_min(1)?,
        })
    }

    pub fn evaluate(&self, x: &Vector) -> Result<f64> {
        let dim = self.directions[0].dim();
        if x.dim() != dim {
            return Err(CvxError::DimMismatch { expected: dim, got: x.dim() });
        }
        let v: Vec<f64> =
            self.directions.iter().zip(&self.offsets).map(|(p, c)| dot(p, x) + c).collect();
        self.max_net.forward_scalar(&v)
    }

    pub fn directions(&self) -> &[Vector] {
        &self.directions
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn max_net(&self) -> &ReluNetwork {
        &self.max_net
    }

    pub fn min_net(&self) -> &ReluNetwork {
        &self.min_net
    }

    /// Flatten into a single ReLU network over the ambient input: the
    /// direction inner products and offsets fold into the first affine
    /// layer of the max network.
    pub fn fused_mlp(&self) -> ReluNetwork {
        let dim = self.directions[0].dim();
        let m = self.directions.len();
        let mut p_mat = Array2::zeros((m, dim));
        for (r, p) in self.directions.iter().enumerate() {
            for (c, v) in p.coords().iter().enumerate() {
                p_mat[[r, c]] = *v;
            }
        }
        let q = Array1::from(self.offsets.clone());
        let first = &self.max_net.layers[0];
        let fused_first = ReluLayer {
            weights: first.weights.dot(&p_mat),
            bias: first.weights.dot(&q) + &first.bias,
        };
        let mut layers = vec![fused_first];
        layers.extend(self.max_net.layers[1..].iter().cloned());
        ReluNetwork::new(layers, dim).expect("fused layers chain by construction")
    }
}

// --- persistence -----------------------------------------------------------

pub const RELUMLP_FORMAT: &str = "relumlp/1";

#[derive(Debug, Serialize, Deserialize)]
pub struct ReluLayerFile {
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Versioned JSON document for [`ReluNetwork`]; the complexity block is
/// recomputed on save so round trips are byte-stable.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReluNetworkFile {
    pub format: String,
    pub input_dim: usize,
    pub layers: Vec<ReluLayerFile>,
    pub complexity: Complexity,
}

impl ReluNetwork {
    pub fn to_file(&self) -> ReluNetworkFile {
        ReluNetworkFile {
            format: RELUMLP_FORMAT.to_string(),
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| ReluLayerFile {
                    weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: l.bias.to_vec(),
                })
                .collect(),
            complexity: self.complexity(),
        }
    }

    pub fn from_file(file: ReluNetworkFile) -> Result<ReluNetwork> {
        if file.format != RELUMLP_FORMAT {
            return Err(CvxError::Parse(format!(
                "unsupported format '{}' (expected {RELUMLP_FORMAT})",
                file.format
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            let rows = l.weights.len();
            let cols = l.weights.first().map_or(0, Vec::len);
            if rows == 0 || cols == 0 {
                return Err(CvxError::InvalidModel(format!("layer {i} is empty")));
            }
            let mut w = Array2::zeros((rows, cols));
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != cols {
                    return Err(CvxError::InvalidModel(format!("layer {i} row {r} is ragged")));
                }
                for (c, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(CvxError::NonFinite { context: "network weight" });
                    }
                    w[[r, c]] = *v;
                }
            }
            if l.b.iter().any(|v| !v.is_finite()) {
                return Err(CvxError::NonFinite { context: "network bias" });
            }
            layers.push(ReluLayer { weights: w, bias: Array1::from(l.b) });
        }
        ReluNetwork::new(layers, file.input_dim)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<ReluNetwork> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::DualNet;
    use crate::rng;
    use rand::Rng;

    fn v(coords: &[f64]) -> Vector {
        Vector::new(coords.to_vec()).unwrap()
    }

    fn direct_max(z: &[f64]) -> f64 {
        z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn direct_min(z: &[f64]) -> f64 {
        z.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// |a - b| within `ulps` units at the magnitude of the inputs.
    fn ulp_close(a: f64, b: f64, scale: f64, ulps: f64) -> bool {
        (a - b).abs() <= ulps * f64::EPSILON * scale.max(1.0)
    }

    #[test]
    fn forward_basics() {
        let id = ReluNetwork::identity(3);
        assert_eq!(id.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert_eq!(id.complexity().width, 3);

        let affine = ReluNetwork::new(
            vec![ReluLayer {
                weights: Array2::from_shape_vec((1, 1), vec![2.0]).unwrap(),
                bias: Array1::from(vec![3.0]),
            }],
            1,
        )
        .unwrap();
        assert_eq!(affine.forward_scalar(&[1.0]).unwrap(), 5.0);
        assert!(affine.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn max_examples() {
        let m2 = compile_max(2).unwrap();
        assert_eq!(m2.forward_scalar(&[3.0, 5.0]).unwrap(), 5.0);
        assert_eq!(m2.forward_scalar(&[1.0, -1.0]).unwrap(), 1.0);
        let m4 = compile_max(4).unwrap();
        assert_eq!(m4.forward_scalar(&[-1.0, 0.0, 7.0, 7.0]).unwrap(), 7.0);
        assert!(compile_max(0).is_err());
    }

    #[test]
    fn min_examples() {
        let m2 = compile_min(2).unwrap();
        assert_eq!(m2.forward_scalar(&[3.0, 5.0]).unwrap(), 3.0);
        let m3 = compile_min(3).unwrap();
        assert_eq!(m3.forward_scalar(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn tournaments_match_direct_extrema() {
        let mut r = rng::stream(61, "tournament");
        for q in [2usize, 3, 5, 7, 8, 13, 16, 31] {
            let max_net = compile_max(q).unwrap();
            let min_net = compile_min(q).unwrap();
            for _ in 0..1000 {
                let z: Vec<f64> = (0..q).map(|_| r.gen_range(-10.0..10.0)).collect();
                let scale = z.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let got_max = max_net.forward_scalar(&z).unwrap();
                let got_min = min_net.forward_scalar(&z).unwrap();
                assert!(
                    ulp_close(got_max, direct_max(&z), scale, 4.0),
                    "max mismatch at q={q}: {got_max} vs {}",
                    direct_max(&z)
                );
                assert!(
                    ulp_close(got_min, direct_min(&z), scale, 4.0),
                    "min mismatch at q={q}: {got_min} vs {}",
                    direct_min(&z)
                );
            }
        }
    }

    #[test]
    fn min_is_exact_mirror_of_max() {
        let mut r = rng::stream(67, "mirror");
        for q in 1..=17usize {
            let max_net = compile_max(q).unwrap();
            let min_net = compile_min(q).unwrap();
            for _ in 0..200 {
                let z: Vec<f64> = (0..q).map(|_| r.gen_range(-5.0..5.0)).collect();
                let neg: Vec<f64> = z.iter().map(|x| -x).collect();
                let lhs = min_net.forward_scalar(&z).unwrap();
                let rhs = -max_net.forward_scalar(&neg).unwrap();
                assert_eq!(lhs.to_bits(), rhs.to_bits(), "q={q}");
            }
        }
    }

    #[test]
    fn complexity_bounds() {
        let c2 = compile_max(2).unwrap().complexity();
        assert!(c2.size <= 32 && c2.width <= 6 && c2.depth <= 2);

        let c16 = compile_min(16).unwrap().complexity();
        assert_eq!(c16.depth, 5); // ceil(log2 16) stages + read-out
        assert_eq!(c16.activation_stages, 4);

        for q in 2..=64usize {
            let c = compile_max(q).unwrap().complexity();
            let stages = (q as f64).log2().ceil() as usize;
            assert!(c.size <= 16 * q, "size {} > 16q at q={q}", c.size);
            assert!(c.width <= 3 * q, "width {} > 3q at q={q}", c.width);
            assert_eq!(c.activation_stages, stages, "stage count at q={q}");
        }
    }

    #[test]
    fn compiled_max_is_convex() {
        let mut r = rng::stream(71, "max-convex");
        let net = compile_max(6).unwrap();
        for _ in 0..500 {
            let a: Vec<f64> = (0..6).map(|_| r.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| r.gen_range(-3.0..3.0)).collect();
            let t: f64 = r.gen_range(0.0..1.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let fm = net.forward_scalar(&mid).unwrap();
            let fa = net.forward_scalar(&a).unwrap();
            let fb = net.forward_scalar(&b).unwrap();
            assert!(fm <= t * fa + (1.0 - t) * fb + 1e-12);
        }
    }

    fn line_samples() -> SampleSet {
        SampleSet::new(vec![v(&[0.0]), v(&[0.5]), v(&[1.0])], vec![0.0, 0.5, 1.0], 1.0).unwrap()
    }

    #[test]
    fn assembled_network_matches_dual_evaluate() {
        // single direction and sample: f(x) = <p, x> + (y - <p, xi>)
        let one = SampleSet::new(vec![v(&[0.5])], vec![2.0], 1.0).unwrap();
        let asm = assemble(&one, &[v(&[1.0])]).unwrap();
        assert_eq!(asm.evaluate(&v(&[2.0])).unwrap(), 2.0 + (2.0 - 0.5));

        let s = line_samples();
        let dirs = vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])];
        let asm = assemble(&s, &dirs).unwrap();
        assert_eq!(asm.evaluate(&v(&[0.75])).unwrap(), 0.75);

        // random instances against the max-affine evaluator
        let mut r = rng::stream(73, "assemble");
        for seed in 0..5u64 {
            let f = crate::reference::random_max_affine(2, 4, 1.0, seed);
            let pts: Vec<Vector> =
                (0..5).map(|_| v(&[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])).collect();
            let ys: Vec<f64> = pts.iter().map(|p| f.evaluate(p)).collect();
            let s = SampleSet::new(pts, ys, 1.0).unwrap();
            let dirs: Vec<Vector> = (0..9)
                .map(|_| {
                    let ang: f64 = r.gen_range(0.0..std::f64::consts::TAU);
                    let rad: f64 = r.gen::<f64>();
                    v(&[rad * ang.cos(), rad * ang.sin()])
                })
                .collect();
            let net = DualNet::from_directions(&s, dirs.clone()).unwrap();
            let asm = assemble(&s, &dirs).unwrap();
            for _ in 0..200 {
                let x = v(&[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]);
                let a = asm.evaluate(&x).unwrap();
                let d = net.evaluate(&x).unwrap();
                assert!((a - d).abs() <= 1e-12, "assembled {a} vs dual {d}");
            }
        }
    }

    #[test]
    fn fused_mlp_agrees_with_composite() {
        let s = line_samples();
        let dirs = vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])];
        let asm = assemble(&s, &dirs).unwrap();
        let fused = asm.fused_mlp();
        assert_eq!(fused.input_dim(), 1);
        let mut r = rng::stream(79, "fused");
        for _ in 0..200 {
            let x = v(&[r.gen_range(-2.0..2.0)]);
            let a = asm.evaluate(&x).unwrap();
            let f = fused.forward_scalar(x.coords()).unwrap();
            assert!((a - f).abs() <= 1e-9);
        }
        // M = 1: the fused network is a single affine layer
        let one = SampleSet::new(vec![v(&[0.0])], vec![1.0], 1.0).unwrap();
        let asm = assemble(&one, &[v(&[0.5])]).unwrap();
        assert_eq!(asm.fused_mlp().complexity().depth, 1);
    }

    #[test]
    fn json_round_trip() {
        let net = compile_max(5).unwrap();
        let text = net.to_json().unwrap();
        let reloaded = ReluNetwork::from_json(&text).unwrap();
        assert_eq!(reloaded, net);
        assert_eq!(reloaded.to_json().unwrap(), text);
    }
}
