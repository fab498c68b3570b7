//! Finite-dimensional Hilbert-space primitives.
//!
//! Everything downstream works over a fixed orthonormal coordinate frame:
//! [`Vector`] is a point of the ambient space, [`SampleSet`] carries paired
//! observations of a Lipschitz convex function, [`Subspace`] is an
//! orthonormal basis produced by modified Gram-Schmidt, and the net
//! constructors ([`greedy_net`], [`ball_net`]) build finite coverings used
//! to discretize dual balls.
//!
//! All coverings use closed balls: a point is covered when its distance to
//! the net is `<= radius`. Types are immutable after construction and all
//! operations are pure.

use serde::{Deserialize, Serialize};

use crate::error::{CvxError, Result};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative residual below which a Gram-Schmidt direction is treated as
/// linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Slack applied to the pairwise Lipschitz consistency check so that data
/// generated from an exactly-L-Lipschitz function is not rejected over
/// float rounding.
const CONSISTENCY_SLACK: f64 = 1e-9;

/// A point of the ambient space; coordinates are finite and `dim >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    coords: Vec<f64>,
}

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CvxError::Empty("vector"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CvxError::NonFinite { context: "vector coordinate" });
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coords: vec![0.0; dim.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        dot(self, self).sqrt()
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector { coords: self.coords.iter().map(|x| c * x).collect() }
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        }
    }

    /// self += c * other
    pub(crate) fn axpy(&mut self, c: f64, other: &Vector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += c * b;
        }
    }
}

/// Unchecked dot product; callers guarantee matching dims.
pub(crate) fn dot(a: &Vector, b: &Vector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.coords.iter().zip(&b.coords).map(|(x, y)| x * y).sum()
}

/// Inner product `<a, b> = sum a_i b_i`. Errors on dimension mismatch.
pub fn inner(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(CvxError::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(dot(a, b))
}

/// Paired data `(xi_n, y_n)` from an `L`-Lipschitz convex function, with the
/// pairwise consistency `|y_i - y_j| <= L * ||xi_i - xi_j||` validated at
/// construction and the diameter of the point cloud cached.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<Vector>,
    values: Vec<f64>,
    lipschitz: f64,
    diameter: f64,
}

impl SampleSet {
    pub fn new(points: Vec<Vector>, values: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(CvxError::Empty("sample set"));
        }
        if points.len() != values.len() {
            return Err(CvxError::LengthMismatch { left: points.len(), right: values.len() });
        }
        let dim = points[0].dim();
        for p in &points {
            if p.dim() != dim {
                return Err(CvxError::DimMismatch { expected: dim, got: p.dim() });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CvxError::NonFinite { context: "sample value" });
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(CvxError::NonPositive { context: "lipschitz constant", value: lipschitz });
        }
        let mut diameter = 0.0f64;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let d = points[i].dist(&points[j]);
                diameter = diameter.max(d);
                let gap = (values[i] - values[j]).abs();
                let allowance = lipschitz * d;
                if gap > allowance * (1.0 + CONSISTENCY_SLACK) + 1e-12 {
                    return Err(CvxError::DataInconsistency {
                        i,
                        j,
                        value_gap: gap,
                        lipschitz_allowance: allowance,
                        lipschitz,
                    });
                }
            }
        }
        Ok(Self { points, values, lipschitz, diameter })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty sets
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

/// An orthonormal basis of a linear subspace of the ambient space.
/// `dim() == 0` (empty basis) represents the zero subspace.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Vec<Vector>,
    ambient_dim: usize,
}

impl Subspace {
    /// Orthonormalize `vectors` by modified Gram-Schmidt, discarding
    /// directions whose residual falls below [`RANK_TOLERANCE`] relative to
    /// their original norm.
    pub fn span(vectors: &[Vector], ambient_dim: usize) -> Result<Self> {
        let mut basis: Vec<Vector> = Vec::new();
        for v in vectors {
            if v.dim() != ambient_dim {
                return Err(CvxError::DimMismatch { expected: ambient_dim, got: v.dim() });
            }
            let original = v.norm();
            if original <= 0.0 {
                continue;
            }
            let mut r = v.clone();
            for b in &basis {
                let c = dot(&r, b);
                r.axpy(-c, b);
            }
            let res = r.norm();
            if res > RANK_TOLERANCE * original {
                basis.push(r.scaled(1.0 / res));
            }
            if basis.len() == ambient_dim {
                break;
            }
        }
        Ok(Self { basis, ambient_dim })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    /// Orthogonal projection `P x = sum_k <b_k, x> b_k`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.ambient_dim {
            return Err(CvxError::DimMismatch { expected: self.ambient_dim, got: x.dim() });
        }
        let mut out = Vector::zeros(self.ambient_dim);
        for b in &self.basis {
            out.axpy(dot(b, x), b);
        }
        Ok(out)
    }

    /// Coefficients `<b_k, x>` of `x` against the basis.
    pub fn coefficients(&self, x: &Vector) -> Result<Vec<f64>> {
        if x.dim() != self.ambient_dim {
            return Err(CvxError::DimMismatch { expected: self.ambient_dim, got: x.dim() });
        }
        Ok(self.basis.iter().map(|b| dot(b, x)).collect())
    }

    /// Ambient vector `sum_k c_k b_k`.
    pub fn from_coefficients(&self, c: &[f64]) -> Result<Vector> {
        if c.len() != self.basis.len() {
            return Err(CvxError::DimMismatch { expected: self.basis.len(), got: c.len() });
        }
        let mut out = Vector::zeros(self.ambient_dim);
        for (ck, b) in c.iter().zip(&self.basis) {
            out.axpy(*ck, b);
        }
        Ok(out)
    }

    /// Max deviation of the Gram matrix from the identity; used by tests.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let g = dot(a, b);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Span of the sample points together with optional extra points.
pub fn select_subspace(samples: &SampleSet, extra: &[Vector]) -> Result<Subspace> {
    let mut vs: Vec<Vector> = samples.points().to_vec();
    vs.extend_from_slice(extra);
    Subspace::span(&vs, samples.dim())
}

/// First-fit greedy net: scan `candidates` in input order, keeping a point
/// whenever it is farther than `radius` from everything kept so far. The
/// result is `radius`-separated and covers every candidate within `radius`.
pub fn greedy_net(candidates: &[Vector], radius: f64) -> Result<Vec<Vector>> {
    if candidates.is_empty() {
        return Err(CvxError::Empty("net candidates"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CvxError::NonPositive { context: "net radius", value: radius });
    }
    let dim = candidates[0].dim();
    for c in candidates {
        if c.dim() != dim {
            return Err(CvxError::DimMismatch { expected: dim, got: c.dim() });
        }
    }
    let mut net: Vec<Vector> = Vec::new();
    for c in candidates {
        if net.iter().all(|s| s.dist(c) > radius) {
            net.push(c.clone());
        }
    }
    Ok(net)
}

/// Knobs for [`ball_net`]. `max_candidates` bounds the lattice enumeration;
/// `sample_candidates` is the draw count for the sampled path used above
/// three dimensions.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub max_candidates: usize,
    pub sample_candidates: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { max_candidates: 400_000, sample_candidates: 20_000, seed: 0 }
    }
}

/// Number of lattice points (spacing `eta/sqrt(d)`) that the lattice path of
/// [`ball_net`] would enumerate. Used to decide feasibility before building.
pub fn lattice_candidate_count(d: usize, lipschitz: f64, eta: f64) -> usize {
    if d == 0 || eta >= 2.0 * lipschitz {
        return 1;
    }
    let spacing = eta / (d as f64).sqrt();
    let k = (lipschitz / spacing).floor() as usize + 1;
    let per_axis = 2 * k + 1;
    let mut total: usize = 1;
    for _ in 0..d {
        total = total.saturating_mul(per_axis);
    }
    total
}

/// Build an `eta`-net of `subspace âˆ© closed-ball(0, L)`, returned as ambient
/// vectors of norm at most `L` lying in the subspace.
///
/// For `d <= 3` the candidates are a deterministic axis-aligned lattice of
/// spacing `eta/sqrt(d)` (points just outside the ball are pulled back onto
/// the sphere), pruned by first-fit greedy separation at radius `eta`. The
/// separation guarantees the count bound `M <= (1 + 2L/eta)^d`.
///
/// For `d > 3` the lattice is intractable, so candidates are seeded uniform
/// draws from the ball. The covering guarantee is then only probabilistic,
/// improving with `sample_candidates`; the separation bound on the count
/// still holds.
pub fn ball_net(
    subspace: &Subspace,
    lipschitz: f64,
    eta: f64,
    cfg: &NetConfig,
) -> Result<Vec<Vector>> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(CvxError::NonPositive { context: "lipschitz constant", value: lipschitz });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(CvxError::NonPositive { context: "net radius eta", value: eta });
    }
    let d = subspace.dim();
    // A ball of diameter 2L is covered by its center once eta >= 2L.
    if d == 0 || eta >= 2.0 * lipschitz {
        return Ok(vec![Vector::zeros(subspace.ambient_dim())]);
    }

    let coords = if d <= 3 {
        let needed = lattice_candidate_count(d, lipschitz, eta);
        if needed > cfg.max_candidates {
            return Err(CvxError::CandidateBudget { budget: cfg.max_candidates, required: needed });
        }
        lattice_ball_candidates(d, lipschitz, eta)
    } else {
        sampled_ball_candidates(d, lipschitz, cfg)
    };

    let net = greedy_net_grid(&coords, eta, lipschitz);
    net.iter().map(|c| subspace.from_coefficients(c)).collect()
}

/// Lattice candidates in subspace coordinates: spacing `eta/sqrt(d)`, points
/// with norm in `(L, L + half-diagonal]` clamped onto the sphere so the
/// boundary stays covered.
fn lattice_ball_candidates(d: usize, l: f64, eta: f64) -> Vec<Vec<f64>> {
    let spacing = eta / (d as f64).sqrt();
    let half_diag = 0.5 * spacing * (d as f64).sqrt();
    let k = (l / spacing).floor() as i64 + 1;
    let mut out = Vec::new();
    let mut idx = vec![-k; d];
    loop {
        let p: Vec<f64> = idx.iter().map(|i| *i as f64 * spacing).collect();
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r <= l {
            out.push(p);
        } else if r <= l + half_diag {
            let scale = l / r;
            out.push(p.iter().map(|x| x * scale).collect());
        }
        // lexicographic advance
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] <= k {
                break;
            }
            idx[axis] = -k;
        }
    }
}

/// Seeded uniform draws from the d-ball of radius `l` (normal direction,
/// radius via the u^(1/d) transform).
fn sampled_ball_candidates(d: usize, l: f64, cfg: &NetConfig) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(cfg.seed, "ball-net-samples");
    let count = cfg.sample_candidates.min(cfg.max_candidates).max(1);
    let mut out = Vec::with_capacity(count + 1);
    out.push(vec![0.0; d]);
    for _ in 0..count {
        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen::<f64>();
        let r = l * u.powf(1.0 / d as f64);
        out.push(g.iter().map(|x| x * r / norm).collect());
    }
    out
}

/// First-fit greedy over raw coordinate rows, accelerated by hashing kept
/// points into boxes of side `radius`. Produces exactly the same set as the
/// naive scan in [`greedy_net`].
fn greedy_net_grid(candidates: &[Vec<f64>], radius: f64, l: f64) -> Vec<Vec<f64>> {
    use std::collections::HashMap;
    let d = candidates.first().map_or(0, |c| c.len());
    let inv = 1.0 / radius;
    let key = |p: &[f64]| -> Vec<i64> {
        p.iter().map(|x| ((x + 2.0 * l) * inv).floor() as i64).collect()
    };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();

    let mut neighbor = vec![0i64; d];
    for c in candidates {
        let k = key(c);
        let mut blocked = false;
        // scan the 3^d neighborhood of the candidate's cell
        let mut offsets = vec![-1i64; d];
        'outer: loop {
            for (n, (base, off)) in neighbor.iter_mut().zip(k.iter().zip(&offsets)) {
                *n = base + off;
            }
            if let Some(ids) = cells.get(&neighbor) {
                for &i in ids {
                    let dist2: f64 = kept[i]
                        .iter()
                        .zip(c.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if dist2.sqrt() <= radius {
                        blocked = true;
                        break 'outer;
                    }
                }
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                offsets[axis] += 1;
                if offsets[axis] <= 1 {
                    break;
                }
                offsets[axis] = -1;
            }
        }
        if !blocked {
            cells.entry(k).or_default().push(kept.len());
            kept.push(c.clone());
        }
    }
    kept
}
