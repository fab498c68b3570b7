//! Primal-side machinery: the upper McShane extension of the sample data
//! and its convex envelope, computed by minimizing
//! `sum_n w_n y_n + L * ||x - sum_n w_n xi_n||` over the probability
//! simplex. The envelope interpolates the data, is convex and L-Lipschitz,
//! and serves as the reference oracle for the dual reconstruction.

use crate::error::{CvxError, Result};
use crate::geometry::{dot, SampleSet, Vector};

/// Barycentric weights on the probability simplex: entries are nonnegative
/// and sum to one within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    weights: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CvxError::Empty("simplex weights"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CvxError::NonFinite { context: "simplex weight" });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(CvxError::Parse(format!("simplex weights sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n.max(1)] }
    }

    pub fn vertex(n: usize, k: usize) -> Self {
        let mut w = vec![0.0; n.max(1)];
        w[k] = 1.0;
        Self { weights: w }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Upper McShane extension `min_n { y_n + L * ||x - xi_n|| }`.
///
/// The largest L-Lipschitz function lying below every cone raised over a
/// sample; it interpolates consistent data but is generally non-convex.
pub fn mcshane_upper(samples: &SampleSet, x: &Vector) -> Result<f64> {
    if x.dim() != samples.dim() {
        return Err(CvxError::DimMismatch { expected: samples.dim(), got: x.dim() });
    }
    let l = samples.lipschitz();
    Ok(samples
        .points()
        .iter()
        .zip(samples.values())
        .map(|(xi, y)| y + l * x.dist(xi))
        .fold(f64::INFINITY, f64::min))
}

/// Solver diagnostics for [`primal_envelope_diag`].
#[derive(Debug, Clone)]
pub struct EnvelopeDiagnostics {
    pub fw_iterations: usize,
    pub fw_gap: f64,
    pub budget_exhausted: bool,
    pub weights: SimplexWeights,
}

/// Gram-matrix view of the envelope objective for a fixed query point, so
/// that objective and gradient evaluations cost O(N^2) regardless of the
/// ambient dimension.
struct EnvelopeObjective<'a> {
    values: &'a [f64],
    lipschitz: f64,
    gram: Vec<Vec<f64>>,
    xi_dot_x: Vec<f64>,
    x_dot_x: f64,
}

impl<'a> EnvelopeObjective<'a> {
    fn new(samples: &'a SampleSet, x: &Vector) -> Self {
        let pts = samples.points();
        let n = pts.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&pts[i], &pts[j]);
                gram[i][j] = g;
                gram[j][i] = g;
            }
        }
        let xi_dot_x = pts.iter().map(|p| dot(p, x)).collect();
        Self {
            values: samples.values(),
            lipschitz: samples.lipschitz(),
            gram,
            xi_dot_x,
            x_dot_x: dot(x, x),
        }
    }

    fn n(&self) -> usize {
        self.values.len()
    }

    /// ||x - sum w_n xi_n||, clamped at zero against rounding.
    fn residual_norm(&self, w: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..w.len() {
            if w[i] == 0.0 {
                continue;
            }
            lin += w[i] * self.xi_dot_x[i];
            for j in 0..w.len() {
                if w[j] != 0.0 {
                    quad += w[i] * w[j] * self.gram[i][j];
                }
            }
        }
        (self.x_dot_x - 2.0 * lin + quad).max(0.0).sqrt()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let lin: f64 = w.iter().zip(self.values).map(|(wi, yi)| wi * yi).sum();
        lin + self.lipschitz * self.residual_norm(w)
    }

    /// Subgradient; at a zero residual the norm term contributes nothing
    /// (the zero subgradient of `|| . ||` at the origin).
    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.residual_norm(w);
        let mut grad: Vec<f64> = self.values.to_vec();
        if r > 1e-300 {
            for i in 0..w.len() {
                let mut gw = 0.0;
                for j in 0..w.len() {
                    gw += self.gram[i][j] * w[j];
                }
                // <u - x, xi_i> / ||u - x||
                grad[i] += self.lipschitz * (gw - self.xi_dot_x[i]) / r;
            }
        }
        grad
    }
}

const FW_GAP_TOLERANCE: f64 = 1e-10;
const ZOOM_MAX_N: usize = 32;

/// Convex envelope of the McShane extension at `x`, i.e. the minimum of
/// `sum w_n y_n + L * ||x - sum w_n xi_n||` over the simplex.
///
/// Runs Frank-Wolfe with exact line search for up to `solver_budget`
/// iterations; small instances are additionally polished by an exhaustive
/// grid (N <= 3, step 1e-3) and a pairwise-exchange pattern refinement
/// (N <= 32) down to step 1e-9. The returned value is always an upper bound
/// on the true minimum.
pub fn primal_envelope(samples: &SampleSet, x: &Vector, solver_budget: usize) -> Result<f64> {
    primal_envelope_diag(samples, x, solver_budget).map(|(v, _)| v)
}

/// As [`primal_envelope`] but also returns solver diagnostics.
pub fn primal_envelope_diag(
    samples: &SampleSet,
    x: &Vector,
    solver_budget: usize,
) -> Result<(f64, EnvelopeDiagnostics)> {
    if x.dim() != samples.dim() {
        return Err(CvxError::DimMismatch { expected: samples.dim(), got: x.dim() });
    }
    let budget = solver_budget.max(1);
    let obj = EnvelopeObjective::new(samples, x);
    let n = obj.n();

    let mut w = SimplexWeights::uniform(n).weights;
    let mut best = obj.value(&w);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut exhausted = true;

    for it in 0..budget {
        iterations = it + 1;
        let grad = obj.gradient(&w);
        let k = argmin(&grad);
        // FW gap <grad, w - e_k> bounds the possible decrease
        let dir_gap: f64 =
            grad.iter().zip(&w).map(|(g, wi)| g * wi).sum::<f64>() - grad[k];
        gap = dir_gap;
        if dir_gap <= FW_GAP_TOLERANCE * (1.0 + best.abs()) {
            exhausted = false;
            break;
        }
        let gamma = line_search(&obj, &w, k);
        if gamma <= 0.0 {
            exhausted = false;
            break;
        }
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= 1.0 - gamma;
            if i == k {
                *wi += gamma;
            }
        }
        best = obj.value(&w);
    }

    if n <= 3 {
        let (gw, gv) = grid_minimum(&obj);
        if gv < best {
            best = gv;
            w = gw;
        }
    }
    if n <= ZOOM_MAX_N {
        let (zw, zv) = exchange_zoom(&obj, w.clone(), best);
        if zv < best {
            best = zv;
            w = zw;
        }
        // the norm term vanishes on the face { sum w_n xi_n = x }, where the
        // objective is linear and local exchanges stall; check its basic
        // solutions explicitly
        if let Some((fw, fv)) = hull_face_minimum(samples, x, &obj) {
            if fv < best {
                best = fv;
                w = fw;
            }
        }
    }

    let diag = EnvelopeDiagnostics {
        fw_iterations: iterations,
        fw_gap: gap,
        budget_exhausted: exhausted,
        weights: SimplexWeights::new_normalized(w),
    };
    Ok((best, diag))
}

impl SimplexWeights {
    /// Clamp tiny negatives and renormalize; used to report solver iterates.
    fn new_normalized(mut w: Vec<f64>) -> Self {
        for wi in &mut w {
            if *wi < 0.0 {
                *wi = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            for wi in &mut w {
                *wi /= s;
            }
        }
        Self { weights: w }
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut k = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v < xs[k] {
            k = i;
        }
    }
    k
}

/// Exact line search on the segment `w + gamma (e_k - w)` by ternary search;
/// the restriction of the objective to the segment is convex.
fn line_search(obj: &EnvelopeObjective, w: &[f64], k: usize) -> f64 {
    let eval = |gamma: f64| -> f64 {
        let mut trial: Vec<f64> = w.iter().map(|wi| wi * (1.0 - gamma)).collect();
        trial[k] += gamma;
        obj.value(&trial)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1) <= eval(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let gamma = 0.5 * (lo + hi);
    if eval(gamma) < eval(0.0) {
        gamma
    } else {
        0.0
    }
}

/// Exhaustive simplex grid at step 1e-3 for N <= 3, then three zoom rounds
/// around the incumbent down to step 1e-6.
fn grid_minimum(obj: &EnvelopeObjective) -> (Vec<f64>, f64) {
    let n = obj.n();
    match n {
        1 => (vec![1.0], obj.value(&[1.0])),
        2 => {
            let mut best = (SimplexWeights::uniform(n).weights, f64::INFINITY);
            best.1 = obj.value(&best.0);
            scan_segment(obj, &mut best, 0.5, 1e-3, 500);
            let mut step = 1e-3;
            for _ in 0..3 {
                let center = best.0[0];
                step /= 10.0;
                scan_segment(obj, &mut best, center, step, 20);
            }
            best
        }
        _ => {
            let mut best = (SimplexWeights::uniform(n).weights, f64::INFINITY);
            best.1 = obj.value(&best.0);
            scan_triangle(obj, &mut best, 0.5, 0.25, 1e-3, 500);
            let mut step = 1e-3;
            for _ in 0..3 {
                let (c0, c1) = (best.0[0], best.0[1]);
                step /= 10.0;
                scan_triangle(obj, &mut best, c0, c1, step, 20);
            }
            best
        }
    }
}

fn scan_segment(
    obj: &EnvelopeObjective,
    best: &mut (Vec<f64>, f64),
    center: f64,
    step: f64,
    count: i64,
) {
    for i in -count..=count {
        let a = (center + i as f64 * step).clamp(0.0, 1.0);
        let w = [a, 1.0 - a];
        let v = obj.value(&w);
        if v < best.1 {
            *best = (w.to_vec(), v);
        }
    }
}

fn scan_triangle(
    obj: &EnvelopeObjective,
    best: &mut (Vec<f64>, f64),
    c0: f64,
    c1: f64,
    step: f64,
    count: i64,
) {
    for i in -count..=count {
        let a = c0 + i as f64 * step;
        if !(0.0..=1.0).contains(&a) {
            continue;
        }
        for j in -count..=count {
            let b = c1 + j as f64 * step;
            if b < 0.0 || a + b > 1.0 {
                continue;
            }
            let w = [a, b, 1.0 - a - b];
            let v = obj.value(&w);
            if v < best.1 {
                *best = (w.to_vec(), v);
            }
        }
    }
}

/// Pattern refinement along pairwise exchange directions `e_i - e_j`. Moves
/// stay feasible by construction (the mass moved is capped by the current
/// `w_j`), so vertices are reached exactly. The step halves whenever no
/// exchange improves the incumbent.
fn exchange_zoom(obj: &EnvelopeObjective, mut w: Vec<f64>, mut best: f64) -> (Vec<f64>, f64) {
    let n = obj.n();
    // the vertices themselves first; interpolation optima sit there
    for k in 0..n {
        let vertex = SimplexWeights::vertex(n, k);
        let v = obj.value(vertex.as_slice());
        if v < best {
            best = v;
            w = vertex.as_slice().to_vec();
        }
    }
    let mut step = 0.5f64;
    while step > 1e-9 {
        let mut improved = false;
        // pairwise exchanges: move `step` of mass from j to i
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                let delta = step.min(w[j]);
                if delta <= 0.0 {
                    continue;
                }
                let mut trial = w.clone();
                trial[j] = (trial[j] - delta).max(0.0);
                trial[i] += delta;
                let v = obj.value(&trial);
                if v < best {
                    best = v;
                    w = trial;
                    improved = true;
                }
            }
        }
        // vertex contractions (1 - step) w + step e_k: these descend from
        // points where the norm term is kinked and exchanges stall
        for k in 0..n {
            let mut trial: Vec<f64> = w.iter().map(|wi| wi * (1.0 - step)).collect();
            trial[k] += step;
            let v = obj.value(&trial);
            if v < best {
                best = v;
                w = trial;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (w, best)
}

/// Exact minimum of the objective over the face `{ w : sum w_n xi_n = x }`,
/// where it reduces to the linear program `min sum w_n y_n`. Basic feasible
/// solutions have support at most `affine rank + 1`, so for small instances
/// they can be enumerated outright. Returns the best feasible candidate
/// (evaluated through the full objective, so the result is always a valid
/// upper bound), or None when the face is empty or the instance too large.
fn hull_face_minimum(
    samples: &SampleSet,
    x: &Vector,
    obj: &EnvelopeObjective,
) -> Option<(Vec<f64>, f64)> {
    let n = samples.len();
    let pts = samples.points();
    // affine rank of the sample cloud
    let diffs: Vec<Vector> = pts.iter().skip(1).map(|p| p.sub(&pts[0])).collect();
    let rank = crate::geometry::Subspace::span(&diffs, samples.dim()).ok()?.dim();
    if rank > 3 || n > ZOOM_MAX_N {
        return None;
    }
    let support = rank + 1;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut subset = vec![0usize; support];
    enumerate_subsets(n, support, &mut subset, 0, 0, &mut |s| {
        if let Some(w) = face_solution(pts, x, s) {
            let v = obj.value(&w);
            if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                best = Some((w, v));
            }
        }
    });
    best
}

fn enumerate_subsets(
    n: usize,
    k: usize,
    buf: &mut Vec<usize>,
    depth: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        visit(buf);
        return;
    }
    for i in start..n {
        buf[depth] = i;
        enumerate_subsets(n, k, buf, depth + 1, i + 1, visit);
    }
}

/// Solve `sum_{i in subset} w_i xi_i = x`, `sum w_i = 1`, `w >= 0` by least
/// squares on the subset; returns the full-length weight vector when the
/// residual is negligible and the weights are (numerically) nonnegative.
fn face_solution(pts: &[Vector], x: &Vector, subset: &[usize]) -> Option<Vec<f64>> {
    let k = subset.len();
    let dim = x.dim();
    // normal equations for the (dim + 1) x k system
    let mut ata = vec![vec![0.0f64; k]; k];
    let mut atb = vec![0.0f64; k];
    for a in 0..k {
        for b in 0..k {
            ata[a][b] = dot(&pts[subset[a]], &pts[subset[b]]) + 1.0;
        }
        atb[a] = dot(&pts[subset[a]], x) + 1.0;
    }
    let w_s = solve_small(&mut ata, &mut atb)?;
    if w_s.iter().any(|wi| *wi < -1e-9) {
        return None;
    }
    // verify the candidate actually represents x
    let mut residual2 = 0.0;
    for c in 0..dim {
        let mut acc = -x.coords()[c];
        for (wi, &i) in w_s.iter().zip(subset) {
            acc += wi * pts[i].coords()[c];
        }
        residual2 += acc * acc;
    }
    let sum: f64 = w_s.iter().sum();
    residual2 += (sum - 1.0) * (sum - 1.0);
    let scale = 1.0 + x.norm();
    if residual2.sqrt() > 1e-8 * scale {
        return None;
    }
    let mut w = vec![0.0; pts.len()];
    let mut total = 0.0;
    for (wi, &i) in w_s.iter().zip(subset) {
        let clamped = wi.max(0.0);
        w[i] = clamped;
        total += clamped;
    }
    if total <= 0.0 {
        return None;
    }
    for wi in &mut w {
        *wi /= total;
    }
    Some(w)
}

/// Gaussian elimination with partial pivoting for the tiny (k <= 4) systems
/// of [`face_solution`].
fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite pivots")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = vec![0.0; k];
    for col in (0..k).rev() {
        let mut acc = b[col];
        for c in (col + 1)..k {
            acc -= a[col][c] * out[c];
        }
        out[col] = acc / a[col][col];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::random_max_affine;
    use crate::rng;
    use rand::Rng;

    fn v(coords: &[f64]) -> Vector {
        Vector::new(coords.to_vec()).unwrap()
    }

    fn two_point_line() -> SampleSet {
        SampleSet::new(vec![v(&[0.0]), v(&[1.0])], vec![0.0, 1.0], 1.0).unwrap()
    }

    /// Random consistent instance sampled from a max-affine function.
    pub(crate) fn random_instance(dim: usize, n: usize, seed: u64) -> SampleSet {
        let l = 1.0;
        let f = random_max_affine(dim, 4, l, seed);
        let mut r = rng::stream(seed, "instance-points");
        let pts: Vec<Vector> = (0..n)
            .map(|_| {
                Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect();
        let ys: Vec<f64> = pts.iter().map(|p| f.evaluate(p)).collect();
        SampleSet::new(pts, ys, l).unwrap()
    }

    #[test]
    fn mcshane_examples() {
        let s = two_point_line();
        assert_eq!(mcshane_upper(&s, &v(&[0.5])).unwrap(), 0.5);
        // interpolation at the samples
        assert_eq!(mcshane_upper(&s, &v(&[0.0])).unwrap(), 0.0);
        assert_eq!(mcshane_upper(&s, &v(&[1.0])).unwrap(), 1.0);
        // single sample: cone c + L||x - xi||
        let one = SampleSet::new(vec![v(&[2.0, 0.0])], vec![3.0], 2.0).unwrap();
        assert_eq!(mcshane_upper(&one, &v(&[2.0, 1.5])).unwrap(), 3.0 + 2.0 * 1.5);
    }

    /// Independent oracle: dense scan of the 1-simplex.
    fn envelope_grid_oracle_2(s: &SampleSet, x: &Vector) -> f64 {
        let obj = EnvelopeObjective::new(s, x);
        let mut best = f64::INFINITY;
        for i in 0..=100_000 {
            let a = i as f64 / 100_000.0;
            best = best.min(obj.value(&[a, 1.0 - a]));
        }
        best
    }

    #[test]
    fn envelope_midpoint_matches_grid_oracle() {
        let s = two_point_line();
        let x = v(&[0.5]);
        let oracle = envelope_grid_oracle_2(&s, &x);
        assert!((oracle - 0.5).abs() < 1e-6, "oracle value {oracle}");
        let got = primal_envelope(&s, &x, 500).unwrap();
        assert!((got - 0.5).abs() < 1e-6, "envelope value {got}");
    }

    #[test]
    fn envelope_single_sample_is_cone() {
        let one = SampleSet::new(vec![v(&[1.0])], vec![2.0], 3.0).unwrap();
        let x = v(&[-0.5]);
        let expected = 2.0 + 3.0 * 1.5;
        assert!((primal_envelope(&one, &x, 10).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn envelope_interpolates_data() {
        for seed in 0..10u64 {
            let s = random_instance(2, 2 + (seed as usize % 7), seed);
            for (xi, yi) in s.points().iter().zip(s.values()) {
                let f = primal_envelope(&s, xi, 500).unwrap();
                assert!(
                    (f - yi).abs() <= 1e-6,
                    "interpolation off by {} at seed {seed}",
                    (f - yi).abs()
                );
            }
        }
    }

    #[test]
    fn envelope_below_mcshane() {
        let mut r = rng::stream(41, "sandwich");
        let mut checked = 0;
        for seed in 0..10u64 {
            let s = random_instance(2, 3 + (seed as usize % 5), seed + 100);
            for _ in 0..100 {
                let x = v(&[r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)]);
                let env = primal_envelope(&s, &x, 500).unwrap();
                let upper = mcshane_upper(&s, &x).unwrap();
                assert!(env <= upper + 1e-6, "envelope {env} exceeds McShane {upper}");
                checked += 1;
            }
        }
        assert_eq!(checked, 1000);
    }

    #[test]
    fn envelope_is_lipschitz_and_convex() {
        let mut r = rng::stream(43, "env-lip");
        for seed in 0..5u64 {
            let s = random_instance(2, 4, seed + 300);
            let l = s.lipschitz();
            for _ in 0..40 {
                let a = v(&[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]);
                let b = v(&[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]);
                let fa = primal_envelope(&s, &a, 500).unwrap();
                let fb = primal_envelope(&s, &b, 500).unwrap();
                assert!((fa - fb).abs() <= l * a.dist(&b) + 2e-6);
                let t: f64 = r.gen_range(0.0..1.0);
                let mid = a.scaled(t).add(&b.scaled(1.0 - t));
                let fm = primal_envelope(&s, &mid, 500).unwrap();
                assert!(fm <= t * fa + (1.0 - t) * fb + 2e-6, "Jensen violated");
            }
        }
    }

    #[test]
    fn diagnostics_report_budget_exhaustion() {
        let s = random_instance(2, 6, 7);
        let x = v(&[0.3, -0.2]);
        let (_, diag) = primal_envelope_diag(&s, &x, 1).unwrap();
        assert_eq!(diag.fw_iterations, 1);
        let (_, diag) = primal_envelope_diag(&s, &x, 500).unwrap();
        assert!(!diag.budget_exhausted);
        assert!(diag.weights.as_slice().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn simplex_weights_validation() {
        assert!(SimplexWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexWeights::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![-0.1, 1.1]).is_err());
        assert_eq!(SimplexWeights::vertex(3, 1).as_slice(), &[0.0, 1.0, 0.0]);
    }
}
