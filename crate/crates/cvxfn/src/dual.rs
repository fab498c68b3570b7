//! Max-affine reconstruction of a convex Lipschitz function from samples.
//!
//! The model is a finite maximum of affine functionals
//! `f(x) = max_m { <p_m, x> + c_m }` whose slope directions form an
//! `eta`-net of the ball of radius `L` inside the span of the sample
//! points, and whose intercepts `c_m = min_n (y_n - <p_m, xi_n>)` are the
//! tightest offsets consistent with the data. By construction the result
//! is convex and `L`-Lipschitz for every accuracy setting, and its uniform
//! error against the sampled function is driven by the accuracy parameter
//! `epsilon` through the schedule `delta = eps/(4L)`, `alpha = eps/(16L)`,
//! `eta = eps/(8D)`.

use serde::{Deserialize, Serialize};

use crate::error::{CvxError, Result};
use crate::geometry::{
    ball_net, dot, lattice_candidate_count, select_subspace, NetConfig, SampleSet, Subspace,
    Vector,
};

/// The accuracy schedule derived from `(L, D, epsilon)`. All three derived
/// quantities are exact IEEE quotients of the inputs, so they can be
/// recomputed bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSchedule {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub eta: f64,
    lipschitz: f64,
    diameter: f64,
}

impl ParameterSchedule {
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// A-priori bound `(1 + 16 L D / epsilon)^d` on the size of the slope
    /// net once the subspace dimension `d` is known.
    pub fn m_bound(&self, d: usize) -> f64 {
        (1.0 + 16.0 * self.lipschitz * self.diameter / self.epsilon).powi(d as i32)
    }
}

/// Compute the schedule `delta = eps/(4L)`, `alpha = eps/(16L)`,
/// `eta = eps/(8D)`.
pub fn schedule(lipschitz: f64, diameter: f64, epsilon: f64) -> Result<ParameterSchedule> {
    for (name, v) in [
        ("lipschitz constant", lipschitz),
        ("diameter", diameter),
        ("epsilon", epsilon),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CvxError::NonPositive { context: name, value: v });
        }
    }
    Ok(ParameterSchedule {
        epsilon,
        delta: epsilon / (4.0 * lipschitz),
        alpha: epsilon / (16.0 * lipschitz),
        eta: epsilon / (8.0 * diameter),
        lipschitz,
        diameter,
    })
}

/// Provenance and size information recorded with a built [`DualNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualNetMeta {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub eta: f64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Net radius actually used; larger than `eta` when the requested one
    /// would have exceeded the candidate budget or the direction cap.
    pub eta_achieved: f64,
    /// Set when the samples were all at one point and the model collapsed
    /// to the constant `y_1`.
    pub degenerate: bool,
}

/// The reconstruction model: slope directions with precomputed intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNet {
    directions: Vec<Vector>,
    intercepts: Vec<f64>,
    lipschitz: f64,
    meta: DualNetMeta,
}

/// Build-time knobs: `m_cap` bounds the number of slope directions (the
/// net radius is coarsened until the cap holds), `net` configures the net
/// construction itself.
#[derive(Debug, Clone, Default)]
pub struct BuildConfig {
    pub m_cap: Option<usize>,
    pub net: NetConfig,
}

impl BuildConfig {
    pub fn m_cap(&self) -> usize {
        self.m_cap.unwrap_or(100_000)
    }
}

impl DualNet {
    /// Full pipeline: subspace from the sample span, `eta`-net of the
    /// dual ball at the scheduled radius, intercepts from the data.
    pub fn build(samples: &SampleSet, epsilon: f64, cfg: &BuildConfig) -> Result<DualNet> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CvxError::NonPositive { context: "epsilon", value: epsilon });
        }
        let l = samples.lipschitz();
        if samples.diameter() == 0.0 {
            // all samples coincide; the constant model is exact there
            let sched_delta = epsilon / (4.0 * l);
            let sched_alpha = epsilon / (16.0 * l);
            return Ok(DualNet {
                directions: vec![Vector::zeros(samples.dim())],
                intercepts: vec![samples.values()[0]],
                lipschitz: l,
                meta: DualNetMeta {
                    epsilon,
                    delta: sched_delta,
                    alpha: sched_alpha,
                    eta: 0.0,
                    d: 0,
                    n: samples.len(),
                    m: 1,
                    eta_achieved: 0.0,
                    degenerate: true,
                },
            });
        }
        let sched = schedule(l, samples.diameter(), epsilon)?;
        let subspace = select_subspace(samples, &[])?;
        let (directions, eta_achieved) =
            net_with_cap(&subspace, l, sched.eta, cfg)?;
        let intercepts = intercepts_for(samples, &directions);
        let meta = DualNetMeta {
            epsilon: sched.epsilon,
            delta: sched.delta,
            alpha: sched.alpha,
            eta: sched.eta,
            d: subspace.dim(),
            n: samples.len(),
            m: directions.len(),
            eta_achieved,
            degenerate: false,
        };
        Ok(DualNet { directions, intercepts, lipschitz: l, meta })
    }

    /// Build with an explicit net radius over the span of the samples,
    /// bypassing the accuracy schedule. The recorded schedule is the one
    /// that would have produced this radius (`epsilon = 8 D eta`).
    pub fn build_with_eta(samples: &SampleSet, eta: f64, cfg: &BuildConfig) -> Result<DualNet> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(CvxError::NonPositive { context: "eta", value: eta });
        }
        if samples.diameter() == 0.0 {
            return Self::build(samples, 1.0, cfg);
        }
        let implied_epsilon = 8.0 * samples.diameter() * eta;
        let l = samples.lipschitz();
        let subspace = select_subspace(samples, &[])?;
        let (directions, eta_achieved) = net_with_cap(&subspace, l, eta, cfg)?;
        let intercepts = intercepts_for(samples, &directions);
        let meta = DualNetMeta {
            epsilon: implied_epsilon,
            delta: implied_epsilon / (4.0 * l),
            alpha: implied_epsilon / (16.0 * l),
            eta,
            d: subspace.dim(),
            n: samples.len(),
            m: directions.len(),
            eta_achieved,
            degenerate: false,
        };
        Ok(DualNet { directions, intercepts, lipschitz: l, meta })
    }

    /// Assemble a model from explicit slope directions; intercepts are
    /// computed from the samples. Directions must fit the sample dimension
    /// and the sample Lipschitz ball.
    pub fn from_directions(samples: &SampleSet, directions: Vec<Vector>) -> Result<DualNet> {
        if directions.is_empty() {
            return Err(CvxError::Empty("dual net directions"));
        }
        let l = samples.lipschitz();
        for p in &directions {
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
        let intercepts = intercepts_for(samples, &directions);
        let d = Subspace::span(&directions, samples.dim())?.dim();
        let meta = DualNetMeta {
            epsilon: 0.0,
            delta: 0.0,
            alpha: 0.0,
            eta: 0.0,
            d,
            n: samples.len(),
            m: directions.len(),
            eta_achieved: 0.0,
            degenerate: false,
        };
        Ok(DualNet { directions, intercepts, lipschitz: l, meta })
    }

    pub fn directions(&self) -> &[Vector] {
        &self.directions
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn meta(&self) -> &DualNetMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    pub fn size(&self) -> usize {
        self.directions.len()
    }

    /// `max_m { <p_m, x> + c_m }`.
    pub fn evaluate(&self, x: &Vector) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(CvxError::DimMismatch { expected: self.dim(), got: x.dim() });
        }
        Ok(self
            .directions
            .iter()
            .zip(&self.intercepts)
            .map(|(p, c)| dot(p, x) + c)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn evaluate_batch(&self, xs: &[Vector]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Index of the affine piece attaining the maximum at `x`. Ties go to
    /// the smallest index; the choice is arbitrary and only affects
    /// diagnostics, never the value.
    pub fn active_piece(&self, x: &Vector) -> Result<usize> {
        if x.dim() != self.dim() {
            return Err(CvxError::DimMismatch { expected: self.dim(), got: x.dim() });
        }
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (m, (p, c)) in self.directions.iter().zip(&self.intercepts).enumerate() {
            let v = dot(p, x) + c;
            if v > best_v {
                best_v = v;
                best = m;
            }
        }
        Ok(best)
    }
}

/// Intercepts `c_m = min_n (y_n - <p_m, xi_n>)`.
fn intercepts_for(samples: &SampleSet, directions: &[Vector]) -> Vec<f64> {
    directions
        .iter()
        .map(|p| {
            samples
                .points()
                .iter()
                .zip(samples.values())
                .map(|(xi, y)| y - dot(p, xi))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Build the slope net, coarsening the radius geometrically whenever the
/// lattice would exceed the candidate budget or the resulting net would
/// exceed the direction cap. Returns the net and the radius actually used.
fn net_with_cap(
    subspace: &Subspace,
    l: f64,
    eta: f64,
    cfg: &BuildConfig,
) -> Result<(Vec<Vector>, f64)> {
    let m_cap = cfg.m_cap().max(1);
    let mut achieved = eta;
    loop {
        let d = subspace.dim();
        if d <= 3 && lattice_candidate_count(d, l, achieved) > cfg.net.max_candidates {
            achieved *= 1.25;
            continue;
        }
        let net = ball_net(subspace, l, achieved, &cfg.net)?;
        if net.len() > m_cap {
            achieved *= 1.25;
            continue;
        }
        return Ok((net, achieved));
    }
}

/// Empirical sup-error `max_probe |reference(x) - net(x)|`.
pub fn uniform_error<F>(net: &DualNet, reference: F, probes: &[Vector]) -> Result<f64>
where
    F: Fn(&Vector) -> f64,
{
    if probes.is_empty() {
        return Err(CvxError::Empty("probe points"));
    }
    let mut worst = 0.0f64;
    for x in probes {
        let err = (reference(x) - net.evaluate(x)?).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

// --- persistence -----------------------------------------------------------

/// Versioned JSON document for [`DualNet`].
#[derive(Debug, Serialize, Deserialize)]
pub struct DualNetFile {
    pub format: String,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub meta: DualNetMeta,
}

pub const DUALNET_FORMAT: &str = "dualnet/1";

impl DualNet {
    pub fn to_file(&self) -> DualNetFile {
        DualNetFile {
            format: DUALNET_FORMAT.to_string(),
            lipschitz: self.lipschitz,
            dim: self.dim(),
            directions: self.directions.iter().map(|p| p.coords().to_vec()).collect(),
            intercepts: self.intercepts.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_file(file: DualNetFile) -> Result<DualNet> {
        if file.format != DUALNET_FORMAT {
            return Err(CvxError::Parse(format!(
                "unsupported format '{}' (expected {DUALNET_FORMAT})",
                file.format
            )));
        }
        if file.directions.is_empty() {
            return Err(CvxError::Empty("dual net directions"));
        }
        if file.directions.len() != file.intercepts.len() {
            return Err(CvxError::LengthMismatch {
                left: file.directions.len(),
                right: file.intercepts.len(),
            });
        }
        if !(file.lipschitz > 0.0 && file.lipschitz.is_finite()) {
            return Err(CvxError::NonPositive {
                context: "lipschitz constant",
                value: file.lipschitz,
            });
        }
        let mut directions = Vec::with_capacity(file.directions.len());
        for row in file.directions {
            if row.len() != file.dim {
                return Err(CvxError::DimMismatch { expected: file.dim, got: row.len() });
            }
            let p = Vector::new(row)?;
            if p.norm() > file.lipschitz + 1e-10 {
                return Err(CvxError::InvalidModel(format!(
                    "direction norm {} exceeds Lipschitz bound {}",
                    p.norm(),
                    file.lipschitz
                )));
            }
            directions.push(p);
        }
        if file.intercepts.iter().any(|c| !c.is_finite()) {
            return Err(CvxError::NonFinite { context: "intercept" });
        }
        Ok(DualNet {
            directions,
            intercepts: file.intercepts,
            lipschitz: file.lipschitz,
            meta: file.meta,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<DualNet> {
        let file: DualNetFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }
}
