//! Built-in reference functionals: convex, Lipschitz, and cheap to
//! evaluate. Used as ground truth when probing reconstruction error and as
//! generators of consistent synthetic sample sets.

use crate::error::{CvxError, Result};
use crate::geometry::{dot, Vector};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// A finite maximum of affine pieces `max_k { <a_k, x> + b_k }`, Lipschitz
/// with constant `max_k ||a_k||`.
#[derive(Debug, Clone)]
pub struct MaxAffine {
    slopes: Vec<Vector>,
    offsets: Vec<f64>,
}

impl MaxAffine {
    pub fn new(slopes: Vec<Vector>, offsets: Vec<f64>) -> Result<Self> {
        if slopes.is_empty() {
            return Err(CvxError::Empty("max-affine pieces"));
        }
        if slopes.len() != offsets.len() {
            return Err(CvxError::LengthMismatch { left: slopes.len(), right: offsets.len() });
        }
        Ok(Self { slopes, offsets })
    }

    pub fn evaluate(&self, x: &Vector) -> f64 {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| dot(a, x) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().map(Vector::norm).fold(0.0, f64::max)
    }

    pub fn pieces(&self) -> usize {
        self.slopes.len()
    }
}

/// Seeded max-affine function with slopes drawn from the closed ball of
/// radius `lipschitz`.
pub fn random_max_affine(dim: usize, pieces: usize, lipschitz: f64, seed: u64) -> MaxAffine {
    let mut r = rng::stream(seed, "max-affine");
    let pieces = pieces.max(1);
    let mut slopes = Vec::with_capacity(pieces);
    let mut offsets = Vec::with_capacity(pieces);
    for _ in 0..pieces {
        let g: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let scale = lipschitz * r.gen::<f64>().powf(1.0 / dim as f64) / norm;
        slopes.push(Vector::new(g.iter().map(|x| x * scale).collect()).unwrap());
        offsets.push(r.gen_range(-0.5..0.5));
    }
    MaxAffine::new(slopes, offsets).unwrap()
}

/// Reference functionals addressable by name from the CLI.
#[derive(Debug, Clone)]
pub enum Reference {
    /// `||x||`, 1-Lipschitz.
    Norm,
    /// Huber function: `||x||^2 / 2` inside the unit ball, `||x|| - 1/2`
    /// outside. Convex and 1-Lipschitz everywhere.
    Huber,
    /// Seeded max of eight affine pieces with slopes in the unit ball.
    MaxAffine(MaxAffine),
}

impl Reference {
    pub fn by_name(name: &str, dim: usize, seed: u64) -> Result<Self> {
        match name {
            "norm" => Ok(Reference::Norm),
            "huber" => Ok(Reference::Huber),
            "maxaffine" => Ok(Reference::MaxAffine(random_max_affine(dim, 8, 1.0, seed))),
            other => Err(CvxError::Parse(format!(
                "unknown reference '{other}' (expected norm, huber, or maxaffine)"
            ))),
        }
    }

    pub fn evaluate(&self, x: &Vector) -> f64 {
        match self {
            Reference::Norm => x.norm(),
            Reference::Huber => {
                let r = x.norm();
                if r <= 1.0 {
                    0.5 * r * r
                } else {
                    r - 0.5
                }
            }
            Reference::MaxAffine(f) => f.evaluate(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Reference::Norm | Reference::Huber => 1.0,
            Reference::MaxAffine(f) => f.lipschitz(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn names_resolve() {
        assert!(Reference::by_name("norm", 2, 0).is_ok());
        assert!(Reference::by_name("huber", 2, 0).is_ok());
        assert!(Reference::by_name("maxaffine", 2, 0).is_ok());
        assert!(Reference::by_name("cubic", 2, 0).is_err());
    }

    #[test]
    fn references_are_lipschitz_and_convex() {
        let mut r = rng::stream(2, "reference-props");
        for name in ["norm", "huber", "maxaffine"] {
            let f = Reference::by_name(name, 3, 9).unwrap();
            let l = f.lipschitz();
            for _ in 0..300 {
                let a = Vector::new((0..3).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap();
                let b = Vector::new((0..3).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap();
                let t: f64 = r.gen_range(0.0..1.0);
                assert!((f.evaluate(&a) - f.evaluate(&b)).abs() <= l * a.dist(&b) + 1e-12);
                let mid = a.scaled(t).add(&b.scaled(1.0 - t));
                let jensen =
                    f.evaluate(&mid) - t * f.evaluate(&a) - (1.0 - t) * f.evaluate(&b);
                assert!(jensen <= 1e-12, "{name} violated Jensen by {jensen}");
            }
        }
    }

    #[test]
    fn max_affine_slopes_stay_in_ball() {
        let f = random_max_affine(4, 16, 2.5, 3);
        assert!(f.lipschitz() <= 2.5 + 1e-12);
        assert_eq!(f.pieces(), 16);
    }
}
