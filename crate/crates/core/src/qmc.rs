//! Randomised quasi-Monte Carlo over the unit cube.
//!
//! Points come from a Kronecker (generalised golden ratio) sequence; each
//! replicate applies an independent uniform shift modulo 1, so replicate
//! means are i.i.d. unbiased estimates and their spread gives the standard
//! error. Replicates run in parallel and are merged by index, so results do
//! not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub samples: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl QuadSpec {
    pub fn new(samples: usize, seed: u64) -> Self {
        QuadSpec {
            samples,
            replicates: 16,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("at least two replicates are needed for a standard error"));
        }
        if self.samples < self.replicates {
            return Err(Error::invalid("fewer samples than replicates"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T = f64> {
    pub value: T,
    pub stderr: T,
    pub samples: usize,
}

impl<T: Real> Estimate<T> {
    pub fn scaled(self, s: T) -> Self {
        Estimate {
            value: self.value * s,
            stderr: self.stderr * s.abs(),
            samples: self.samples,
        }
    }
}

/// Generalised golden ratio increments: `φ_d` is the positive root of
/// `x^{d+1} = x + 1` and the increments are `φ_d^{-(j+1)}`.
pub fn kronecker_increments(dim: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (0..dim).map(|j| phi.powi(-(j as i32 + 1)).fract()).collect()
}

/// Estimates `∫_{[0,1]^dim} f` for a vector-valued integrand with `outputs`
/// components.
pub fn integrate_unit_cube<T, F>(dim: usize, outputs: usize, spec: &QuadSpec, f: F) -> Result<Vec<Estimate<T>>>
where
    T: Real,
    F: Fn(&[T], &mut [T]) + Sync,
{
    spec.validate()?;
    let alpha = kronecker_increments(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shifts: Vec<Vec<f64>> = (0..spec.replicates)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let per = spec.samples / spec.replicates;
    let means: Vec<Vec<T>> = shifts
        .par_iter()
        .map(|shift| {
            let mut point = vec![T::zero(); dim];
            let mut out = vec![T::zero(); outputs];
            let mut sums = vec![Kahan::<T>::default(); outputs];
            let mut state = shift.clone();
            for _ in 0..per {
                for j in 0..dim {
                    state[j] += alpha[j];
                    if state[j] >= 1.0 {
                        state[j] -= 1.0;
                    }
                    point[j] = T::lit(state[j]);
                }
                f(&point, &mut out);
                for (s, v) in sums.iter_mut().zip(&out) {
                    s.add(*v);
                }
            }
            let denom = T::lit(per as f64);
            sums.iter().map(|s| s.value() / denom).collect()
        })
        .collect();
    let r = T::lit(spec.replicates as f64);
    (0..outputs)
        .map(|c| {
            let mean = means.iter().fold(T::zero(), |a, m| a + m[c]) / r;
            let var = means
                .iter()
                .fold(T::zero(), |a, m| a + (m[c] - mean) * (m[c] - mean))
                / (r - T::one());
            if !mean.is_finite() || !var.is_finite() {
                return Err(Error::Quadrature(format!("component {c}")));
            }
            Ok(Estimate {
                value: mean,
                stderr: (var / r).sqrt(),
                samples: per * spec.replicates,
            })
        })
        .collect()
}

/// Scalar integrand convenience wrapper.
pub fn integrate_scalar<T, F>(dim: usize, spec: &QuadSpec, f: F) -> Result<Estimate<T>>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    let mut v = integrate_unit_cube(dim, 1, spec, |p: &[T], out: &mut [T]| out[0] = f(p))?;
    Ok(v.remove(0))
}

#[derive(Clone, Copy, Debug)]
struct Kahan<T> {
    sum: T,
    comp: T,
}

impl<T: Real> Default for Kahan<T> {
    fn default() -> Self {
        Kahan {
            sum: T::zero(),
            comp: T::zero(),
        }
    }
}

impl<T: Real> Kahan<T> {
    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Maps a unit-cube point to a point on the boundary of `[-1, 1]^d`, uniform
/// with respect to surface measure. Consumes `d` coordinates.
pub fn unit_to_cube_boundary<T: Real>(u: &[T], out: &mut [T]) {
    let d = out.len();
    let faces = T::lit(2.0 * d as f64);
    let pick = (u[0] * faces).floor();
    let face = pick.to_usize().unwrap_or(0).min(2 * d - 1);
    let axis = face / 2;
    let sign = if face % 2 == 0 { -T::one() } else { T::one() };
    let mut src = 1;
    for (i, slot) in out.iter_mut().enumerate() {
        if i == axis {
            *slot = sign;
        } else {
            *slot = u[src] * T::lit(2.0) - T::one();
            src += 1;
        }
    }
}

/// Surface measure of the boundary of `[-1, 1]^d`.
pub fn cube_boundary_area(d: usize) -> f64 {
    2.0 * d as f64 * 2f64.powi(d as i32 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_integral() {
        let spec = QuadSpec::new(64_000, 3);
        let est: Estimate<f64> = integrate_scalar(3, &spec, |p| p[0] * p[1] + p[2] * p[2]).unwrap();
        let exact = 0.25 + 1.0 / 3.0;
        assert!((est.value - exact).abs() < 4.0 * est.stderr + 1e-9, "{est:?}");
        assert!(est.stderr < 1e-3);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = QuadSpec::new(10_000, 9);
        let f = |p: &[f64]| (p[0] * 7.0).sin() + p[1];
        let a = integrate_scalar(2, &spec, f).unwrap();
        let b = integrate_scalar(2, &spec, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn works_in_single_precision() {
        let spec = QuadSpec::new(16_000, 1);
        let est: Estimate<f32> = integrate_scalar(2, &spec, |p| p[0] + p[1]).unwrap();
        assert!((est.value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn boundary_sampling_area() {
        // ∫_{∂[-1,1]^2} |y|_∞^{-1} dS = 8 and the radial identity gives
        // ∫_{[-1,1]^2} 1/|y|_∞ dy = 8 as well.
        let spec = QuadSpec::new(4_000, 2);
        let est: Estimate<f64> = integrate_scalar(2, &spec, |p| {
            let mut w = [0.0f64; 2];
            unit_to_cube_boundary(p, &mut w);
            1.0 / w[0].abs().max(w[1].abs())
        })
        .unwrap();
        assert!((est.value * cube_boundary_area(2) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = QuadSpec {
            samples: 10,
            replicates: 1,
            seed: 0,
        };
        assert!(integrate_scalar::<f64, _>(1, &spec, |_| 1.0).is_err());
    }
}
