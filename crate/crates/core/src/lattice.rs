//! The hyperplane lattice `Z^{n+1} ∩ {b·z = 0}`, its determinant, the cube
//! slice `[-1, 1]^{n+1} ∩ {b·z = 0}` and the resulting fiber prediction.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{det_big, ext_gcd, gcd_slice};
use crate::error::{Error, Result};
use crate::exact::ExactRational;
use crate::piecewise::sum_of_uniforms_density;
use crate::scalar::{rational_to_f64, Field};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneLattice {
    pub bvec: Vec<i64>,
    pub det_sq: ExactRational,
    pub gcd: i64,
}

impl HyperplaneLattice {
    pub fn new(bvec: &[i64]) -> Result<Self> {
        let (det_sq, _) = lattice_det(bvec)?;
        Ok(HyperplaneLattice {
            bvec: bvec.to_vec(),
            det_sq: det_sq.into(),
            gcd: gcd_slice(bvec),
        })
    }

    pub fn det(&self) -> f64 {
        self.det_sq.to_f64().sqrt()
    }

    /// Every nonzero vector of the lattice is an integer vector, so the
    /// first successive minimum is at least 1.
    pub fn first_minimum_lower_bound(&self) -> f64 {
        1.0
    }
}

fn norm_sq(b: &[i64]) -> BigInt {
    b.iter().map(|&v| BigInt::from(v) * BigInt::from(v)).sum()
}

fn nonzero(b: &[i64]) -> Result<()> {
    if b.iter().all(|&v| v == 0) {
        return Err(Error::ZeroVector);
    }
    Ok(())
}

/// `(det², det)` with `det = ‖b‖₂ / gcd(b)`.
pub fn lattice_det(b: &[i64]) -> Result<(BigRational, f64)> {
    nonzero(b)?;
    let g = BigInt::from(gcd_slice(b));
    let sq = BigRational::new(norm_sq(b), &g * &g);
    let det = rational_to_f64(&sq).sqrt();
    Ok((sq, det))
}

/// Basis of the saturated kernel lattice, from a unimodular column
/// reduction of `b` to `(g, 0, …, 0)`.
pub fn kernel_basis(b: &[i64]) -> Result<Vec<Vec<i64>>> {
    nonzero(b)?;
    let d = b.len();
    let mut row: Vec<i128> = b.iter().map(|&v| v as i128).collect();
    // columns of the transform, stored column-major
    let mut cols: Vec<Vec<i128>> = (0..d)
        .map(|c| (0..d).map(|r| i128::from(r == c)).collect())
        .collect();
    // move a nonzero entry to the front
    let first = row.iter().position(|&v| v != 0).expect("nonzero");
    row.swap(0, first);
    cols.swap(0, first);
    for j in 1..d {
        if row[j] == 0 {
            continue;
        }
        let (g, s, t) = ext_gcd(row[0], row[j]);
        let (a, c) = (row[0] / g, row[j] / g);
        let c0: Vec<i128> = (0..d)
            .map(|r| s * cols[0][r] + t * cols[j][r])
            .collect();
        let cj: Vec<i128> = (0..d)
            .map(|r| c * cols[0][r] - a * cols[j][r])
            .collect();
        cols[0] = c0;
        cols[j] = cj;
        row[0] = g;
        row[j] = 0;
        size_reduce(&mut cols, j);
    }
    cols[1..]
        .iter()
        .map(|c| {
            c.iter()
                .map(|&v| i64::try_from(v).map_err(|_| Error::Overflow("kernel basis")))
                .collect()
        })
        .collect()
}

// Keeps entries small: reduce the new kernel column against earlier ones.
fn size_reduce(cols: &mut [Vec<i128>], j: usize) {
    for i in 1..j {
        let nn: i128 = cols[i].iter().map(|v| v * v).sum();
        if nn == 0 {
            continue;
        }
        let dot: i128 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
        let m = (dot as f64 / nn as f64).round() as i128;
        if m != 0 {
            let ci = cols[i].clone();
            for (v, w) in cols[j].iter_mut().zip(ci) {
                *v -= m * w;
            }
        }
    }
}

/// Exact Gram determinant of a family of integer vectors.
pub fn gram_det(basis: &[Vec<i64>]) -> BigInt {
    let k = basis.len();
    if k == 0 {
        return BigInt::from(1);
    }
    let mut m = Vec::with_capacity(k * k);
    for u in basis {
        for v in basis {
            m.push(
                u.iter()
                    .zip(v)
                    .map(|(&a, &b)| BigInt::from(a) * BigInt::from(b))
                    .sum::<BigInt>(),
            );
        }
    }
    det_big(k, &m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceMethod {
    ExactConvolution,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceVolume {
    pub value: f64,
    pub method: SliceMethod,
    pub stderr: f64,
}

/// `Vol / ‖b‖₂ = 2^{n+1} f(0)` where `f` is the density of `Σ b_k U_k`;
/// this is also the fiber Leray density over `b`.
pub fn slice_leray_density<T: Field>(b: &[T]) -> Option<T> {
    let f0 = sum_of_uniforms_density(b, &T::zero())?;
    let mut scale = T::one();
    for _ in 0..b.len() {
        scale = scale.clone() + scale;
    }
    Some(f0 * scale)
}

/// Exact `Vol / ‖b‖₂` as a rational.
pub fn slice_leray_exact(b: &[i64]) -> Result<BigRational> {
    nonzero(b)?;
    let coeffs: Vec<BigRational> = b
        .iter()
        .map(|&v| BigRational::from_integer(BigInt::from(v)))
        .collect();
    Ok(slice_leray_density(&coeffs).expect("nonzero vector"))
}

/// n-volume of the central slice of `[-1, 1]^{n+1}` orthogonal to `b`, by
/// exact convolution.
pub fn slice_volume_exact(b: &[i64]) -> Result<SliceVolume> {
    let dens = slice_leray_exact(b)?;
    let norm = rational_to_f64(&BigRational::from_integer(norm_sq(b))).sqrt();
    Ok(SliceVolume {
        value: norm * rational_to_f64(&dens),
        method: SliceMethod::ExactConvolution,
        stderr: 0.0,
    })
}

/// Monte-Carlo estimate of the same slice volume: solve for the coordinate
/// with the largest coefficient and measure how often it lands in range.
pub fn slice_volume_mc(b: &[i64], samples: usize, seed: u64) -> Result<SliceVolume> {
    nonzero(b)?;
    if samples < 1000 {
        return Err(Error::invalid("Monte-Carlo slice volume needs at least 1000 samples"));
    }
    let (k, bk) = b
        .iter()
        .enumerate()
        .max_by_key(|(_, v)| v.abs())
        .map(|(k, v)| (k, v.abs() as f64))
        .expect("nonempty");
    let others: Vec<f64> = b
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &v)| v as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let s: f64 = others
            .iter()
            .map(|c| c * rng.gen_range(-1.0..=1.0))
            .sum();
        if s.abs() <= bk {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let norm = (norm_sq(b).to_f64().expect("small norm")).sqrt();
    let scale = norm / bk * 2f64.powi(others.len() as i32);
    Ok(SliceVolume {
        value: scale * p,
        method: SliceMethod::MonteCarlo,
        stderr: scale * (p * (1.0 - p) / samples as f64).sqrt(),
    })
}

pub fn slice_volume(b: &[i64], method: SliceMethod, samples: usize, seed: u64) -> Result<SliceVolume> {
    match method {
        SliceMethod::ExactConvolution => slice_volume_exact(b),
        SliceMethod::MonteCarlo => slice_volume_mc(b, samples, seed),
    }
}

/// `Vol / det · P₃ⁿ` in exact arithmetic: `Vol / det = gcd(b) · 2^{n+1} f(0)`.
pub fn predict_fiber_exact(b: &[i64], p3: u64) -> Result<BigRational> {
    let dens = slice_leray_exact(b)?;
    let n = b.len() - 1;
    let g = BigInt::from(gcd_slice(b));
    let pow = num_traits::pow(BigInt::from(p3), n);
    Ok(dens * BigRational::from_integer(g * pow))
}

pub fn predict_fiber(b: &[i64], p3: u64) -> Result<f64> {
    Ok(rational_to_f64(&predict_fiber_exact(b, p3)?))
}

/// Number of lattice points of `Λ` in `P·C`, by enumeration of the free
/// coordinates. Reference implementation kept for tests and small inputs.
pub fn lattice_points_in_slice(b: &[i64], p: i64) -> Result<u64> {
    nonzero(b)?;
    let mut count = 0u64;
    crate::arith::for_each_in_box(b.len(), p, |z| {
        let s: i128 = b.iter().zip(z).map(|(&u, &v)| u as i128 * v as i128).sum();
        if s.is_zero() {
            count += 1;
        }
    });
    Ok(count)
}
