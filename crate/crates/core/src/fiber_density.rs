//! Densities of the fibers over a fixed `x`: the series `𝔖_x`, the
//! integral `J_x`, and the fiber-level predictions built from them.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{euler_phi, for_each_in_box, for_each_residue, gcd, sup_norm};
use crate::error::{Error, Result};
use crate::exact::ExactRational;
use crate::exp_sums::sinc_kernel;
use crate::form::{Slot, TrilinearForm};
use crate::lattice::slice_leray_density;
use crate::qmc::{cube_boundary_area, integrate_unit_cube, unit_to_cube_boundary, Estimate, QuadSpec};
use crate::scalar::{rational_to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberDensity {
    pub x: Vec<i64>,
    pub q_max: u64,
    pub series_terms: Vec<ExactRational>,
    pub series_trunc: ExactRational,
    pub j_x: Estimate,
    pub j_x_sinc: Option<Estimate>,
    pub phi: Option<f64>,
}

fn admissible(form: &TrilinearForm, x: &[i64], lambda: usize) -> Result<()> {
    if !form.is_in_a(1, x, lambda)? || x.iter().all(|&v| v == 0) {
        return Err(Error::Inadmissible(x.to_vec()));
    }
    Ok(())
}

/// `#{b mod q : B(x, b) ≡ 0 (mod q)}`.
fn fiber_congruence_count(form: &TrilinearForm, x: &[i64], q: u64) -> u64 {
    let d = form.dim();
    let mx = form.slot_matrix(Slot::X, x);
    let qi = q as i128;
    let mut count = 0;
    for_each_residue(d, q, |y| {
        let ok = (0..d).all(|k| {
            let mut acc: i128 = 0;
            for j in 0..d {
                acc += mx[j * d + k] as i128 * y[j] as i128;
            }
            acc % qi == 0
        });
        if ok {
            count += 1;
        }
    });
    count
}

/// `q^{-2n-2} Σ_{(a,q)=1} S_{a,q}(x) = φ(q) q^{-n-1} #{b : B(x, b) ≡ 0}`.
pub fn fiber_series_term(form: &TrilinearForm, x: &[i64], q: u64) -> BigRational {
    let c = fiber_congruence_count(form, x, q);
    BigRational::new(
        BigInt::from(euler_phi(q)) * BigInt::from(c),
        num_traits::pow(BigInt::from(q), form.dim()),
    )
}

/// The same term from the double sum over `(b¹, b²)` and all units `a`.
pub fn fiber_series_term_direct(form: &TrilinearForm, x: &[i64], q: u64) -> f64 {
    let d = form.dim();
    let roots: Vec<Complex64> = (0..q)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / q as f64))
        .collect();
    let mut total = Complex64::zero();
    for a in 0..q as i64 {
        if gcd(a, q as i64) != 1 {
            continue;
        }
        for_each_residue(d, q, |y| {
            for_each_residue(d, q, |z| {
                let f = form.eval(x, y, z).expect("small residues");
                total += roots[(a as i128 * f).rem_euclid(q as i128) as usize];
            });
        });
    }
    total.re / (q as f64).powi(2 * d as i32)
}

/// Truncated `𝔖_x(Q)` with its terms; `x` must lie in `A_{1,λ}`.
pub fn fiber_series(form: &TrilinearForm, x: &[i64], q_max: u64, lambda: usize) -> Result<(BigRational, Vec<BigRational>)> {
    admissible(form, x, lambda)?;
    if q_max < 1 {
        return Err(Error::invalid("Q must be at least 1"));
    }
    let terms: Vec<BigRational> = (1..=q_max).map(|q| fiber_series_term(form, x, q)).collect();
    let sum = terms.iter().fold(BigRational::zero(), |a, t| a + t);
    Ok((sum, terms))
}

/// `J_x = ∫_{[-1,1]^{n+1}} 2^{n+1} f_{B(x,y)}(0) dy`, reduced to the cube
/// boundary by homogeneity of degree −1 in `y`.
pub fn fiber_j_leray<T: Real>(form: &TrilinearForm, x: &[i64], quad: &QuadSpec) -> Result<Estimate<T>> {
    let d = form.dim();
    if x.len() != d {
        return Err(Error::Dimension { expected: d, got: x.len() });
    }
    let mx = form.slot_matrix(Slot::X, x);
    if mx.iter().all(|&v| v == 0) {
        return Err(Error::DegenerateFiber);
    }
    let m: Vec<T> = mx.iter().map(|&v| T::lit(v as f64)).collect();
    let est = integrate_unit_cube(d, 1, quad, |u: &[T], out: &mut [T]| {
        let mut y = vec![T::zero(); d];
        unit_to_cube_boundary(u, &mut y);
        let b: Vec<T> = (0..d)
            .map(|k| (0..d).fold(T::zero(), |acc, j| acc + m[j * d + k] * y[j]))
            .collect();
        out[0] = slice_leray_density(&b).unwrap_or_else(T::zero);
    })?;
    Ok(est[0].scaled(T::lit(cube_boundary_area(d) / form.n() as f64)))
}

/// `J_x(φ) = ∫_{[-1,1]^{2n+2}} sin(2πφF(x,v,w)) / (πF(x,v,w)) dv dw`.
pub fn fiber_j_sinc<T: Real>(form: &TrilinearForm, x: &[i64], phi: T, quad: &QuadSpec) -> Result<Estimate<T>> {
    let d = form.dim();
    let mx = form.slot_matrix(Slot::X, x);
    if mx.iter().all(|&v| v == 0) {
        return Err(Error::DegenerateFiber);
    }
    let m: Vec<T> = mx.iter().map(|&v| T::lit(v as f64)).collect();
    let est = integrate_unit_cube(2 * d, 1, quad, |u: &[T], out: &mut [T]| {
        let mut f = T::zero();
        for j in 0..d {
            let yj = T::lit(2.0) * u[j] - T::one();
            for k in 0..d {
                let zk = T::lit(2.0) * u[d + k] - T::one();
                f = f + m[j * d + k] * yj * zk;
            }
        }
        out[0] = sinc_kernel(phi, f);
    })?;
    Ok(est[0].scaled(T::lit(2f64.powi(2 * d as i32))))
}

/// Series, Leray integral and (when `phi` is given) the sinc integral.
pub fn fiber_density(
    form: &TrilinearForm,
    x: &[i64],
    q_max: u64,
    lambda: usize,
    phi: Option<f64>,
    quad: &QuadSpec,
) -> Result<FiberDensity> {
    let (sum, terms) = fiber_series(form, x, q_max, lambda)?;
    let j_x = fiber_j_leray::<f64>(form, x, quad)?;
    let j_x_sinc = match phi {
        Some(p) => Some(fiber_j_sinc::<f64>(form, x, p, quad)?),
        None => None,
    };
    Ok(FiberDensity {
        x: x.to_vec(),
        q_max,
        series_terms: terms.into_iter().map(Into::into).collect(),
        series_trunc: sum.into(),
        j_x,
        j_x_sinc,
        phi,
    })
}

/// `𝔖_x(Q) · J_x · P₂ⁿ P₃ⁿ`.
pub fn fiber_predict(density: &FiberDensity, n: usize, p2: u64, p3: u64) -> f64 {
    density.series_trunc.to_f64() * density.j_x.value * ((p2 * p3) as f64).powi(n as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSum {
    pub p1: u64,
    pub q_max: u64,
    pub points: usize,
    pub value: f64,
    pub stderr: f64,
}

/// `Σ_{x ∈ A_{1,λ}, 0 < |x| ≤ P₁} 𝔖_x(Q) J_x`.
pub fn fiber_sum(form: &TrilinearForm, p1: u64, q_max: u64, lambda: usize, quad: &QuadSpec) -> Result<FiberSum> {
    let d = form.dim();
    let mut xs = Vec::new();
    for_each_in_box(d, p1 as i64, |x| {
        if sup_norm(x) > 0 && form.in_a_unchecked(Slot::X, x, lambda) {
            xs.push(x.to_vec());
        }
    });
    let mut value = 0.0;
    let mut var = 0.0;
    for x in &xs {
        let (s, _) = fiber_series(form, x, q_max, lambda)?;
        let s = rational_to_f64(&s);
        let j = fiber_j_leray::<f64>(form, x, quad)?;
        value += s * j.value;
        var += (s * j.stderr).powi(2);
    }
    Ok(FiberSum {
        p1,
        q_max,
        points: xs.len(),
        value,
        stderr: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::{count_x_fiber, CountVariant};
    use crate::exact::ratio;
    use crate::form::random_generic_form;

    #[test]
    fn series_examples() {
        let diag = TrilinearForm::diagonal(1);
        let (s1, _) = fiber_series(&diag, &[1, 1], 1, 1).unwrap();
        assert_eq!(s1, ratio(1, 1));
        let (s2, terms) = fiber_series(&diag, &[1, 1], 2, 1).unwrap();
        assert_eq!(terms[1], ratio(1, 4));
        assert_eq!(s2, ratio(5, 4));
        assert!((fiber_series_term_direct(&diag, &[1, 1], 2) - 0.25).abs() < 1e-12);
        assert!(matches!(fiber_series(&diag, &[1, 0], 2, 1), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn collapsed_matches_direct() {
        let f = random_generic_form(1, 4, 3).unwrap();
        for x in [[1i64, 2], [3, -1], [2, 2]] {
            for q in 1..=6 {
                let exact = rational_to_f64(&fiber_series_term(&f, &x, q));
                let direct = fiber_series_term_direct(&f, &x, q);
                assert!((exact - direct).abs() < 1e-9, "x={x:?} q={q}");
            }
        }
    }

    #[test]
    fn j_homogeneity() {
        let f = random_generic_form(1, 3, 4).unwrap();
        let q = QuadSpec::new(50_000, 2);
        let j1: Estimate<f64> = fiber_j_leray(&f, &[1, 2], &q).unwrap();
        let j3: Estimate<f64> = fiber_j_leray(&f, &[3, 6], &q).unwrap();
        assert!((j1.value / 3.0 - j3.value).abs() <= 3.0 * (j1.stderr / 3.0 + j3.stderr) + 1e-12);
        assert!(matches!(fiber_j_leray::<f64>(&f, &[0, 0], &q), Err(Error::DegenerateFiber)));
    }

    #[test]
    fn diagonal_leray_closed_form() {
        // x = (1, 1): B = y, J_x = ∫ 2 / max|y_i| dy = 16
        let diag = TrilinearForm::diagonal(1);
        let q = QuadSpec::new(20_000, 5);
        let j: Estimate<f64> = fiber_j_leray(&diag, &[1, 1], &q).unwrap();
        assert!((j.value - 16.0).abs() < 1e-9, "{j:?}");
    }

    #[test]
    fn prediction_trend() {
        let diag = TrilinearForm::diagonal(1);
        let q = QuadSpec::new(20_000, 5);
        let dens = fiber_density(&diag, &[1, 1], 12, 1, None, &q).unwrap();
        let mut last = f64::INFINITY;
        for p in [20u64, 40, 80] {
            let obs = count_x_fiber(&diag, &[1, 1], p, p, CountVariant::N1 { lambda: 1 }).unwrap().count as f64;
            let ratio = obs / fiber_predict(&dens, 1, p, p);
            assert!(ratio.is_finite() && ratio > 0.0);
            last = ratio;
        }
        assert!(last.is_finite());
    }

    #[test]
    fn fiber_sum_index_set() {
        let f = random_generic_form(1, 3, 2).unwrap();
        let q = QuadSpec::new(4_000, 1);
        let s = fiber_sum(&f, 1, 3, 1, &q).unwrap();
        assert_eq!(s.points, 8);
    }
}
