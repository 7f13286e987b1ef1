//! Exponential sums over boxes and residues, the oscillatory integral, the
//! truncated singular series, major arcs and the counting functions `M_i`.

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{euler_phi, for_each_in_box, for_each_residue, gcd};
use crate::enumeration::CountVariant;
use crate::error::{Error, Result};
use crate::exact::ExactRational;
use crate::form::{ContractionKind, Slot, TrilinearForm};
use crate::qmc::{integrate_unit_cube, Estimate, QuadSpec};
use crate::scalar::Real;

/// `Σ_{|z| ≤ P} e(θ z)`, real by symmetry.
pub fn dirichlet_kernel<T: Real>(theta: T, p: u64) -> T {
    let t = theta - theta.round();
    let pi = T::PI();
    let s = (pi * t).sin();
    if s.abs() >= T::lit(1e-3) {
        (T::lit((2 * p + 1) as f64) * pi * t).sin() / s
    } else {
        let two_pi_t = T::lit(2.0) * pi * t;
        let mut acc = T::one();
        for z in 1..=p {
            acc = acc + T::lit(2.0) * (two_pi_t * T::lit(z as f64)).cos();
        }
        acc
    }
}

/// `S(α) = Σ e(α F(x, y, z))` over the three boxes, restricted to the pairs
/// and points admitted by `variant`. The `z`-sum is a product of Dirichlet
/// kernels except for `U`, whose `z` filters force direct summation.
pub fn s_alpha<T: Real>(
    form: &TrilinearForm,
    alpha: T,
    p1: u64,
    p2: u64,
    p3: u64,
    variant: CountVariant,
) -> Result<Complex<T>> {
    variant.validate(form)?;
    let d = form.dim();
    let lambda = variant.lambda().unwrap_or(1);
    let (fx, fy) = match variant {
        CountVariant::U { .. } | CountVariant::NPrime { .. } => (true, true),
        CountVariant::N1 { .. } => (true, false),
        _ => (false, false),
    };
    let need_nondeg = !matches!(variant, CountVariant::All);
    let mut re = Vec::new();
    let mut im = Vec::new();
    for_each_in_box(d, p1 as i64, |x| {
        if fx && !form.in_a_unchecked(Slot::X, x, lambda) {
            return;
        }
        for_each_in_box(d, p2 as i64, |y| {
            if fy && !form.in_a_unchecked(Slot::Y, y, lambda) {
                return;
            }
            let b = form.contract(ContractionKind::B, x, y).expect("small box");
            if need_nondeg && b.is_zero() {
                return;
            }
            if let CountVariant::U { .. } = variant {
                for_each_in_box(d, p3 as i64, |z| {
                    let ok = !form.contract(ContractionKind::BPrime, x, z).expect("small").is_zero()
                        && !form.contract(ContractionKind::BDoublePrime, y, z).expect("small").is_zero()
                        && form.in_a_unchecked(Slot::Z, z, lambda);
                    if ok {
                        let phase = phase_of(alpha, b.dot(z));
                        re.push(phase.cos());
                        im.push(phase.sin());
                    }
                });
            } else {
                let prod = b
                    .values
                    .iter()
                    .fold(T::one(), |acc, &bk| acc * dirichlet_kernel(alpha * T::lit(bk as f64), p3));
                re.push(prod);
            }
        });
    });
    Ok(Complex::new(pairwise_sum(&re), pairwise_sum(&im)))
}

/// `2π α m` with `α m` reduced mod 1 first.
fn phase_of<T: Real>(alpha: T, m: i128) -> T {
    let t = alpha * T::lit(m as f64);
    T::lit(2.0) * T::PI() * (t - t.round())
}

fn pairwise_sum<T: Real>(v: &[T]) -> T {
    if v.len() <= 32 {
        return v.iter().fold(T::zero(), |a, &b| a + b);
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

/// `S(α)` by summing `e(α F)` over every point of the three boxes.
pub fn s_alpha_direct(form: &TrilinearForm, alpha: f64, p1: u64, p2: u64, p3: u64, nondeg: bool) -> Complex<f64> {
    let d = form.dim();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for_each_in_box(d, p1 as i64, |x| {
        for_each_in_box(d, p2 as i64, |y| {
            if nondeg && form.contract(ContractionKind::B, x, y).unwrap().is_zero() {
                return;
            }
            for_each_in_box(d, p3 as i64, |z| {
                let ph = phase_of(alpha, form.eval(x, y, z).unwrap());
                re.push(ph.cos());
                im.push(ph.sin());
            });
        });
    });
    Complex::new(pairwise_sum(&re), pairwise_sum(&im))
}

fn check_modulus(q: u64) -> Result<()> {
    if q == 0 {
        return Err(Error::invalid("modulus must be positive"));
    }
    Ok(())
}

/// `#{(b, b') mod q : B(b, b') ≡ 0 (mod q)}` by a double loop over residues.
pub fn pair_congruence_count(form: &TrilinearForm, q: u64) -> Result<u64> {
    check_modulus(q)?;
    let d = form.dim();
    let qi = q as i128;
    let mut count = 0u64;
    for_each_residue(d, q, |x| {
        let mx = form.slot_matrix(Slot::X, x);
        let mx: Vec<i128> = mx.iter().map(|&v| (v as i128).rem_euclid(qi)).collect();
        for_each_residue(d, q, |y| {
            let ok = (0..d).all(|k| {
                let mut acc: i128 = 0;
                for j in 0..d {
                    acc += mx[j * d + k] * y[j] as i128;
                }
                acc % qi == 0
            });
            if ok {
                count += 1;
            }
        });
    });
    Ok(count)
}

/// `S_{a,q} = Σ_{b mod q} e(a F(b) / q)`; the `z`-sum collapses to
/// `q^{n+1}` on pairs with `B ≡ 0` and vanishes otherwise.
pub fn s_aq(form: &TrilinearForm, a: i64, q: u64) -> Result<Complex<f64>> {
    check_modulus(q)?;
    if gcd(a, q as i64) != 1 {
        return Err(Error::NotCoprime { a, q });
    }
    let z = pair_congruence_count(form, q)?;
    Ok(Complex::new(z as f64 * (q as f64).powi(form.dim() as i32), 0.0))
}

/// Exact integer value of `S_{a,q}` (independent of the unit `a`).
pub fn s_aq_exact(form: &TrilinearForm, q: u64) -> Result<BigInt> {
    let z = pair_congruence_count(form, q)?;
    Ok(BigInt::from(z) * num_traits::pow(BigInt::from(q), form.dim()))
}

/// `S_{a,q}` by the defining triple loop with a table of roots of unity.
pub fn s_aq_direct(form: &TrilinearForm, a: i64, q: u64) -> Complex<f64> {
    let d = form.dim();
    let roots: Vec<Complex<f64>> = (0..q)
        .map(|k| Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / q as f64))
        .collect();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for_each_residue(d, q, |x| {
        for_each_residue(d, q, |y| {
            for_each_residue(d, q, |z| {
                let f = form.eval(x, y, z).unwrap();
                let k = (a as i128 * f).rem_euclid(q as i128) as usize;
                re.push(roots[k].re);
                im.push(roots[k].im);
            });
        });
    });
    Complex::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// `A(q) = q^{-3n-3} Σ_{(a,q)=1} S_{a,q} = φ(q) q^{-2n-2} Z(q)`.
pub fn a_of_q(form: &TrilinearForm, q: u64) -> Result<BigRational> {
    let z = pair_congruence_count(form, q)?;
    let num = BigInt::from(euler_phi(q)) * BigInt::from(z);
    let den = num_traits::pow(BigInt::from(q), 2 * form.dim());
    Ok(BigRational::new(num, den))
}

/// `M(q) = #{b mod q : F(b) ≡ 0}` as `qⁿ Σ_{(x,y)} gcd(q, B(x, y))`.
pub fn m_of_q(form: &TrilinearForm, q: u64) -> Result<u128> {
    check_modulus(q)?;
    let d = form.dim();
    let qi = q as i64;
    let mut total: u128 = 0;
    for_each_residue(d, q, |x| {
        let mx = form.slot_matrix(Slot::X, x);
        let mx: Vec<i64> = mx.iter().map(|&v| v.rem_euclid(qi)).collect();
        for_each_residue(d, q, |y| {
            let mut g = qi;
            for k in 0..d {
                let mut acc: i128 = 0;
                for j in 0..d {
                    acc += mx[j * d + k] as i128 * y[j] as i128;
                }
                g = gcd(g, (acc % qi as i128) as i64);
            }
            total += g as u128;
        });
    });
    Ok(total * (q as u128).pow(form.n() as u32))
}

/// `M(q)` by the full loop over `(Z/q)^{3n+3}`.
pub fn m_of_q_full(form: &TrilinearForm, q: u64) -> u128 {
    let d = form.dim();
    let mut count = 0u128;
    for_each_residue(d, q, |x| {
        for_each_residue(d, q, |y| {
            for_each_residue(d, q, |z| {
                if form.eval(x, y, z).unwrap().rem_euclid(q as i128) == 0 {
                    count += 1;
                }
            });
        });
    });
    count
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub q: u64,
    pub a_q: ExactRational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub q_max: u64,
    pub terms: Vec<SeriesTerm>,
    pub partial: ExactRational,
    /// `|A(Q)|·Q`, a rough size indicator for the tail.
    pub tail_diagnostic: f64,
}

/// `𝔖(Q) = Σ_{q ≤ Q} A(q)` exactly.
pub fn singular_series_trunc(form: &TrilinearForm, q_max: u64) -> Result<SeriesTruncation> {
    if q_max < 1 {
        return Err(Error::invalid("Q must be at least 1"));
    }
    let mut terms = Vec::new();
    let mut partial = BigRational::zero();
    for q in 1..=q_max {
        let a = a_of_q(form, q)?;
        partial += &a;
        terms.push(SeriesTerm { q, a_q: a.into() });
    }
    let last = terms.last().expect("Q ≥ 1").a_q.to_f64();
    Ok(SeriesTruncation {
        q_max,
        terms,
        partial: partial.into(),
        tail_diagnostic: last.abs() * q_max as f64,
    })
}

/// Real and imaginary parts of an oscillatory integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryEstimate<T = f64> {
    pub re: Estimate<T>,
    pub im: Estimate<T>,
}

fn box_point<T: Real>(u: &[T], x: &mut [T]) {
    for (o, &v) in x.iter_mut().zip(u) {
        *o = T::lit(2.0) * v - T::one();
    }
}

fn eval_real<T: Real>(form: &TrilinearForm, x: &[T], y: &[T], z: &[T]) -> T {
    let d = form.dim();
    let c = form.coeffs();
    let mut acc = T::zero();
    for i in 0..d {
        for j in 0..d {
            let xy = x[i] * y[j];
            let base = (i * d + j) * d;
            let mut inner = T::zero();
            for k in 0..d {
                let a = c[base + k];
                if a != 0 {
                    inner = inner + T::lit(a as f64) * z[k];
                }
            }
            acc = acc + xy * inner;
        }
    }
    acc
}

/// `I(β) = ∫_{[-1,1]^{3n+3}} e(β F)` by randomised quasi-Monte Carlo.
pub fn i_beta<T: Real>(form: &TrilinearForm, beta: T, quad: &QuadSpec) -> Result<OscillatoryEstimate<T>> {
    check_quad_dim(form)?;
    let d = form.dim();
    let vol = T::lit(2f64.powi(3 * d as i32));
    let two_pi = T::lit(2.0) * T::PI();
    let est = integrate_unit_cube(3 * d, 2, quad, |u: &[T], out: &mut [T]| {
        let mut p = [T::zero(); 48];
        box_point(u, &mut p[..3 * d]);
        let f = eval_real(form, &p[..d], &p[d..2 * d], &p[2 * d..3 * d]);
        let ph = two_pi * beta * f;
        out[0] = ph.cos();
        out[1] = ph.sin();
    })?;
    Ok(OscillatoryEstimate {
        re: est[0].scaled(vol),
        im: est[1].scaled(vol),
    })
}

/// `sin(2πφt)/(πt)`, equal to `2φ` at `t = 0`.
pub fn sinc_kernel<T: Real>(phi: T, t: T) -> T {
    let x = T::lit(2.0) * T::PI() * phi * t;
    if x.abs() < T::lit(1e-4) {
        // series 2φ (1 - x²/6)
        T::lit(2.0) * phi * (T::one() - x * x / T::lit(6.0))
    } else {
        x.sin() / (T::PI() * t)
    }
}

/// `J(φ) = ∫_{|β| ≤ φ} I(β) dβ = ∫ sin(2πφF)/(πF)` over the box.
pub fn j_of_phi<T: Real>(form: &TrilinearForm, phi: T, quad: &QuadSpec) -> Result<Estimate<T>> {
    if !(phi > T::zero()) {
        return Err(Error::invalid("phi must be positive"));
    }
    check_quad_dim(form)?;
    let d = form.dim();
    let vol = T::lit(2f64.powi(3 * d as i32));
    let est = integrate_unit_cube(3 * d, 1, quad, |u: &[T], out: &mut [T]| {
        let mut p = [T::zero(); 48];
        box_point(u, &mut p[..3 * d]);
        let f = eval_real(form, &p[..d], &p[d..2 * d], &p[2 * d..3 * d]);
        out[0] = sinc_kernel(phi, f);
    })?;
    Ok(est[0].scaled(vol))
}

fn check_quad_dim(form: &TrilinearForm) -> Result<()> {
    if 3 * form.dim() > 48 {
        return Err(Error::invalid("quadrature supports n ≤ 15"));
    }
    Ok(())
}

/// The arc `{α : |qα − a| ≤ q P^{-1+2θ}}`; implied constants set to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub a: i64,
    pub q: u64,
    pub theta: f64,
    pub p: f64,
}

impl ArcSpec {
    pub fn new(a: i64, q: u64, theta: f64, p: f64) -> Result<Self> {
        if q == 0 || a < 0 || a as u64 >= q {
            return Err(Error::invalid("need 0 ≤ a < q"));
        }
        if gcd(a, q as i64) != 1 {
            return Err(Error::NotCoprime { a, q });
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid("theta must lie in (0, 1)"));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::invalid("P must exceed 1"));
        }
        Ok(ArcSpec { a, q, theta, p })
    }

    pub fn radius(&self) -> f64 {
        self.q as f64 * self.p.powf(-1.0 + 2.0 * self.theta)
    }
}

pub fn in_major_arc(alpha: f64, spec: &ArcSpec) -> bool {
    (spec.q as f64 * alpha - spec.a as f64).abs() <= spec.radius()
}

/// Distance to the nearest integer.
pub fn dist_to_int(t: f64) -> f64 {
    (t - t.round()).abs()
}

/// `#{(u, v) in the boxes : ‖α C_k(u, v)‖ ≤ h_inv ∀k}` for the contraction
/// `C` of the given kind (`M₃` for `B`, `M₂` for `B'`, `M₁` for `B''`).
pub fn count_m(form: &TrilinearForm, kind: ContractionKind, alpha: f64, h1: u64, h2: u64, h_inv: f64) -> u64 {
    let d = form.dim();
    let mut count = 0;
    for_each_in_box(d, h1 as i64, |u| {
        for_each_in_box(d, h2 as i64, |v| {
            let c = form.contract(kind, u, v).expect("small box");
            if c.values.iter().all(|&ck| dist_to_int(alpha * ck as f64) <= h_inv) {
                count += 1;
            }
        });
    });
    count
}

pub fn count_m3(form: &TrilinearForm, alpha: f64, h1: u64, h2: u64, h_inv: f64) -> u64 {
    count_m(form, ContractionKind::B, alpha, h1, h2, h_inv)
}

/// `∫₀¹ S(α) dα` by the trapezoid rule on `nodes` intervals; exact for
/// trigonometric polynomials of degree below `nodes`.
pub fn parseval_count(form: &TrilinearForm, p1: u64, p2: u64, p3: u64, nodes: usize) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..nodes {
        let a = k as f64 / nodes as f64;
        acc += s_alpha(form, a, p1, p2, p3, CountVariant::Nondeg3)?.re;
    }
    Ok(acc / nodes as f64)
}
