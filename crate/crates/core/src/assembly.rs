//! Assembly of the predicted leading constant from its local factors, and
//! comparison with exact counts.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::arith::primes_up_to;
use crate::enumeration::{count_height, scaled_projective_count_with, CountVariant};
use crate::error::{Error, Result};
use crate::exact::ExactRational;
use crate::exp_sums::singular_series_trunc;
use crate::form::TrilinearForm;
use crate::local::{euler_product, primitive_factor, sigma_inf_leray, tamagawa_inf_from, DEFAULT_WORK_BUDGET};
use crate::exp_sums::j_of_phi;
use crate::qmc::{Estimate, QuadSpec};
use crate::scalar::rational_to_f64;

/// `α(V) = 1/(2n³)`.
pub fn alpha_v(n: usize) -> Result<BigRational> {
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(BigRational::new(BigInt::one(), BigInt::from(2 * n * n * n)))
}

/// `β(V) = 1`.
pub fn beta_v() -> u32 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyParams {
    pub p_max: u64,
    pub r_max: u32,
    pub q_max: u64,
    pub phi: f64,
    pub quad: QuadSpec,
    pub budget: u128,
    /// Also run the sinc estimator of `J` (slow; reported only).
    pub with_sinc: bool,
}

impl AssemblyParams {
    pub fn new(p_max: u64, q_max: u64, phi: f64, quad: QuadSpec) -> Self {
        AssemblyParams {
            p_max,
            r_max: 2,
            q_max,
            phi,
            quad,
            budget: DEFAULT_WORK_BUDGET,
            with_sinc: false,
        }
    }
}

/// Conversion factors between the affine and the projective counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeFactors {
    /// Identification of `±x, ±y, ±z`.
    pub sign_identification: ExactRational,
    /// Height exponent: projective `B` corresponds to `B^{1/n}` affine.
    pub height_exponent: ExactRational,
    /// `Π_{p ≤ p_max} (1 − p^{-n})³`, the truncated `ζ(n)^{-3}` from
    /// restricting to primitive vectors.
    pub primitive_density: ExactRational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub b: u64,
    pub observed_affine: u64,
    pub predicted_affine: f64,
    pub ratio_affine: f64,
    pub observed_projective: f64,
    pub predicted_projective: f64,
    pub ratio_projective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub form_id: String,
    pub n: usize,
    pub params: AssemblyParams,
    pub alpha_v: ExactRational,
    pub beta_v: u32,
    /// `J` from the Leray estimator.
    pub j: Estimate,
    pub j_sinc: Option<Estimate>,
    pub euler_product: ExactRational,
    pub euler_tail_estimate: f64,
    pub series_partial: ExactRational,
    pub series_tail_diagnostic: f64,
    /// `Π σ_p · J`.
    pub sigma: f64,
    /// `𝔖(Q) · J`.
    pub sigma_from_series: f64,
    /// `σ · Π (1 − p^{-n})³`.
    pub sigma_prime: f64,
    pub tau_inf: f64,
    pub tau_finite: ExactRational,
    /// `α β τ_∞ Π τ_p`.
    pub c_v: f64,
    /// `(1/16) J Π σ_p Π (1 − p^{-n})³`.
    pub c_v_closed: f64,
    pub identity_residual: f64,
    pub bridge: BridgeFactors,
    pub comparisons: Vec<Comparison>,
}

/// Builds both decompositions of the leading constant at matched
/// truncations.
pub fn assemble(form: &TrilinearForm, params: &AssemblyParams) -> Result<PredictionReport> {
    let n = form.n();
    let alpha = alpha_v(n)?;
    let beta = beta_v();
    let euler = euler_product(form, params.p_max, params.r_max, params.budget)?;
    let series = singular_series_trunc(form, params.q_max)?;
    let j = sigma_inf_leray::<f64>(form, &params.quad)?;
    let j_sinc = if params.with_sinc {
        Some(j_of_phi::<f64>(form, params.phi, &params.quad)?)
    } else {
        None
    };
    let mut tau_finite = BigRational::one();
    let mut prim = BigRational::one();
    for (p, s) in primes_up_to(params.p_max).into_iter().zip(&euler.factors) {
        let f = primitive_factor(p, n);
        tau_finite *= &f * &s.value.0;
        prim *= f;
    }
    let sigma_prod = rational_to_f64(&euler.product.0);
    let prim_f = rational_to_f64(&prim);
    let tau_inf = tamagawa_inf_from(n, j.value);
    let c_v = rational_to_f64(&alpha) * beta as f64 * tau_inf * rational_to_f64(&tau_finite);
    let c_v_closed = j.value * sigma_prod * prim_f / 16.0;
    let identity_residual = (c_v - c_v_closed).abs() / c_v_closed.abs();
    let sigma = sigma_prod * j.value;
    Ok(PredictionReport {
        form_id: form.form_id(),
        n,
        params: *params,
        alpha_v: alpha.into(),
        beta_v: beta,
        j,
        j_sinc,
        euler_product: euler.product.clone(),
        euler_tail_estimate: euler.tail_estimate,
        series_partial: series.partial.clone(),
        series_tail_diagnostic: series.tail_diagnostic,
        sigma,
        sigma_from_series: series.partial.to_f64() * j.value,
        sigma_prime: sigma * prim_f,
        tau_inf,
        tau_finite: tau_finite.into(),
        c_v,
        c_v_closed,
        identity_residual,
        bridge: BridgeFactors {
            sign_identification: BigRational::new(BigInt::one(), BigInt::from(8)).into(),
            height_exponent: BigRational::new(BigInt::one(), BigInt::from(n)).into(),
            primitive_density: prim.into(),
        },
        comparisons: Vec::new(),
    })
}

/// `½ n² σ Bⁿ log²B`.
pub fn predicted_affine(n: usize, sigma: f64, b: f64) -> f64 {
    0.5 * (n * n) as f64 * sigma * b.powi(n as i32) * b.ln().powi(2)
}

/// `C(V) B log²B`.
pub fn predicted_projective(c_v: f64, b: f64) -> f64 {
    c_v * b * b.ln().powi(2)
}

/// Adds observed/predicted rows for each `B` (counts use the default `U`).
pub fn compare_counts(form: &TrilinearForm, b_list: &[u64], report: &PredictionReport) -> Result<PredictionReport> {
    compare_counts_with(form, b_list, report, CountVariant::u_default(form))
}

pub fn compare_counts_with(
    form: &TrilinearForm,
    b_list: &[u64],
    report: &PredictionReport,
    variant: CountVariant,
) -> Result<PredictionReport> {
    if form.form_id() != report.form_id {
        return Err(Error::invalid("report was assembled for a different form"));
    }
    let n = form.n();
    let mut out = report.clone();
    for &b in b_list {
        if b < 2 {
            return Err(Error::invalid("comparisons need B ≥ 2"));
        }
        let observed_affine = count_height(form, b, false, variant)?.count;
        let predicted_aff = predicted_affine(n, report.sigma, b as f64);
        let observed_projective = scaled_projective_count_with(form, b as f64, variant)?;
        let predicted_proj = predicted_projective(report.c_v, b as f64);
        out.comparisons.push(Comparison {
            b,
            observed_affine,
            predicted_affine: predicted_aff,
            ratio_affine: observed_affine as f64 / predicted_aff,
            observed_projective,
            predicted_projective: predicted_proj,
            ratio_projective: observed_projective / predicted_proj,
        });
    }
    Ok(out)
}
