//! Triple sums over the hyperbolic region `l·m·k ≤ P`, extraction of the
//! leading constant of `½Cβ² P^β log²P`, and empirical checks of the slice
//! conditions on a shell-count function.

use std::collections::HashMap;
use std::ops::AddAssign;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::enumeration::{h_function, CountVariant};
use crate::error::{Error, Result};
use crate::form::TrilinearForm;
use crate::scalar::Real;

/// `Σ_{l m k ≤ P} h(l, m, k)` with the loops `l ≤ P`, `m ≤ P/l`,
/// `k ≤ P/(lm)`.
pub fn sum_hyperbolic<T, H>(mut h: H, p: u64) -> T
where
    T: Zero + AddAssign,
    H: FnMut(u64, u64, u64) -> T,
{
    let mut total = T::zero();
    for l in 1..=p {
        for m in 1..=p / l {
            for k in 1..=p / (l * m) {
                total += h(l, m, k);
            }
        }
    }
    total
}

/// The same sum grouped by the product `j = lmk`, for `j ≤ P`.
pub fn sum_hyperbolic_by_product<T, H>(mut h: H, p: u64) -> T
where
    T: Zero + AddAssign,
    H: FnMut(u64, u64, u64) -> T,
{
    let mut total = T::zero();
    for j in 1..=p {
        for l in (1..=j).filter(|l| j % l == 0) {
            let r = j / l;
            for m in (1..=r).filter(|m| r % m == 0) {
                total += h(l, m, r / m);
            }
        }
    }
    total
}

/// `S(P)` for `h ≡ 1`, i.e. `Σ_{j ≤ P} d₃(j)`, in `O(P log P)`.
pub fn divisor3_summatory(p: u64) -> u64 {
    let mut total = 0;
    for l in 1..=p {
        for m in 1..=p / l {
            total += p / (l * m);
        }
    }
    total
}

/// `Σ_{lmk ≤ P} lmk`, closed form in the innermost index.
pub fn product_weighted_summatory(p: u64) -> u128 {
    let mut total: u128 = 0;
    for l in 1..=p {
        for m in 1..=p / l {
            let kmax = (p / (l * m)) as u128;
            total += (l as u128) * (m as u128) * kmax * (kmax + 1) / 2;
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadingFit<T = f64> {
    pub beta: T,
    /// `S(P)/P^β ≈ a log²P + b log P + c`.
    pub a: T,
    pub b: T,
    pub c: T,
    pub c_hat: T,
    pub residuals: Vec<T>,
    pub max_rel_residual: T,
}

/// Least-squares fit of `S(P)/P^β` against `(log²P, log P, 1)`;
/// `Ĉ = 2a/β²`.
pub fn fit_leading<T: Real>(points: &[(T, T)], beta: T) -> Result<LeadingFit<T>> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit("need at least three points".into()));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) || points[0].0 <= T::one() {
        return Err(Error::DegenerateFit("P values must increase and exceed 1".into()));
    }
    let mut ata = [[T::zero(); 3]; 3];
    let mut atb = [T::zero(); 3];
    let rows: Vec<([T; 3], T)> = points
        .iter()
        .map(|&(p, s)| {
            let l = p.ln();
            ([l * l, l, T::one()], s / p.powf(beta))
        })
        .collect();
    for (r, y) in &rows {
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] = ata[i][j] + r[i] * r[j];
            }
            atb[i] = atb[i] + r[i] * *y;
        }
    }
    let coef = solve3(ata, atb)?;
    let mut residuals = Vec::new();
    let mut worst = T::zero();
    for (r, y) in &rows {
        let fit = coef[0] * r[0] + coef[1] * r[1] + coef[2];
        residuals.push(*y - fit);
        worst = worst.max(((*y - fit) / *y).abs());
    }
    Ok(LeadingFit {
        beta,
        a: coef[0],
        b: coef[1],
        c: coef[2],
        c_hat: T::lit(2.0) * coef[0] / (beta * beta),
        residuals,
        max_rel_residual: worst,
    })
}

fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Result<[T; 3]> {
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("rows");
        if a[piv][col].abs() <= scale * T::lit(1e-13) {
            return Err(Error::DegenerateFit("singular normal equations".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] = a[r][c] - f * a[col][c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = [T::zero(); 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s = s - a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Fits the leading constant of `Σ_{lmk≤P} h` over `p_list`.
pub fn fit_leading_h<H>(mut h: H, p_list: &[u64], beta: f64) -> Result<LeadingFit>
where
    H: FnMut(u64, u64, u64) -> f64,
{
    let pts: Vec<(f64, f64)> = p_list
        .iter()
        .map(|&p| (p as f64, sum_hyperbolic(&mut h, p)))
        .collect();
    fit_leading(&pts, beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBParams {
    pub beta: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl BBParams {
    pub fn new(beta: f64, c: f64, d: f64, alpha: f64, delta: f64) -> Result<Self> {
        let p = BBParams { beta, c, d, alpha, delta };
        if ![beta, c, d, alpha, delta].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("BB parameters must be finite"));
        }
        if beta <= 0.0 || delta <= 0.0 || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid("need beta > 0, delta > 0, 0 < alpha ≤ 1"));
        }
        Ok(p)
    }
}

/// Shell counts `h(l₁, l₂, l₃)` from enumeration, memoised.
pub struct ShellCounter<'a> {
    form: &'a TrilinearForm,
    variant: CountVariant,
    cache: HashMap<(u64, u64, u64), u64>,
}

impl<'a> ShellCounter<'a> {
    pub fn new(form: &'a TrilinearForm, variant: CountVariant) -> Result<Self> {
        variant.validate(form)?;
        Ok(ShellCounter {
            form,
            variant,
            cache: HashMap::new(),
        })
    }

    pub fn get(&mut self, l1: u64, l2: u64, l3: u64) -> u64 {
        let (form, variant) = (self.form, self.variant);
        *self
            .cache
            .entry((l1, l2, l3))
            .or_insert_with(|| h_function(form, l1, l2, l3, variant).expect("validated variant"))
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotBudget {
    /// Largest index on any axis.
    pub max_index: u64,
    /// First indices `l` at which `c₁(l)` is tabulated.
    pub l_values: [u64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConstant {
    pub l: u64,
    pub windows: Vec<(u64, f64)>,
    pub rel_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub params: BBParams,
    /// `Σ_{l,m,k ≤ L} h / L^{3β}` against `C`.
    pub box_ratio: f64,
    /// `c₁(l) ≈ Σ_{m,k ≤ M} h(l, m, k) / M^{2β}` over two windows.
    pub c1: Vec<SliceConstant>,
    /// `c̃₃(l, m) ≈ Σ_{k ≤ K} h(l, m, k) / K^β` over two windows.
    pub c3_tilde: Vec<SliceConstant>,
    pub shells_evaluated: usize,
}

/// Tabulates the constants of the slice conditions from enumeration; no
/// bounds are asserted.
pub fn spot_check_conditions(
    form: &TrilinearForm,
    variant: CountVariant,
    params: &BBParams,
    budget: &SpotBudget,
) -> Result<ConditionReport> {
    if budget.max_index < 2 {
        return Err(Error::invalid("max_index must be at least 2"));
    }
    let mut h = ShellCounter::new(form, variant)?;
    let big = budget.max_index;
    let small = (big / 2).max(1);
    let beta = params.beta;
    let mut total = 0u64;
    for l in 1..=big {
        for m in 1..=big {
            for k in 1..=big {
                total += h.get(l, m, k);
            }
        }
    }
    let box_ratio = total as f64 / (big as f64).powf(3.0 * beta) / params.c;
    let deviation = |w: &[(u64, f64)]| {
        let (a, b) = (w[0].1, w[1].1);
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    };
    let mut c1 = Vec::new();
    for &l in &budget.l_values {
        let windows: Vec<(u64, f64)> = [small, big]
            .iter()
            .map(|&w| {
                let mut s = 0u64;
                for m in 1..=w {
                    for k in 1..=w {
                        s += h.get(l, m, k);
                    }
                }
                (w, s as f64 / (w as f64).powf(2.0 * beta))
            })
            .collect();
        let rel_deviation = deviation(&windows);
        c1.push(SliceConstant { l, windows, rel_deviation });
    }
    let mut c3_tilde = Vec::new();
    for &l in &budget.l_values {
        let windows: Vec<(u64, f64)> = [small, big]
            .iter()
            .map(|&w| {
                let s: u64 = (1..=w).map(|k| h.get(l, 1, k)).sum();
                (w, s as f64 / (w as f64).powf(beta))
            })
            .collect();
        let rel_deviation = deviation(&windows);
        c3_tilde.push(SliceConstant { l, windows, rel_deviation });
    }
    Ok(ConditionReport {
        params: *params,
        box_ratio,
        c1,
        c3_tilde,
        shells_evaluated: h.cached(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::count_height;
    use crate::form::random_generic_form;

    #[test]
    fn divisor_sums() {
        assert_eq!(sum_hyperbolic(|_, _, _| 1u64, 8), 38);
        assert_eq!(sum_hyperbolic(|_, _, _| 1u64, 1), 1);
        assert_eq!(divisor3_summatory(8), 38);
        let mut brute = 0u64;
        for l in 1..=8u64 {
            for m in 1..=8u64 {
                for k in 1..=8u64 {
                    if l * m * k <= 8 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 38);
        assert_eq!(
            product_weighted_summatory(40) as u64,
            sum_hyperbolic(|l, m, k| l * m * k, 40)
        );
    }

    #[test]
    fn loop_order_invariant() {
        let h = |l: u64, m: u64, k: u64| (l * 7 + m * m * 3 + k * 11) % 13;
        for p in [1, 5, 17, 60] {
            assert_eq!(sum_hyperbolic(h, p), sum_hyperbolic_by_product(h, p));
        }
    }

    #[test]
    fn fit_recovers_known_shape() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 1e4]
            .iter()
            .map(|&p: &f64| (p, p * (0.5 * p.ln().powi(2) + 0.3 * p.ln() - 0.2)))
            .collect();
        let fit = fit_leading(&pts, 1.0).unwrap();
        assert!((fit.c_hat - 1.0).abs() < 1e-9);
        assert!(fit_leading(&pts[..2], 1.0).is_err());
        let same = vec![(10.0, 1.0), (10.0, 1.0), (10.0, 1.0)];
        assert!(fit_leading(&same, 1.0).is_err());
        let single: Vec<(f32, f32)> = pts.iter().map(|&(a, b)| (a as f32, b as f32)).collect();
        assert!((fit_leading(&single, 1.0f32).unwrap().c_hat - 1.0).abs() < 1e-2);
    }

    #[test]
    fn shells_give_height_counts() {
        let f = random_generic_form(1, 3, 3).unwrap();
        let u = CountVariant::u_default(&f);
        let mut h = ShellCounter::new(&f, u).unwrap();
        for b in [1, 5, 12] {
            let s = sum_hyperbolic(|l, m, k| h.get(l, m, k), b);
            assert_eq!(s, count_height(&f, b, false, u).unwrap().count);
        }
    }

    #[test]
    fn spot_checks_run() {
        let f = random_generic_form(1, 3, 3).unwrap();
        let p = BBParams::new(1.0, 1.0, 1.0, 0.5, 0.1).unwrap();
        let rep = spot_check_conditions(&f, CountVariant::u_default(&f), &p, &SpotBudget { max_index: 4, l_values: [1, 2] }).unwrap();
        assert_eq!(rep.c1.len(), 2);
        assert!(rep.box_ratio > 0.0);
        assert!(BBParams::new(0.0, 1.0, 1.0, 0.5, 0.1).is_err());
    }
}
