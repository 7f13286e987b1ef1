//! Exact point counts on `F = 0`: boxes, hyperbolic height balls, sup-norm
//! shells, primitive counts and single fibers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{
    box_size, decode_box_index, encode_box_index, ext_gcd, floor_div, ceil_div, for_each_in_box,
    gcd_slice, mobius_table, sup_norm,
};
use crate::error::{Error, Result};
use crate::form::{ContractionKind, Slot, TrilinearForm};

/// Which points are counted. `U`, `N1` and `NPrime` carry the `λ` of the
/// admissible sets `A_{i,λ}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CountVariant {
    /// `F = 0` only.
    All,
    /// `F = 0` and `B(x, y) ≠ 0`.
    Nondeg3,
    /// All three contractions nonzero, `x, y, z` admissible.
    U { lambda: usize },
    /// `x ∈ A_{1,λ}` and `B(x, y) ≠ 0`.
    N1 { lambda: usize },
    /// `x ∈ A_{1,λ}`, `y ∈ A_{2,λ}` and `B(x, y) ≠ 0`.
    NPrime { lambda: usize },
}

impl CountVariant {
    /// `U` with the default `λ = n`.
    pub fn u_default(form: &TrilinearForm) -> Self {
        CountVariant::U { lambda: form.n() }
    }

    pub fn lambda(&self) -> Option<usize> {
        match *self {
            CountVariant::U { lambda }
            | CountVariant::N1 { lambda }
            | CountVariant::NPrime { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            CountVariant::All => "all".into(),
            CountVariant::Nondeg3 => "nondeg3".into(),
            CountVariant::U { lambda } => format!("u(lambda={lambda})"),
            CountVariant::N1 { lambda } => format!("n1(lambda={lambda})"),
            CountVariant::NPrime { lambda } => format!("nprime(lambda={lambda})"),
        }
    }

    pub fn validate(&self, form: &TrilinearForm) -> Result<()> {
        if let Some(l) = self.lambda() {
            if l < 1 || l > form.dim() {
                return Err(Error::invalid(format!(
                    "lambda must lie in [1, {}], got {l}",
                    form.dim()
                )));
            }
        }
        Ok(())
    }

    fn filters_x(&self) -> bool {
        self.lambda().is_some()
    }

    fn filters_y(&self) -> bool {
        matches!(self, CountVariant::U { .. } | CountVariant::NPrime { .. })
    }

    fn filters_z(&self) -> bool {
        matches!(self, CountVariant::U { .. })
    }

    fn needs_nondeg(&self) -> bool {
        !matches!(self, CountVariant::All)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CountBounds {
    Box { p1: u64, p2: u64, p3: u64 },
    Height { b: u64, primitive: bool },
    Shell { l1: u64, l2: u64, l3: u64 },
    Fiber { x: Vec<i64>, p2: u64, p3: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub form_id: String,
    pub variant: CountVariant,
    pub bounds: CountBounds,
    pub count: u64,
    pub seconds: f64,
}

const CACHE_LIMIT: u64 = 1 << 22;

/// `A_{i,λ}` membership over a box, tabulated when the box is small.
struct Admissible {
    slot: Slot,
    lambda: usize,
    bound: i64,
    table: Option<Vec<bool>>,
}

impl Admissible {
    fn new(form: &TrilinearForm, slot: Slot, lambda: usize, bound: i64) -> Self {
        let d = form.dim();
        let size = box_size(d, bound);
        let table = (size <= CACHE_LIMIT).then(|| {
            (0..size)
                .into_par_iter()
                .map_init(
                    || vec![0i64; d],
                    |v, i| {
                        decode_box_index(i, d, bound, v);
                        form.in_a_unchecked(slot, v, lambda)
                    },
                )
                .collect()
        });
        Admissible {
            slot,
            lambda,
            bound,
            table,
        }
    }

    fn contains(&self, form: &TrilinearForm, v: &[i64]) -> bool {
        match &self.table {
            Some(t) if sup_norm(v) <= self.bound => t[encode_box_index(v, self.bound) as usize],
            _ => form.in_a_unchecked(self.slot, v, self.lambda),
        }
    }
}

/// Per-run filter state for a variant.
struct Filters<'a> {
    form: &'a TrilinearForm,
    x: Option<Admissible>,
    y: Option<Admissible>,
    z: Option<Admissible>,
}

impl<'a> Filters<'a> {
    fn new(form: &'a TrilinearForm, variant: CountVariant, bx: i64, by: i64, bz: i64) -> Result<Self> {
        variant.validate(form)?;
        let lambda = variant.lambda().unwrap_or(1);
        Ok(Filters {
            form,
            x: variant.filters_x().then(|| Admissible::new(form, Slot::X, lambda, bx)),
            y: variant.filters_y().then(|| Admissible::new(form, Slot::Y, lambda, by)),
            z: variant.filters_z().then(|| Admissible::new(form, Slot::Z, lambda, bz)),
        })
    }

    fn accept_x(&self, x: &[i64]) -> bool {
        self.x.as_ref().map_or(true, |a| a.contains(self.form, x))
    }

    fn accept_y(&self, y: &[i64]) -> bool {
        self.y.as_ref().map_or(true, |a| a.contains(self.form, y))
    }

    /// `z` test for variant `U`, given the matrices of `B'(x, ·)` and
    /// `B''(y, ·)`.
    fn accept_z(&self, z: &[i64], mx: &[i64], my: &[i64]) -> bool {
        match &self.z {
            None => true,
            Some(a) => {
                let d = z.len();
                nonzero_image(mx, z, d) && nonzero_image(my, z, d) && a.contains(self.form, z)
            }
        }
    }
}

/// `M z ≠ 0` for a row-major `d x d` matrix.
fn nonzero_image(m: &[i64], z: &[i64], d: usize) -> bool {
    (0..d).any(|r| {
        let row = &m[r * d..(r + 1) * d];
        row.iter().zip(z).map(|(&a, &b)| a as i128 * b as i128).sum::<i128>() != 0
    })
}

/// `B(x, y)` from the slice matrix of `x` (rows `y`, columns `z`).
fn contract_with(mx: &[i64], y: &[i64], out: &mut [i64]) {
    let d = y.len();
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc: i128 = 0;
        for j in 0..d {
            acc += mx[j * d + k] as i128 * y[j] as i128;
        }
        *o = i64::try_from(acc).expect("contraction fits in i64");
    }
}

/// Number of `(u, v) ∈ [-p, p]²` with `a u + c v = t`, `a, c ≠ 0`.
fn count_two_var(a: i128, c: i128, t: i128, p: i128) -> u64 {
    let (g, s, _) = ext_gcd(a, c);
    if t % g != 0 {
        return 0;
    }
    let (a, c, t) = (a / g, c / g, t / g);
    // a s + c r = 1 with the s, r of ext_gcd(a, c) divided through by g
    let (_, s1, r1) = ext_gcd(a, c);
    let _ = s;
    let u0 = t * s1;
    let v0 = t * r1;
    // u = u0 + c k, v = v0 - a k
    let (lo1, hi1) = range_for(u0, c, p);
    let (lo2, hi2) = range_for(v0, -a, p);
    let lo = lo1.max(lo2);
    let hi = hi1.min(hi2);
    if hi < lo {
        0
    } else {
        (hi - lo + 1) as u64
    }
}

/// Range of `k` with `|base + step k| ≤ p`, `step ≠ 0`.
fn range_for(base: i128, step: i128, p: i128) -> (i128, i128) {
    if step > 0 {
        (ceil_div(-p - base, step), floor_div(p - base, step))
    } else {
        (ceil_div(p - base, step), floor_div(-p - base, step))
    }
}

/// `#{z ∈ [-p, p]^d : b·z = 0}`; `b` may vanish.
pub fn fiber_count_in_box(b: &[i64], p: i64) -> u64 {
    if p < 0 {
        return 0;
    }
    let side = (2 * p + 1) as u64;
    let mut nz: Vec<(usize, i64)> = b.iter().copied().enumerate().filter(|&(_, v)| v != 0).collect();
    let free = side.pow((b.len() - nz.len()) as u32);
    match nz.len() {
        0 => free,
        1 => free,
        _ => {
            nz.sort_by_key(|&(_, v)| std::cmp::Reverse(v.abs()));
            let (a, c) = (nz[0].1 as i128, nz[1].1 as i128);
            let rest: Vec<i128> = nz[2..].iter().map(|&(_, v)| v as i128).collect();
            let mut total = 0u64;
            if rest.is_empty() {
                total = count_two_var(a, c, 0, p as i128);
            } else {
                for_each_in_box(rest.len(), p, |w| {
                    let s: i128 = rest.iter().zip(w).map(|(&r, &z)| r * z as i128).sum();
                    total += count_two_var(a, c, -s, p as i128);
                });
            }
            total * free
        }
    }
}

/// Visits every `z ∈ [-p, p]^d` with `b·z = 0` by solving for the
/// coordinate with the largest `|b_k|` (`b ≠ 0`).
pub fn for_each_fiber_point(b: &[i64], p: i64, mut f: impl FnMut(&[i64])) {
    let d = b.len();
    let (k, bk) = b
        .iter()
        .copied()
        .enumerate()
        .max_by_key(|&(_, v)| v.abs())
        .expect("nonempty");
    assert!(bk != 0, "fiber of the zero vector");
    let mut z = vec![0i64; d];
    for_each_in_box(d - 1, p, |w| {
        let mut s: i128 = 0;
        for i in 0..d - 1 {
            let idx = if i < k { i } else { i + 1 };
            s += b[idx] as i128 * w[i] as i128;
        }
        if s % bk as i128 != 0 {
            return;
        }
        let zk = -s / bk as i128;
        if zk.abs() > p as i128 {
            return;
        }
        for i in 0..d - 1 {
            let idx = if i < k { i } else { i + 1 };
            z[idx] = w[i];
        }
        z[k] = zk as i64;
        f(&z);
    });
}

fn check_dim(form: &TrilinearForm, v: &[i64]) -> Result<()> {
    if v.len() != form.dim() {
        return Err(Error::Dimension {
            expected: form.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

fn check_bound(v: u64, what: &str) -> Result<i64> {
    i64::try_from(v)
        .ok()
        .filter(|&p| p <= 1 << 20)
        .ok_or_else(|| Error::invalid(format!("{what} is out of range")))
}

/// Number of `z ∈ [-P₃, P₃]^{n+1}` with `B(x, y)·z = 0`, with the `z`
/// filters of the variant.
pub fn count_fiber_z(form: &TrilinearForm, x: &[i64], y: &[i64], p3: u64, variant: CountVariant) -> Result<u64> {
    check_dim(form, x)?;
    check_dim(form, y)?;
    let p3 = check_bound(p3, "P3")?;
    let b = form.contract(ContractionKind::B, x, y)?;
    if b.is_zero() {
        return Err(Error::DegenerateFiber);
    }
    let filters = Filters::new(form, variant, 0, 0, p3)?;
    if variant.filters_z() {
        let mx = form.slot_matrix(Slot::X, x);
        let my = form.slot_matrix(Slot::Y, y);
        let mut count = 0;
        for_each_fiber_point(&b.values, p3, |z| {
            if filters.accept_z(z, &mx, &my) {
                count += 1;
            }
        });
        Ok(count)
    } else {
        Ok(fiber_count_in_box(&b.values, p3))
    }
}

/// Same count by brute force over the whole box; reference for tests.
pub fn count_fiber_z_naive(form: &TrilinearForm, x: &[i64], y: &[i64], p3: i64, variant: CountVariant) -> Result<u64> {
    let b = form.contract(ContractionKind::B, x, y)?;
    if b.is_zero() {
        return Err(Error::DegenerateFiber);
    }
    let lambda = variant.lambda().unwrap_or(1);
    let mut count = 0;
    for_each_in_box(form.dim(), p3, |z| {
        if b.dot(z) != 0 {
            return;
        }
        if variant.filters_z() {
            let ok = !form.contract(ContractionKind::BPrime, x, z).unwrap().is_zero()
                && !form.contract(ContractionKind::BDoublePrime, y, z).unwrap().is_zero()
                && form.in_a_unchecked(Slot::Z, z, lambda);
            if !ok {
                return;
            }
        }
        count += 1;
    });
    Ok(count)
}

/// Sum over all `x` of the box of `body(x, partial)`; parallel over `x`.
fn sum_over_x<T, F>(d: usize, bound: i64, init: impl Fn() -> T + Sync + Send, body: F, merge: impl Fn(T, T) -> T + Sync + Send) -> T
where
    T: Send,
    F: Fn(&[i64], &mut T) + Sync + Send,
{
    (0..box_size(d, bound))
        .into_par_iter()
        .fold(
            || (init(), vec![0i64; d]),
            |(mut acc, mut x), i| {
                decode_box_index(i, d, bound, &mut x);
                body(&x, &mut acc);
                (acc, x)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(&init, &merge)
}

fn box_count_value(form: &TrilinearForm, p1: i64, p2: i64, p3: i64, variant: CountVariant) -> Result<u64> {
    let d = form.dim();
    let filters = Filters::new(form, variant, p1, p2, p3)?;
    let slab = box_size(d, p3);
    let total = sum_over_x(
        d,
        p1,
        || 0u64,
        |x, acc| {
            if !filters.accept_x(x) {
                return;
            }
            let mx = form.slot_matrix(Slot::X, x);
            let mut b = vec![0i64; d];
            for_each_in_box(d, p2, |y| {
                if !filters.accept_y(y) {
                    return;
                }
                contract_with(&mx, y, &mut b);
                if b.iter().all(|&v| v == 0) {
                    if !variant.needs_nondeg() {
                        *acc += slab;
                    }
                    return;
                }
                if variant.filters_z() {
                    let my = form.slot_matrix(Slot::Y, y);
                    for_each_fiber_point(&b, p3, |z| {
                        if filters.accept_z(z, &mx, &my) {
                            *acc += 1;
                        }
                    });
                } else {
                    *acc += fiber_count_in_box(&b, p3);
                }
            });
        },
        |a, b| a + b,
    );
    Ok(total)
}

/// Exact count over `x ∈ [-P₁, P₁]^{n+1}`, `y ∈ [-P₂, P₂]^{n+1}`,
/// `z ∈ [-P₃, P₃]^{n+1}`.
pub fn count_box(form: &TrilinearForm, p1: u64, p2: u64, p3: u64, variant: CountVariant) -> Result<CountReport> {
    let start = Instant::now();
    let count = box_count_value(
        form,
        check_bound(p1, "P1")?,
        check_bound(p2, "P2")?,
        check_bound(p3, "P3")?,
        variant,
    )?;
    Ok(CountReport {
        form_id: form.form_id(),
        variant,
        bounds: CountBounds::Box { p1, p2, p3 },
        count,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `hist[h]` = number of counted triples with `|x|·|y|·|z| = h` exactly
/// (sup norms, all three vectors nonzero), for `h ≤ bmax`.
pub fn height_profile(form: &TrilinearForm, bmax: u64, primitive: bool, variant: CountVariant) -> Result<Vec<u64>> {
    let bm = check_bound(bmax, "B")?;
    let d = form.dim();
    let filters = Filters::new(form, variant, bm, bm, bm)?;
    let len = bm as usize + 1;
    let hist = sum_over_x(
        d,
        bm,
        || vec![0u64; len],
        |x, hist| {
            let l1 = sup_norm(x);
            if l1 == 0 || (primitive && gcd_slice(x) != 1) || !filters.accept_x(x) {
                return;
            }
            let mx = form.slot_matrix(Slot::X, x);
            let mut b = vec![0i64; d];
            for_each_in_box(d, bm / l1, |y| {
                let l2 = sup_norm(y);
                if l2 == 0 || (primitive && gcd_slice(y) != 1) || !filters.accept_y(y) {
                    return;
                }
                let l12 = l1 * l2;
                let zmax = bm / l12;
                contract_with(&mx, y, &mut b);
                if b.iter().all(|&v| v == 0) {
                    if variant.needs_nondeg() {
                        return;
                    }
                    if primitive {
                        for_each_in_box(d, zmax, |z| {
                            let l3 = sup_norm(z);
                            if l3 > 0 && gcd_slice(z) == 1 {
                                hist[(l12 * l3) as usize] += 1;
                            }
                        });
                    } else {
                        for l3 in 1..=zmax {
                            hist[(l12 * l3) as usize] += box_size(d, l3) - box_size(d, l3 - 1);
                        }
                    }
                    return;
                }
                if primitive || variant.filters_z() {
                    let my = if variant.filters_z() {
                        form.slot_matrix(Slot::Y, y)
                    } else {
                        Vec::new()
                    };
                    for_each_fiber_point(&b, zmax, |z| {
                        let l3 = sup_norm(z);
                        if l3 == 0 || (primitive && gcd_slice(z) != 1) {
                            return;
                        }
                        if filters.accept_z(z, &mx, &my) {
                            hist[(l12 * l3) as usize] += 1;
                        }
                    });
                } else {
                    let mut prev = 1u64;
                    for l3 in 1..=zmax {
                        let c = fiber_count_in_box(&b, l3);
                        hist[(l12 * l3) as usize] += c - prev;
                        prev = c;
                    }
                }
            });
        },
        |mut a, b| {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
            a
        },
    );
    Ok(hist)
}

/// Cumulative counts `N(B)` for `B = 0..=bmax`.
pub fn height_counts(form: &TrilinearForm, bmax: u64, primitive: bool, variant: CountVariant) -> Result<Vec<u64>> {
    let hist = height_profile(form, bmax, primitive, variant)?;
    let mut acc = 0;
    Ok(hist
        .into_iter()
        .map(|h| {
            acc += h;
            acc
        })
        .collect())
}

/// Exact count of triples of height `|x|·|y|·|z| ≤ B`.
pub fn count_height(form: &TrilinearForm, b: u64, primitive: bool, variant: CountVariant) -> Result<CountReport> {
    if b < 1 {
        return Err(Error::invalid("B must be at least 1"));
    }
    let start = Instant::now();
    let counts = height_counts(form, b, primitive, variant)?;
    Ok(CountReport {
        form_id: form.form_id(),
        variant,
        bounds: CountBounds::Height { b, primitive },
        count: counts[b as usize],
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `Σ_{klm ≤ B} μ(k)μ(l)μ(m) N(⌊B/klm⌋)` from cumulative counts
/// `counts[0..=B]`.
pub fn moebius_from_counts(counts: &[u64], b: u64) -> i128 {
    let mu = mobius_table(b as usize);
    let mut total: i128 = 0;
    for k in 1..=b {
        if mu[k as usize] == 0 {
            continue;
        }
        for l in 1..=b / k {
            if mu[l as usize] == 0 {
                continue;
            }
            for m in 1..=b / (k * l) {
                let s = mu[k as usize] as i128 * mu[l as usize] as i128 * mu[m as usize] as i128;
                if s != 0 {
                    total += s * counts[(b / (k * l * m)) as usize] as i128;
                }
            }
        }
    }
    total
}

/// Primitive count by Möbius inversion over the three height factors.
pub fn moebius_primitive(form: &TrilinearForm, b: u64, variant: CountVariant) -> Result<u64> {
    if b < 1 {
        return Err(Error::invalid("B must be at least 1"));
    }
    let counts = height_counts(form, b, false, variant)?;
    let v = moebius_from_counts(&counts, b);
    Ok(u64::try_from(v).expect("Möbius sum of counts is a count"))
}

/// Exact number of counted triples with `|x| = l₁`, `|y| = l₂`, `|z| = l₃`.
pub fn h_function(form: &TrilinearForm, l1: u64, l2: u64, l3: u64, variant: CountVariant) -> Result<u64> {
    let (l1, l2, l3) = (
        check_bound(l1, "l1")?,
        check_bound(l2, "l2")?,
        check_bound(l3, "l3")?,
    );
    let d = form.dim();
    let filters = Filters::new(form, variant, l1, l2, l3)?;
    let shell = box_size(d, l3) - if l3 > 0 { box_size(d, l3 - 1) } else { 0 };
    let total = sum_over_x(
        d,
        l1,
        || 0u64,
        |x, acc| {
            if sup_norm(x) != l1 || !filters.accept_x(x) {
                return;
            }
            let mx = form.slot_matrix(Slot::X, x);
            let mut b = vec![0i64; d];
            for_each_in_box(d, l2, |y| {
                if sup_norm(y) != l2 || !filters.accept_y(y) {
                    return;
                }
                contract_with(&mx, y, &mut b);
                if b.iter().all(|&v| v == 0) {
                    if !variant.needs_nondeg() {
                        *acc += shell;
                    }
                    return;
                }
                if variant.filters_z() {
                    let my = form.slot_matrix(Slot::Y, y);
                    for_each_fiber_point(&b, l3, |z| {
                        if sup_norm(z) == l3 && filters.accept_z(z, &mx, &my) {
                            *acc += 1;
                        }
                    });
                } else {
                    *acc += fiber_count_in_box(&b, l3) - fiber_count_in_box(&b, l3 - 1);
                }
            });
        },
        |a, b| a + b,
    );
    Ok(total)
}

/// `⌊B^{1/n}⌋`, exact for integer `B`.
pub fn integer_root(b: u64, n: u32) -> u64 {
    if n == 1 {
        return b;
    }
    let mut r = (b as f64).powf(1.0 / n as f64).round() as u64;
    let pow = |r: u64| (r as u128).checked_pow(n);
    while pow(r).map_or(true, |v| v > b as u128) {
        r -= 1;
    }
    while pow(r + 1).is_some_and(|v| v <= b as u128) {
        r += 1;
    }
    r
}

/// Projective count `𝒩_U(B) = Ñ_U(⌊B^{1/n}⌋) / 8` with the default `U`.
pub fn scaled_projective_count(form: &TrilinearForm, b: f64) -> Result<f64> {
    scaled_projective_count_with(form, b, CountVariant::u_default(form))
}

pub fn scaled_projective_count_with(form: &TrilinearForm, b: f64, variant: CountVariant) -> Result<f64> {
    if !(b >= 1.0) || !b.is_finite() {
        return Err(Error::invalid("B must be a finite number ≥ 1"));
    }
    let root = integer_root(b.floor() as u64, form.n() as u32);
    Ok(moebius_primitive(form, root, variant)? as f64 / 8.0)
}

/// `N_x(P₂, P₃)`: number of `(y, z)` in the boxes with `F(x, y, z) = 0`
/// under the variant (the `x` filter of the variant applies to `x`).
pub fn count_x_fiber(form: &TrilinearForm, x: &[i64], p2: u64, p3: u64, variant: CountVariant) -> Result<CountReport> {
    check_dim(form, x)?;
    let start = Instant::now();
    let (q2, q3) = (check_bound(p2, "P2")?, check_bound(p3, "P3")?);
    let d = form.dim();
    let filters = Filters::new(form, variant, 0, q2, q3)?;
    let mut count = 0u64;
    if filters.accept_x(x) {
        let mx = form.slot_matrix(Slot::X, x);
        let slab = box_size(d, q3);
        let ys: Vec<Vec<i64>> = {
            let mut v = Vec::new();
            for_each_in_box(d, q2, |y| v.push(y.to_vec()));
            v
        };
        count = ys
            .par_iter()
            .map(|y| {
                if !filters.accept_y(y) {
                    return 0;
                }
                let mut b = vec![0i64; d];
                contract_with(&mx, y, &mut b);
                if b.iter().all(|&v| v == 0) {
                    return if variant.needs_nondeg() { 0 } else { slab };
                }
                if variant.filters_z() {
                    let my = form.slot_matrix(Slot::Y, y);
                    let mut c = 0;
                    for_each_fiber_point(&b, q3, |z| {
                        if filters.accept_z(z, &mx, &my) {
                            c += 1;
                        }
                    });
                    c
                } else {
                    fiber_count_in_box(&b, q3)
                }
            })
            .sum();
    }
    Ok(CountReport {
        form_id: form.form_id(),
        variant,
        bounds: CountBounds::Fiber {
            x: x.to_vec(),
            p2,
            p3,
        },
        count,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::random_generic_form;
    use proptest::prelude::*;

    fn brute_box(form: &TrilinearForm, p: [i64; 3], variant: CountVariant) -> u64 {
        let lambda = variant.lambda().unwrap_or(1);
        let mut count = 0;
        for_each_in_box(form.dim(), p[0], |x| {
            for_each_in_box(form.dim(), p[1], |y| {
                for_each_in_box(form.dim(), p[2], |z| {
                    if form.eval(x, y, z).unwrap() != 0 {
                        return;
                    }
                    let b = form.contract(ContractionKind::B, x, y).unwrap();
                    let bp = form.contract(ContractionKind::BPrime, x, z).unwrap();
                    let bpp = form.contract(ContractionKind::BDoublePrime, y, z).unwrap();
                    let ok = match variant {
                        CountVariant::All => true,
                        CountVariant::Nondeg3 => !b.is_zero(),
                        CountVariant::N1 { .. } => !b.is_zero() && form.is_in_a(1, x, lambda).unwrap(),
                        CountVariant::NPrime { .. } => {
                            !b.is_zero() && form.is_in_a(1, x, lambda).unwrap() && form.is_in_a(2, y, lambda).unwrap()
                        }
                        CountVariant::U { .. } => {
                            !b.is_zero()
                                && !bp.is_zero()
                                && !bpp.is_zero()
                                && form.is_in_a(1, x, lambda).unwrap()
                                && form.is_in_a(2, y, lambda).unwrap()
                                && form.is_in_a(3, z, lambda).unwrap()
                        }
                    };
                    if ok {
                        count += 1;
                    }
                });
            });
        });
        count
    }

    fn variants(n: usize) -> Vec<CountVariant> {
        vec![
            CountVariant::All,
            CountVariant::Nondeg3,
            CountVariant::U { lambda: n },
            CountVariant::U { lambda: 1 },
            CountVariant::N1 { lambda: n },
            CountVariant::NPrime { lambda: n },
        ]
    }

    #[test]
    fn fiber_examples() {
        let diag = TrilinearForm::diagonal(1);
        // B(x, y) = (x0 y0, x1 y1)
        assert_eq!(count_fiber_z(&diag, &[1, 1], &[1, 1], 5, CountVariant::All).unwrap(), 11);
        assert_eq!(count_fiber_z(&diag, &[0, 1], &[1, 1], 7, CountVariant::All).unwrap(), 15);
        assert!(matches!(
            count_fiber_z(&diag, &[0, 0], &[1, 1], 7, CountVariant::All),
            Err(Error::DegenerateFiber)
        ));
    }

    #[test]
    fn fiber_matches_naive_n2() {
        let f = random_generic_form(2, 3, 11).unwrap();
        let mut checked = 0;
        for_each_in_box(3, 1, |x| {
            let y = [1, -1, 2];
            if f.contract(ContractionKind::B, x, &y).unwrap().is_zero() {
                return;
            }
            for v in [CountVariant::All, CountVariant::U { lambda: 2 }] {
                let fast = count_fiber_z(&f, x, &y, 20, v).unwrap();
                let slow = count_fiber_z_naive(&f, x, &y, 20, v).unwrap();
                assert_eq!(fast, slow);
            }
            checked += 1;
        });
        assert!(checked > 10);
    }

    #[test]
    fn box_matches_brute_force() {
        let diag = TrilinearForm::diagonal(1);
        for v in variants(1) {
            assert_eq!(count_box(&diag, 1, 1, 1, v).unwrap().count, brute_box(&diag, [1, 1, 1], v), "{v:?}");
        }
        let f = random_generic_form(1, 4, 3).unwrap();
        for v in variants(1) {
            assert_eq!(count_box(&f, 2, 1, 2, v).unwrap().count, brute_box(&f, [2, 1, 2], v), "{v:?}");
        }
        let g = random_generic_form(2, 2, 5).unwrap();
        for v in variants(2) {
            assert_eq!(count_box(&g, 1, 1, 1, v).unwrap().count, brute_box(&g, [1, 1, 1], v), "{v:?}");
        }
    }

    #[test]
    fn trivial_box_cases() {
        let f = random_generic_form(1, 5, 8).unwrap();
        let pairs = {
            let mut c = 0;
            for_each_in_box(2, 3, |x| {
                for_each_in_box(2, 2, |y| {
                    if !f.contract(ContractionKind::B, x, y).unwrap().is_zero() {
                        c += 1;
                    }
                })
            });
            c
        };
        assert_eq!(count_box(&f, 3, 2, 0, CountVariant::Nondeg3).unwrap().count, pairs);
        assert_eq!(count_box(&f, 0, 4, 4, CountVariant::Nondeg3).unwrap().count, 0);
    }

    #[test]
    fn nesting_and_lambda_validation() {
        let f = random_generic_form(1, 4, 21).unwrap();
        let all = count_box(&f, 2, 2, 2, CountVariant::All).unwrap().count;
        let nd = count_box(&f, 2, 2, 2, CountVariant::Nondeg3).unwrap().count;
        let u = count_box(&f, 2, 2, 2, CountVariant::U { lambda: 1 }).unwrap().count;
        assert!(u <= nd && nd <= all);
        assert!(count_box(&f, 1, 1, 1, CountVariant::U { lambda: 3 }).is_err());
        assert!(count_box(&f, 1, 1, 1, CountVariant::U { lambda: 0 }).is_err());
    }

    fn brute_height(form: &TrilinearForm, b: i64, primitive: bool, variant: CountVariant) -> u64 {
        let mut count = 0;
        let d = form.dim();
        let lambda = variant.lambda().unwrap_or(1);
        for_each_in_box(d, b, |x| {
            let l1 = sup_norm(x);
            if l1 == 0 || (primitive && gcd_slice(x) != 1) {
                return;
            }
            for_each_in_box(d, b / l1, |y| {
                let l2 = sup_norm(y);
                if l2 == 0 || (primitive && gcd_slice(y) != 1) {
                    return;
                }
                for_each_in_box(d, b / (l1 * l2), |z| {
                    let l3 = sup_norm(z);
                    if l3 == 0 || (primitive && gcd_slice(z) != 1) || form.eval(x, y, z).unwrap() != 0 {
                        return;
                    }
                    let b3 = !form.contract(ContractionKind::B, x, y).unwrap().is_zero();
                    let b2 = !form.contract(ContractionKind::BPrime, x, z).unwrap().is_zero();
                    let b1 = !form.contract(ContractionKind::BDoublePrime, y, z).unwrap().is_zero();
                    let ok = match variant {
                        CountVariant::All => true,
                        CountVariant::Nondeg3 => b3,
                        CountVariant::U { .. } => {
                            b1 && b2 && b3
                                && form.is_in_a(1, x, lambda).unwrap()
                                && form.is_in_a(2, y, lambda).unwrap()
                                && form.is_in_a(3, z, lambda).unwrap()
                        }
                        _ => unreachable!(),
                    };
                    if ok {
                        count += 1;
                    }
                });
            });
        });
        count
    }

    #[test]
    fn height_matches_brute_force() {
        let f = random_generic_form(1, 3, 4).unwrap();
        for v in [CountVariant::All, CountVariant::Nondeg3, CountVariant::U { lambda: 1 }] {
            for prim in [false, true] {
                let counts = height_counts(&f, 6, prim, v).unwrap();
                for b in 1..=6 {
                    assert_eq!(counts[b as usize], brute_height(&f, b, prim, v), "{v:?} {prim} {b}");
                }
            }
        }
    }

    #[test]
    fn height_one_primitive_equals_full() {
        let f = random_generic_form(2, 3, 2).unwrap();
        let u = CountVariant::u_default(&f);
        let a = count_height(&f, 1, false, u).unwrap().count;
        let b = count_height(&f, 1, true, u).unwrap().count;
        assert_eq!(a, b);
        assert_eq!(a, h_function(&f, 1, 1, 1, u).unwrap());
        assert!(count_height(&f, 0, false, u).is_err());
    }

    #[test]
    fn moebius_examples() {
        let diag = TrilinearForm::diagonal(1);
        let u = CountVariant::u_default(&diag);
        assert_eq!(
            moebius_primitive(&diag, 1, u).unwrap(),
            count_height(&diag, 1, false, u).unwrap().count
        );
        assert_eq!(
            moebius_primitive(&diag, 12, u).unwrap(),
            count_height(&diag, 12, true, u).unwrap().count
        );
        let f = random_generic_form(1, 4, 17).unwrap();
        let u = CountVariant::u_default(&f);
        assert_eq!(
            moebius_primitive(&f, 30, u).unwrap(),
            count_height(&f, 30, true, u).unwrap().count
        );
    }

    #[test]
    fn shells_telescope() {
        let f = random_generic_form(2, 2, 9).unwrap();
        for v in [CountVariant::u_default(&f), CountVariant::Nondeg3, CountVariant::All] {
            let mut sum = 0;
            for l1 in 0..=2 {
                for l2 in 0..=2 {
                    for l3 in 0..=2 {
                        sum += h_function(&f, l1, l2, l3, v).unwrap();
                    }
                }
            }
            assert_eq!(sum, count_box(&f, 2, 2, 2, v).unwrap().count, "{v:?}");
        }
        let u = CountVariant::u_default(&f);
        assert_eq!(h_function(&f, 0, 1, 1, u).unwrap(), 0);
        assert_eq!(h_function(&f, 1, 1, 0, u).unwrap(), 0);
    }

    #[test]
    fn diagonal_shell_brute() {
        let diag = TrilinearForm::diagonal(1);
        let u = CountVariant::u_default(&diag);
        let mut brute = 0;
        for_each_in_box(2, 1, |x| {
            for_each_in_box(2, 1, |y| {
                for_each_in_box(2, 1, |z| {
                    if sup_norm(x) == 1 && sup_norm(y) == 1 && sup_norm(z) == 1 && diag.eval(x, y, z).unwrap() == 0 {
                        let nd = ContractionKind::ALL.iter().all(|&k| {
                            let (u, v) = match k {
                                ContractionKind::B => (x, y),
                                ContractionKind::BPrime => (x, z),
                                ContractionKind::BDoublePrime => (y, z),
                            };
                            !diag.contract(k, u, v).unwrap().is_zero()
                        });
                        let adm = diag.is_in_a(1, x, 1).unwrap() && diag.is_in_a(2, y, 1).unwrap() && diag.is_in_a(3, z, 1).unwrap();
                        if nd && adm {
                            brute += 1;
                        }
                    }
                })
            })
        });
        assert_eq!(h_function(&diag, 1, 1, 1, u).unwrap(), brute);
    }

    #[test]
    fn integer_roots() {
        assert_eq!(integer_root(100, 2), 10);
        assert_eq!(integer_root(99, 2), 9);
        assert_eq!(integer_root(27, 3), 3);
        assert_eq!(integer_root(26, 3), 2);
        assert_eq!(integer_root(1, 5), 1);
        assert_eq!(integer_root(17, 1), 17);
    }

    #[test]
    fn projective_count() {
        let f = random_generic_form(1, 3, 1).unwrap();
        let u = CountVariant::u_default(&f);
        let direct = moebius_primitive(&f, 7, u).unwrap() as f64 / 8.0;
        assert_eq!(scaled_projective_count(&f, 7.0).unwrap(), direct);
        let g = random_generic_form(2, 2, 1).unwrap();
        let u = CountVariant::u_default(&g);
        let direct = moebius_primitive(&g, 3, u).unwrap() as f64 / 8.0;
        assert_eq!(scaled_projective_count(&g, 15.9).unwrap(), direct);
        assert!(scaled_projective_count(&g, 0.5).is_err());
    }

    #[test]
    fn x_fiber_sums_to_n1() {
        let f = random_generic_form(1, 3, 6).unwrap();
        let v = CountVariant::N1 { lambda: 1 };
        let mut sum = 0;
        for_each_in_box(2, 2, |x| {
            sum += count_x_fiber(&f, x, 2, 3, v).unwrap().count;
        });
        assert_eq!(sum, count_box(&f, 2, 2, 3, v).unwrap().count);
    }

    #[test]
    fn report_round_trips() {
        let f = random_generic_form(1, 3, 6).unwrap();
        let r = count_box(&f, 1, 1, 1, CountVariant::u_default(&f)).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<CountReport>(&s).unwrap(), r);
    }

    proptest! {
        #[test]
        fn fast_fiber_count_matches_enumeration(
            b in (1usize..=4).prop_flat_map(|n| proptest::collection::vec(-9i64..=9, n + 1)),
            p in 0i64..6,
        ) {
            let mut brute = 0u64;
            for_each_in_box(b.len(), p, |z| {
                if b.iter().zip(z).map(|(u, v)| u * v).sum::<i64>() == 0 {
                    brute += 1;
                }
            });
            prop_assert_eq!(fiber_count_in_box(&b, p), brute);
            if b.iter().any(|&v| v != 0) {
                let mut c = 0u64;
                for_each_fiber_point(&b, p, |_| c += 1);
                prop_assert_eq!(c, brute);
            }
        }

        #[test]
        fn sign_symmetry(seed in 0u64..50) {
            let f = random_generic_form(1, 3, seed).unwrap();
            let mut pos = 0;
            let mut neg = 0;
            for_each_in_box(2, 2, |x| {
                let nx: Vec<i64> = x.iter().map(|v| -v).collect();
                let y = [1, 2];
                if f.contract(ContractionKind::B, x, &y).unwrap().is_zero() {
                    return;
                }
                pos += count_fiber_z(&f, x, &y, 3, CountVariant::U { lambda: 1 }).unwrap();
                neg += count_fiber_z(&f, &nx, &y, 3, CountVariant::U { lambda: 1 }).unwrap();
            });
            prop_assert_eq!(pos, neg);
        }
    }
}
