//! Integer and modular helpers: gcds, Möbius and Euler functions, exact rank,
//! p-adic elementary divisors, box enumeration.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

pub fn gcd_slice(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| g.gcd(&x))
}

pub fn sup_norm(v: &[i64]) -> i64 {
    v.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// Returns `(g, s, t)` with `s*a + t*b = g = gcd(a, b) >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inv(a: i128, m: i128) -> Option<i128> {
    let (g, s, _) = ext_gcd(a.rem_euclid(m), m);
    (g == 1).then(|| s.rem_euclid(m))
}

pub fn floor_div(a: i128, b: i128) -> i128 {
    Integer::div_floor(&a, &b)
}

pub fn ceil_div(a: i128, b: i128) -> i128 {
    -Integer::div_floor(&(-a), &b)
}

/// Möbius function on `0..=n` (index 0 unused, set to 0).
pub fn mobius_table(n: usize) -> Vec<i8> {
    let mut mu = vec![1i8; n + 1];
    if n == 0 {
        mu[0] = 0;
        return mu;
    }
    mu[0] = 0;
    let mut composite = vec![false; n + 1];
    for p in 2..=n {
        if composite[p] {
            continue;
        }
        for m in (p..=n).step_by(p) {
            if m > p {
                composite[m] = true;
            }
            mu[m] = -mu[m];
        }
        let p2 = p.saturating_mul(p);
        if p2 <= n {
            for m in (p2..=n).step_by(p2) {
                mu[m] = 0;
            }
        }
    }
    mu
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            for m in (i * i..=n).step_by(i) {
                sieve[m] = false;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&k| sieve[k]).map(|k| k as u64).collect()
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Prime factorisation as `(p, e)` pairs in increasing order.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn euler_phi(q: u64) -> u64 {
    factorize(q)
        .into_iter()
        .fold(q, |acc, (p, _)| acc / p * (p - 1))
}

/// Rank over Q of an integer matrix given row-major, by fraction-free
/// (Bareiss) elimination. Falls back to big integers on i128 overflow.
pub fn rank_over_q(rows: usize, cols: usize, m: &[i64]) -> usize {
    debug_assert_eq!(m.len(), rows * cols);
    let a: Vec<i128> = m.iter().map(|&v| v as i128).collect();
    match bareiss_rank_i128(rows, cols, a) {
        Some(r) => r,
        None => bareiss_rank_big(rows, cols, m.iter().map(|&v| BigInt::from(v)).collect()),
    }
}

fn bareiss_rank_i128(rows: usize, cols: usize, mut a: Vec<i128>) -> Option<usize> {
    let mut rank = 0;
    let mut prev: i128 = 1;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| a[r * cols + col] != 0) else {
            continue;
        };
        if piv != rank {
            for c in 0..cols {
                a.swap(piv * cols + c, rank * cols + c);
            }
        }
        let p = a[rank * cols + col];
        for r in rank + 1..rows {
            let f = a[r * cols + col];
            for c in col..cols {
                let v = p
                    .checked_mul(a[r * cols + c])?
                    .checked_sub(f.checked_mul(a[rank * cols + c])?)?;
                a[r * cols + c] = v / prev;
            }
        }
        prev = p;
        rank += 1;
    }
    Some(rank)
}

fn bareiss_rank_big(rows: usize, cols: usize, mut a: Vec<BigInt>) -> usize {
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| !a[r * cols + col].is_zero()) else {
            continue;
        };
        if piv != rank {
            for c in 0..cols {
                a.swap(piv * cols + c, rank * cols + c);
            }
        }
        let p = a[rank * cols + col].clone();
        for r in rank + 1..rows {
            let f = a[r * cols + col].clone();
            for c in col..cols {
                let v = &p * &a[r * cols + c] - &f * &a[rank * cols + c];
                a[r * cols + c] = v / &prev;
            }
        }
        prev = p;
        rank += 1;
    }
    rank
}

/// Exact determinant of a square big-integer matrix (Bareiss).
pub fn det_big(n: usize, m: &[BigInt]) -> BigInt {
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k * n + k].is_zero() {
            match (k + 1..n).find(|&r| !a[r * n + k].is_zero()) {
                Some(r) => {
                    for c in 0..n {
                        a.swap(k * n + c, r * n + c);
                    }
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i * n + j] * &a[k * n + k] - &a[i * n + k] * &a[k * n + j];
                a[i * n + j] = v / &prev;
            }
        }
        prev = a[k * n + k].clone();
    }
    if n == 0 {
        return BigInt::one();
    }
    sign * &a[(n - 1) * n + (n - 1)]
}

/// p-adic valuations of the elementary divisors of a square matrix over
/// `Z/p^r`; an entry equal to `r` means the divisor vanishes mod `p^r`.
pub fn elementary_valuations(dim: usize, m: &[i128], p: i128, r: u32) -> Vec<u32> {
    let modulus = p.pow(r);
    let mut a: Vec<i128> = m.iter().map(|v| v.rem_euclid(modulus)).collect();
    let mut live_rows: Vec<usize> = (0..dim).collect();
    let mut live_cols: Vec<usize> = (0..dim).collect();
    let mut vals = Vec::with_capacity(dim);
    let val = |x: i128| -> u32 {
        if x == 0 {
            return r;
        }
        let mut v = 0;
        let mut y = x;
        while y % p == 0 && v < r {
            y /= p;
            v += 1;
        }
        v
    };
    while !live_rows.is_empty() {
        let mut best: Option<(usize, usize, u32)> = None;
        for (ri, &row) in live_rows.iter().enumerate() {
            for (ci, &col) in live_cols.iter().enumerate() {
                let v = val(a[row * dim + col]);
                if best.map_or(true, |(_, _, b)| v < b) {
                    best = Some((ri, ci, v));
                }
            }
        }
        let (ri, ci, v) = best.expect("nonempty minor");
        if v >= r {
            vals.extend(std::iter::repeat(r).take(live_rows.len()));
            break;
        }
        let prow = live_rows[ri];
        let pcol = live_cols[ci];
        let pv = p.pow(v);
        let unit = a[prow * dim + pcol] / pv;
        let inv = mod_inv(unit, modulus).expect("unit is invertible");
        for &row in &live_rows {
            if row == prow {
                continue;
            }
            let t = a[row * dim + pcol] / pv;
            if t == 0 {
                continue;
            }
            let f = (t % modulus) * inv % modulus;
            for &col in &live_cols {
                let v = a[row * dim + col] - f * a[prow * dim + col] % modulus;
                a[row * dim + col] = v.rem_euclid(modulus);
            }
        }
        vals.push(v);
        live_rows.remove(ri);
        live_cols.remove(ci);
    }
    vals
}

/// `c_k = #{y mod p^r : M y ≡ 0 (mod p^k)}` for `k = 0..=r`, from the
/// elementary valuations of `M`.
pub fn kernel_counts(vals: &[u32], p: u128, r: u32) -> Vec<u128> {
    let dim = vals.len() as u32;
    (0..=r)
        .map(|k| {
            let exp: u32 = vals.iter().map(|&v| r - k + v.min(k)).sum();
            debug_assert!(exp <= r * dim);
            p.pow(exp)
        })
        .collect()
}

/// Calls `f` on every integer vector in `[-bound, bound]^dim`, in
/// lexicographic order.
pub fn for_each_in_box(dim: usize, bound: i64, mut f: impl FnMut(&[i64])) {
    if bound < 0 {
        return;
    }
    let mut v = vec![-bound; dim];
    loop {
        f(&v);
        let mut i = 0;
        loop {
            if i == dim {
                return;
            }
            if v[i] < bound {
                v[i] += 1;
                break;
            }
            v[i] = -bound;
            i += 1;
        }
    }
}

/// Calls `f` on every residue vector in `(Z/q)^dim` (entries in `0..q`).
pub fn for_each_residue(dim: usize, q: u64, mut f: impl FnMut(&[i64])) {
    let q = q as i64;
    let mut v = vec![0i64; dim];
    loop {
        f(&v);
        let mut i = 0;
        loop {
            if i == dim {
                return;
            }
            if v[i] + 1 < q {
                v[i] += 1;
                break;
            }
            v[i] = 0;
            i += 1;
        }
    }
}

pub fn box_size(dim: usize, bound: i64) -> u64 {
    ((2 * bound + 1) as u64).pow(dim as u32)
}

/// Decodes the `idx`-th vector of `[-bound, bound]^dim` in the order used by
/// [`for_each_in_box`].
pub fn decode_box_index(mut idx: u64, dim: usize, bound: i64, out: &mut [i64]) {
    let side = (2 * bound + 1) as u64;
    for slot in out.iter_mut().take(dim) {
        *slot = (idx % side) as i64 - bound;
        idx /= side;
    }
}

pub fn encode_box_index(v: &[i64], bound: i64) -> u64 {
    let side = (2 * bound + 1) as u64;
    v.iter()
        .rev()
        .fold(0u64, |acc, &x| acc * side + (x + bound) as u64)
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn big_abs(x: &BigInt) -> BigInt {
    x.abs()
}
