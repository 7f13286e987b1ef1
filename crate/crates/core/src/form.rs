//! Trilinear forms `F(x, y, z) = Σ α_ijk x_i y_j z_k`, their three bilinear
//! contractions, fiber kernels and the genericity test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::rank_over_q;
use crate::error::{Error, Result};

/// Which index pair is summed out.
///
/// * `B`   : `B_k(x, y)  = Σ_ij α_ijk x_i y_j` (pairs with `z`)
/// * `BPrime` : `B'_j(x, z) = Σ_ik α_ijk x_i z_k` (pairs with `y`)
/// * `BDoublePrime` : `B''_i(y, z) = Σ_jk α_ijk y_j z_k` (pairs with `x`)
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContractionKind {
    #[serde(rename = "B")]
    B,
    #[serde(rename = "B'")]
    BPrime,
    #[serde(rename = "B''")]
    BDoublePrime,
}

impl ContractionKind {
    pub const ALL: [ContractionKind; 3] = [
        ContractionKind::B,
        ContractionKind::BPrime,
        ContractionKind::BDoublePrime,
    ];

    /// Slot held fixed by the first argument of the contraction.
    fn first_slot(self) -> Slot {
        match self {
            ContractionKind::B | ContractionKind::BPrime => Slot::X,
            ContractionKind::BDoublePrime => Slot::Y,
        }
    }

    /// Name of the variety `V_i*` whose dimension this contraction governs.
    pub fn variety(self) -> &'static str {
        match self {
            ContractionKind::B => "V3*",
            ContractionKind::BPrime => "V2*",
            ContractionKind::BDoublePrime => "V1*",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    X,
    Y,
    Z,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearVector {
    pub kind: ContractionKind,
    pub values: Vec<i64>,
}

impl BilinearVector {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn dot(&self, w: &[i64]) -> i128 {
        self.values
            .iter()
            .zip(w)
            .map(|(&a, &b)| a as i128 * b as i128)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrilinearForm {
    n: usize,
    coeffs: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub a: i64,
}

/// On-disk form: sparse coefficient list, unlisted entries are zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormFile {
    pub n: usize,
    pub coeffs: Vec<FormEntry>,
}

impl TrilinearForm {
    pub fn new(n: usize, coeffs: Vec<i64>) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("n must be at least 1"));
        }
        let d = n + 1;
        if coeffs.len() != d * d * d {
            return Err(Error::Dimension {
                expected: d * d * d,
                got: coeffs.len(),
            });
        }
        if coeffs.iter().all(|&a| a == 0) {
            return Err(Error::ZeroForm);
        }
        Ok(TrilinearForm { n, coeffs })
    }

    pub fn from_entries(n: usize, entries: &[(usize, usize, usize, i64)]) -> Result<Self> {
        let d = n + 1;
        let mut coeffs = vec![0i64; d * d * d];
        for &(i, j, k, a) in entries {
            if i >= d || j >= d || k >= d {
                return Err(Error::invalid(format!(
                    "index ({i},{j},{k}) out of range for n={n}"
                )));
            }
            coeffs[(i * d + j) * d + k] += a;
        }
        Self::new(n, coeffs)
    }

    /// `Σ_i x_i y_i z_i`.
    pub fn diagonal(n: usize) -> Self {
        let entries: Vec<_> = (0..=n).map(|i| (i, i, i, 1)).collect();
        Self::from_entries(n, &entries).expect("diagonal form is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of coordinates per factor, `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> i64 {
        let d = self.dim();
        self.coeffs[(i * d + j) * d + k]
    }

    pub fn max_abs_coeff(&self) -> i64 {
        self.coeffs.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    fn check_len(&self, v: &[i64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Exact `F(x, y, z)`; overflow of the 128-bit accumulator is reported,
    /// never wrapped.
    pub fn eval(&self, x: &[i64], y: &[i64], z: &[i64]) -> Result<i128> {
        self.check_len(x)?;
        self.check_len(y)?;
        self.check_len(z)?;
        let d = self.dim();
        let mut acc: i128 = 0;
        for i in 0..d {
            if x[i] == 0 {
                continue;
            }
            for j in 0..d {
                if y[j] == 0 {
                    continue;
                }
                let xy = (x[i] as i128)
                    .checked_mul(y[j] as i128)
                    .ok_or(Error::Overflow("F"))?;
                for k in 0..d {
                    let a = self.coeff(i, j, k);
                    if a == 0 || z[k] == 0 {
                        continue;
                    }
                    let term = xy
                        .checked_mul(a as i128)
                        .and_then(|t| t.checked_mul(z[k] as i128))
                        .ok_or(Error::Overflow("F"))?;
                    acc = acc.checked_add(term).ok_or(Error::Overflow("F"))?;
                }
            }
        }
        Ok(acc)
    }

    /// The bilinear vector of the given kind at `(u, v)`: `B(x, y)`,
    /// `B'(x, z)` or `B''(y, z)`.
    pub fn contract(&self, kind: ContractionKind, u: &[i64], v: &[i64]) -> Result<BilinearVector> {
        self.check_len(u)?;
        self.check_len(v)?;
        let d = self.dim();
        let mut values = Vec::with_capacity(d);
        for out in 0..d {
            let mut acc: i128 = 0;
            for a in 0..d {
                for b in 0..d {
                    let c = match kind {
                        ContractionKind::B => self.coeff(a, b, out),
                        ContractionKind::BPrime => self.coeff(a, out, b),
                        ContractionKind::BDoublePrime => self.coeff(out, a, b),
                    };
                    if c == 0 {
                        continue;
                    }
                    let t = (c as i128)
                        .checked_mul(u[a] as i128)
                        .and_then(|t| t.checked_mul(v[b] as i128))
                        .ok_or(Error::Overflow("contraction"))?;
                    acc = acc.checked_add(t).ok_or(Error::Overflow("contraction"))?;
                }
            }
            values.push(i64::try_from(acc).map_err(|_| Error::Overflow("contraction"))?);
        }
        Ok(BilinearVector { kind, values })
    }

    /// Matrix of the bilinear form obtained by fixing `slot` to `u`, row-major
    /// `d x d`; rows index the earlier remaining slot, columns the later one
    /// (in the order x, y, z).
    pub fn slot_matrix(&self, slot: Slot, u: &[i64]) -> Vec<i64> {
        let d = self.dim();
        let mut m = vec![0i64; d * d];
        for (t, &ut) in u.iter().enumerate().take(d) {
            if ut == 0 {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    let c = match slot {
                        Slot::X => self.coeff(t, a, b),
                        Slot::Y => self.coeff(a, t, b),
                        Slot::Z => self.coeff(a, b, t),
                    };
                    m[a * d + b] += c * ut;
                }
            }
        }
        m
    }

    /// `dim {w : F(u in slot, w, ·) ≡ 0}` — both free slots give the same
    /// value since a matrix and its transpose share their rank.
    pub fn kernel_dim_at(&self, slot: Slot, u: &[i64]) -> usize {
        let d = self.dim();
        d - rank_over_q(d, d, &self.slot_matrix(slot, u))
    }

    /// Dimension of the fiber of the matching `V_i*` over `u`:
    /// `V_{3,x}* = {y : B(x, y) = 0}` for `B`, `V_{2,x}*` for `B'`,
    /// `V_{1,y}*` for `B''`.
    pub fn fiber_kernel_dim(&self, kind: ContractionKind, u: &[i64]) -> Result<usize> {
        self.check_len(u)?;
        Ok(self.kernel_dim_at(kind.first_slot(), u))
    }

    /// Membership of `u` in `A_{which, lambda}`: both kernels attached to the
    /// slot `which` have dimension `< lambda`.
    pub fn is_in_a(&self, which: u8, u: &[i64], lambda: usize) -> Result<bool> {
        self.check_len(u)?;
        if lambda < 1 || lambda > self.dim() {
            return Err(Error::invalid(format!(
                "lambda must lie in [1, {}], got {lambda}",
                self.dim()
            )));
        }
        let slot = match which {
            1 => Slot::X,
            2 => Slot::Y,
            3 => Slot::Z,
            _ => return Err(Error::invalid(format!("A-set index must be 1, 2 or 3, got {which}"))),
        };
        Ok(self.kernel_dim_at(slot, u) < lambda)
    }

    /// Same as [`is_in_a`](Self::is_in_a) for a slot, without validation.
    #[inline]
    pub(crate) fn in_a_unchecked(&self, slot: Slot, u: &[i64], lambda: usize) -> bool {
        self.kernel_dim_at(slot, u) < lambda
    }

    pub fn to_file(&self) -> FormFile {
        let d = self.dim();
        let mut coeffs = Vec::new();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let a = self.coeff(i, j, k);
                    if a != 0 {
                        coeffs.push(FormEntry { i, j, k, a });
                    }
                }
            }
        }
        FormFile { n: self.n, coeffs }
    }

    pub fn from_file(file: &FormFile) -> Result<Self> {
        let d = file.n + 1;
        for (idx, e) in file.coeffs.iter().enumerate() {
            if e.i >= d || e.j >= d || e.k >= d {
                return Err(Error::FormFile(format!(
                    "coeffs[{idx}]: index ({},{},{}) out of range 0..={}",
                    e.i, e.j, e.k, file.n
                )));
            }
        }
        let entries: Vec<_> = file.coeffs.iter().map(|e| (e.i, e.j, e.k, e.a)).collect();
        Self::from_entries(file.n, &entries).map_err(|e| Error::FormFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("form serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FormFile =
            serde_json::from_str(text).map_err(|e| Error::FormFile(e.to_string()))?;
        Self::from_file(&file)
    }

    /// Stable identifier: first 16 hex digits of the SHA-256 of the dense
    /// coefficient tensor.
    pub fn form_id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for a in &self.coeffs {
            h.update(a.to_le_bytes());
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericityCheck {
    pub kind: ContractionKind,
    pub variety: String,
    pub pass: bool,
    /// Sampled point whose matrix of linear forms is nonsingular.
    pub witness: Option<Vec<i64>>,
    pub trials_used: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub checks: Vec<GenericityCheck>,
    pub trials: usize,
    pub coord_bound: i64,
    pub seed: u64,
}

impl GenericityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Randomised witness search for `dim V_i* = n + 1`: a single point `u` at
/// which the `(n+1) x (n+1)` matrix of linear forms is nonsingular shows that
/// its determinant is not identically zero.
pub fn check_genericity(
    form: &TrilinearForm,
    trials: usize,
    coord_bound: i64,
    seed: u64,
) -> Result<GenericityReport> {
    if trials < 1 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if coord_bound < 1 {
        return Err(Error::invalid("coord_bound must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = form.dim();
    let mut checks = Vec::with_capacity(3);
    for kind in ContractionKind::ALL {
        let mut found = None;
        let mut used = 0;
        for t in 0..trials {
            used = t + 1;
            let u: Vec<i64> = (0..d).map(|_| rng.gen_range(-coord_bound..=coord_bound)).collect();
            if form.fiber_kernel_dim(kind, &u)? == 0 {
                found = Some(u);
                break;
            }
        }
        checks.push(GenericityCheck {
            kind,
            variety: kind.variety().to_string(),
            pass: found.is_some(),
            witness: found,
            trials_used: used,
        });
    }
    Ok(GenericityReport {
        checks,
        trials,
        coord_bound,
        seed,
    })
}

const GENERATION_ATTEMPTS: usize = 100;

/// Uniform coefficients in `[-coeff_bound, coeff_bound]`, redrawn until the
/// genericity check passes.
pub fn random_generic_form(n: usize, coeff_bound: i64, seed: u64) -> Result<TrilinearForm> {
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if coeff_bound < 1 {
        return Err(Error::ZeroForm);
    }
    let d = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let coeffs: Vec<i64> = (0..d * d * d)
            .map(|_| rng.gen_range(-coeff_bound..=coeff_bound))
            .collect();
        let Ok(form) = TrilinearForm::new(n, coeffs) else {
            continue;
        };
        let check_seed = rng.gen();
        if check_genericity(&form, 64, 3, check_seed)?.passed() {
            return Ok(form);
        }
    }
    Err(Error::Generation {
        attempts: GENERATION_ATTEMPTS,
    })
}
