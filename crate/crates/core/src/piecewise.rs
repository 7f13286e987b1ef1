//! Piecewise polynomials with exact breakpoints, and the convolution with a
//! centred uniform density that builds the density of `Σ b_k U_k`.

use crate::scalar::Field;

/// Dense polynomial, coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    pub coeffs: Vec<T>,
}

impl<T: Field> Poly<T> {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Poly { coeffs: vec![c] }
    }

    pub fn eval(&self, x: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    fn add(&self, other: &Poly<T>) -> Poly<T> {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                let b = other.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                a + b
            })
            .collect();
        Poly { coeffs }
    }

    fn scale(&self, s: &T) -> Poly<T> {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(),
        }
    }

    fn sub(&self, other: &Poly<T>) -> Poly<T> {
        self.add(&other.scale(&(-T::one())))
    }

    /// `p(x + h)`.
    pub fn shift(&self, h: &T) -> Poly<T> {
        let mut out: Poly<T> = Poly::zero();
        for c in self.coeffs.iter().rev() {
            // out = out * (x + h) + c
            let mut next = vec![T::zero(); out.coeffs.len() + 1];
            for (i, a) in out.coeffs.iter().enumerate() {
                next[i + 1] = next[i + 1].clone() + a.clone();
                next[i] = next[i].clone() + a.clone() * h.clone();
            }
            next[0] = next[0].clone() + c.clone();
            out = Poly { coeffs: next };
        }
        out
    }

    /// Antiderivative vanishing at 0.
    fn integral(&self) -> Poly<T> {
        let mut coeffs = vec![T::zero()];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c.clone() / T::from_int(i as i64 + 1));
        }
        Poly { coeffs }
    }
}

/// A function that is polynomial on each `[breaks[i], breaks[i+1]]`, zero
/// left of the first breakpoint and equal to `tail` right of the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePoly<T> {
    pub breaks: Vec<T>,
    pub pieces: Vec<Poly<T>>,
    pub tail: T,
}

impl<T: Field> PiecewisePoly<T> {
    /// Point mass replaced by nothing: the identity for convolution is not
    /// representable, so start from a uniform density.
    pub fn uniform(half_width: T) -> Self {
        assert!(half_width > T::zero(), "uniform density needs positive width");
        let h = T::one() / (half_width.clone() + half_width.clone());
        PiecewisePoly {
            breaks: vec![-half_width.clone(), half_width],
            pieces: vec![Poly::constant(h)],
            tail: T::zero(),
        }
    }

    fn locate(&self, x: &T) -> Option<usize> {
        if self.breaks.is_empty() || *x < self.breaks[0] {
            return None;
        }
        let last = self.breaks.len() - 1;
        if *x >= self.breaks[last] {
            return Some(last);
        }
        // last index i with breaks[i] <= x
        let mut lo = 0;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.breaks[mid] <= *x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    pub fn eval(&self, x: &T) -> T {
        match self.locate(x) {
            None => T::zero(),
            Some(i) if i == self.pieces.len() => self.tail.clone(),
            Some(i) => self.pieces[i].eval(x),
        }
    }

    /// Piece valid at `x` in global coordinates (constants outside support).
    fn piece_at(&self, x: &T) -> Poly<T> {
        match self.locate(x) {
            None => Poly::zero(),
            Some(i) if i == self.pieces.len() => Poly::constant(self.tail.clone()),
            Some(i) => self.pieces[i].clone(),
        }
    }

    /// Continuous antiderivative, zero left of the support.
    pub fn antiderivative(&self) -> PiecewisePoly<T> {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        let mut left = T::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            let prim = p.integral();
            let c = left.clone() - prim.eval(&self.breaks[i]);
            let piece = prim.add(&Poly::constant(c));
            left = piece.eval(&self.breaks[i + 1]);
            pieces.push(piece);
        }
        PiecewisePoly {
            breaks: self.breaks.clone(),
            pieces,
            tail: left,
        }
    }

    /// Convolution of a compactly supported density with the uniform density
    /// on `[-a, a]`: `g(x) = (F(x + a) - F(x - a)) / 2a`.
    pub fn convolve_uniform(&self, a: &T) -> PiecewisePoly<T> {
        assert!(*a > T::zero(), "uniform density needs positive width");
        let anti = self.antiderivative();
        let mut breaks: Vec<T> = self
            .breaks
            .iter()
            .flat_map(|t| [t.clone() - a.clone(), t.clone() + a.clone()])
            .collect();
        breaks.sort_by(|u, v| u.partial_cmp(v).expect("ordered breakpoints"));
        breaks.dedup();
        let two = T::from_int(2);
        let inv = T::one() / (a.clone() * two.clone());
        let pieces = breaks
            .windows(2)
            .map(|w| {
                let mid = (w[0].clone() + w[1].clone()) / two.clone();
                let hi = anti.piece_at(&(mid.clone() + a.clone())).shift(a);
                let lo = anti.piece_at(&(mid - a.clone())).shift(&(-a.clone()));
                hi.sub(&lo).scale(&inv)
            })
            .collect();
        PiecewisePoly {
            breaks,
            pieces,
            tail: T::zero(),
        }
    }

    pub fn total_mass(&self) -> T {
        self.antiderivative().tail
    }
}

/// Density at `t` of `Σ b_k U_k` with independent `U_k ~ U[-1, 1]`; zero
/// coefficients are skipped (they do not move the sum). `None` when every
/// coefficient vanishes.
pub fn sum_of_uniforms_density<T: Field>(coeffs: &[T], t: &T) -> Option<T> {
    let mut widths: Vec<T> = coeffs
        .iter()
        .filter(|c| !c.is_zero())
        .map(|c| c.abs())
        .collect();
    // widest first keeps the intermediate supports balanced
    widths.sort_by(|u, v| v.partial_cmp(u).expect("ordered widths"));
    let (first, rest) = widths.split_first()?;
    let mut density = PiecewisePoly::uniform(first.clone());
    for w in rest {
        density = density.convolve_uniform(w);
    }
    Some(density.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;
    use num_rational::BigRational;

    #[test]
    fn shift_matches_evaluation() {
        let p = Poly {
            coeffs: vec![ratio(1, 1), ratio(-2, 1), ratio(3, 2)],
        };
        let h = ratio(5, 3);
        let s = p.shift(&h);
        for k in -4..5 {
            let x = ratio(k, 2);
            assert_eq!(s.eval(&x), p.eval(&(x.clone() + h.clone())));
        }
    }

    #[test]
    fn triangle_density() {
        let one = ratio(1, 1);
        let tri = PiecewisePoly::uniform(one.clone()).convolve_uniform(&one);
        assert_eq!(tri.eval(&ratio(0, 1)), ratio(1, 2));
        assert_eq!(tri.eval(&ratio(1, 1)), ratio(1, 4));
        assert_eq!(tri.eval(&ratio(3, 1)), ratio(0, 1));
        assert_eq!(tri.total_mass(), ratio(1, 1));
    }

    #[test]
    fn irwin_hall_three() {
        // U1+U2+U3 on [-1,1]: density at 0 is 3/8
        let one = ratio(1, 1);
        let d = sum_of_uniforms_density(&[one.clone(), one.clone(), one], &ratio(0, 1)).unwrap();
        assert_eq!(d, ratio(3, 8));
    }

    #[test]
    fn mass_is_preserved() {
        let ws = [ratio(3, 1), ratio(1, 2), ratio(7, 3), ratio(2, 1)];
        let mut d = PiecewisePoly::uniform(ws[0].clone());
        for w in &ws[1..] {
            d = d.convolve_uniform(w);
        }
        assert_eq!(d.total_mass(), ratio(1, 1));
    }

    #[test]
    fn float_agrees_with_exact() {
        let exact = sum_of_uniforms_density(
            &[ratio(1, 1), ratio(2, 1), ratio(2, 1), ratio(-5, 1)],
            &ratio(0, 1),
        )
        .unwrap();
        let float = sum_of_uniforms_density(&[1.0f64, 2.0, 2.0, -5.0], &0.0).unwrap();
        let e: f64 = crate::scalar::rational_to_f64(&exact);
        assert!((e - float).abs() < 1e-13);
        let _ = BigRational::from_integer(1.into());
    }

    #[test]
    fn all_zero_is_none() {
        assert!(sum_of_uniforms_density(&[0.0f64, 0.0], &0.0).is_none());
    }
}
