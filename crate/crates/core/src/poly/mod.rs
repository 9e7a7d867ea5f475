//! Sparse multivariate polynomials over a fixed number of variables.

mod monomial;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::Real;

pub use monomial::{binomial, Exponent, MonomialBasis};

/// Default threshold used by [`Polynomial::clean`] after a solve.
pub const DEFAULT_CLEAN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VariableMismatch { left: usize, right: usize },
    #[error("expected {expected} component maps, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("point has dimension {got}, polynomial has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("monomial {monomial:?} exceeds basis degree {max_degree}")]
    DegreeOverflow { monomial: Exponent, max_degree: u32 },
    #[error("coefficient vector has length {got}, basis has {expected} monomials")]
    LengthMismatch { expected: usize, got: usize },
}

/// Arithmetic operations offered by [`Polynomial::arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// Polynomial `Σ_β p_β x^β` stored as a sparse map from exponents to
/// coefficients. No stored coefficient is exactly zero.
#[derive(Clone, PartialEq)]
pub struct Polynomial<T> {
    n_vars: usize,
    terms: BTreeMap<Exponent, T>,
}

impl<T: Real> Polynomial<T> {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: T) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(Exponent::zero(n_vars), c);
        p
    }

    pub fn one(n_vars: usize) -> Self {
        Self::constant(n_vars, T::one())
    }

    /// The coordinate polynomial `x_i`.
    pub fn variable(n_vars: usize, i: usize) -> Self {
        assert!(i < n_vars, "variable index out of range");
        Self::monomial(Exponent::unit(n_vars, i), T::one())
    }

    pub fn monomial(exponent: Exponent, c: T) -> Self {
        let mut p = Self::zero(exponent.n_vars());
        p.add_term(exponent, c);
        p
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs, summing
    /// repeated exponents.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Exponent, T)>,
    {
        let mut p = Self::zero(n_vars);
        for (e, c) in terms {
            if e.n_vars() != n_vars {
                return Err(PolyError::VariableMismatch {
                    left: n_vars,
                    right: e.n_vars(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    /// Adds `c·x^e` in place, dropping the term if it cancels exactly.
    pub fn add_term(&mut self, e: Exponent, c: T) {
        debug_assert_eq!(e.n_vars(), self.n_vars);
        if c == T::zero() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == T::zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Maximum total degree over stored terms; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &T)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, e: &Exponent) -> T {
        self.terms.get(e).copied().unwrap_or_else(T::zero)
    }

    pub fn constant_term(&self) -> T {
        self.coefficient(&Exponent::zero(self.n_vars))
    }

    fn check_same_vars(&self, other: &Self) -> Result<(), PolyError> {
        if self.n_vars != other.n_vars {
            return Err(PolyError::VariableMismatch {
                left: self.n_vars,
                right: other.n_vars,
            });
        }
        Ok(())
    }

    /// Binary arithmetic with variable-count checking.
    pub fn arith(&self, other: &Self, op: ArithOp) -> Result<Self, PolyError> {
        self.check_same_vars(other)?;
        Ok(match op {
            ArithOp::Add => self.add_unchecked(other, T::one()),
            ArithOp::Sub => self.add_unchecked(other, -T::one()),
            ArithOp::Mul => self.mul_unchecked(other),
        })
    }

    fn add_unchecked(&self, other: &Self, sign: T) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), sign * *c);
        }
        out
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n_vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.add_term(ea.add(eb), *ca * *cb);
            }
        }
        out
    }

    pub fn scale(&self, c: T) -> Self {
        if c == T::zero() {
            return Self::zero(self.n_vars);
        }
        Polynomial {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .filter_map(|(e, v)| {
                    let s = *v * c;
                    (s != T::zero()).then(|| (e.clone(), s))
                })
                .collect(),
        }
    }

    /// `p^k` by repeated squaring.
    pub fn pow(&self, k: u32) -> Self {
        let mut result = Self::one(self.n_vars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul_unchecked(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul_unchecked(&base);
            }
        }
        result
    }

    /// Returns `p(f_1(x), …, f_n(x))`. The maps may live in a different
    /// number of variables than `p`; they must agree among themselves.
    pub fn compose(&self, maps: &[Polynomial<T>]) -> Result<Self, PolyError> {
        if maps.len() != self.n_vars {
            return Err(PolyError::ComponentCount {
                expected: self.n_vars,
                got: maps.len(),
            });
        }
        let target_vars = maps.first().map(|m| m.n_vars).unwrap_or(self.n_vars);
        for m in maps {
            if m.n_vars != target_vars {
                return Err(PolyError::VariableMismatch {
                    left: target_vars,
                    right: m.n_vars,
                });
            }
        }
        let mut powers = PowerCache::new(maps);
        let mut out = Self::zero(target_vars);
        for (e, c) in &self.terms {
            let term = powers.product(e);
            for (te, tc) in &term.terms {
                out.add_term(te.clone(), *c * *tc);
            }
        }
        Ok(out)
    }

    /// Direct evaluation `Σ p_β x^β`.
    pub fn evaluate(&self, point: &[T]) -> Result<T, PolyError> {
        if point.len() != self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                got: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[T]) -> T {
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            let mut m = *c;
            for (x, &k) in point.iter().zip(e.as_slice()) {
                if k > 0 {
                    m *= x.powi(k as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Coefficients aligned with `basis`.
    pub fn coefficient_vector(&self, basis: &MonomialBasis) -> Result<Vec<T>, PolyError> {
        if basis.n_vars() != self.n_vars {
            return Err(PolyError::VariableMismatch {
                left: self.n_vars,
                right: basis.n_vars(),
            });
        }
        let mut out = vec![T::zero(); basis.len()];
        for (e, c) in &self.terms {
            match basis.index_of(e) {
                Some(i) => out[i] = *c,
                None => {
                    return Err(PolyError::DegreeOverflow {
                        monomial: e.clone(),
                        max_degree: basis.max_degree(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Polynomial::coefficient_vector`].
    pub fn from_coefficients(basis: &MonomialBasis, coeffs: &[T]) -> Result<Self, PolyError> {
        if coeffs.len() != basis.len() {
            return Err(PolyError::LengthMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        let mut p = Self::zero(basis.n_vars());
        for (e, c) in basis.iter().zip(coeffs) {
            p.add_term(e.clone(), *c);
        }
        Ok(p)
    }

    /// Drops every coefficient with `|c| < eps`.
    pub fn clean(&self, eps: T) -> Self {
        Polynomial {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() >= eps)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> T {
        self.terms
            .values()
            .fold(T::zero(), |acc, c| acc.max(c.abs()))
    }

    /// Homogeneous part of degree exactly `k`.
    pub fn homogeneous_part(&self, k: u32) -> Self {
        Polynomial {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.degree() == k)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Converts coefficients to another scalar type.
    pub fn cast<U: Real>(&self) -> Polynomial<U> {
        let mut out = Polynomial::zero(self.n_vars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), U::lit(c.to_f64_lossy()));
        }
        out
    }

    /// Formats with the given variable names, e.g. `0.5*x1 + x1*x2^2`.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> DisplayWith<'a, T> {
        DisplayWith { poly: self, names }
    }
}

/// Memoised products `Π_i f_i^{β_i}` used by composition and pushforward.
pub struct PowerCache<'a, T> {
    maps: &'a [Polynomial<T>],
    cache: HashMap<Exponent, Polynomial<T>>,
}

impl<'a, T: Real> PowerCache<'a, T> {
    pub fn new(maps: &'a [Polynomial<T>]) -> Self {
        PowerCache {
            maps,
            cache: HashMap::new(),
        }
    }

    /// Returns `Π_i f_i^{β_i}` expanded.
    pub fn product(&mut self, beta: &Exponent) -> Polynomial<T> {
        if let Some(p) = self.cache.get(beta) {
            return p.clone();
        }
        let target_vars = self.maps.first().map(|m| m.n_vars).unwrap_or(0);
        let result = match beta.as_slice().iter().position(|&k| k > 0) {
            None => Polynomial::one(target_vars),
            Some(i) => {
                let mut lower = beta.as_slice().to_vec();
                lower[i] -= 1;
                let base = self.product(&Exponent::new(lower));
                base.mul_unchecked(&self.maps[i])
            }
        };
        self.cache.insert(beta.clone(), result.clone());
        result
    }
}

impl<T: Real> fmt::Debug for Polynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..=self.n_vars).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

pub struct DisplayWith<'a, T> {
    poly: &'a Polynomial<T>,
    names: &'a [String],
}

impl<T: Real> fmt::Display for DisplayWith<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.poly.terms.iter().enumerate() {
            let negative = *c < T::zero();
            let mag = c.abs();
            match (k, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut factors: Vec<String> = Vec::new();
            if e.is_zero() || mag != T::one() {
                factors.push(format!("{mag}"));
            }
            for (i, &p) in e.as_slice().iter().enumerate() {
                match p {
                    0 => {}
                    1 => factors.push(self.names[i].clone()),
                    _ => factors.push(format!("{}^{}", self.names[i], p)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

impl<T: Real> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: Self) -> Polynomial<T> {
        self.arith(rhs, ArithOp::Add)
            .expect("polynomial variable mismatch")
    }
}

impl<T: Real> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: Self) -> Polynomial<T> {
        self.arith(rhs, ArithOp::Sub)
            .expect("polynomial variable mismatch")
    }
}

impl<T: Real> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: Self) -> Polynomial<T> {
        self.arith(rhs, ArithOp::Mul)
            .expect("polynomial variable mismatch")
    }
}

impl<T: Real> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        self.scale(-T::one())
    }
}

/// Affine polynomial `c + Σ_j a_j x_j`.
pub fn affine<T: Real>(constant: T, linear: &[T]) -> Polynomial<T> {
    let n = linear.len();
    let mut p = Polynomial::constant(n, constant);
    for (j, a) in linear.iter().enumerate() {
        p.add_term(Exponent::unit(n, j), *a);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial<f64> {
        Polynomial::variable(n, i)
    }

    fn toy_dynamics() -> Vec<Polynomial<f64>> {
        let (x1, x2) = (x(2, 0), x(2, 1));
        let f1 = (&x1 + &(&x1 * &x2).scale(2.0)).scale(0.5);
        let f2 = (&x2 - &x1.pow(3).scale(2.0)).scale(0.5);
        vec![f1, f2]
    }

    #[test]
    fn monomial_product() {
        let x1 = x(2, 0);
        let sq = &x1 * &x1;
        assert_eq!(sq, Polynomial::monomial(Exponent::new(vec![2, 0]), 1.0));
    }

    #[test]
    fn toy_update_expands() {
        let f = toy_dynamics();
        assert_eq!(f[0].coefficient(&Exponent::new(vec![1, 0])), 0.5);
        assert_eq!(f[0].coefficient(&Exponent::new(vec![1, 1])), 1.0);
        assert_eq!(f[0].n_terms(), 2);
    }

    #[test]
    fn cancellation_prunes() {
        let s = &x(2, 0) + &x(2, 1);
        let d = &s - &s;
        assert!(d.is_zero());
        assert_eq!(d.n_terms(), 0);
        assert_eq!(d.degree(), 0);
    }

    #[test]
    fn mismatched_vars_rejected() {
        let err = x(2, 0).arith(&x(3, 0), ArithOp::Add).unwrap_err();
        assert_eq!(err, PolyError::VariableMismatch { left: 2, right: 3 });
    }

    #[test]
    fn compose_with_toy_dynamics() {
        let f = toy_dynamics();
        let p = x(2, 1).compose(&f).unwrap();
        assert_eq!(p.coefficient(&Exponent::new(vec![0, 1])), 0.5);
        assert_eq!(p.coefficient(&Exponent::new(vec![3, 0])), -1.0);
        assert_eq!(p.n_terms(), 2);
        let c = Polynomial::constant(2, 1.0).compose(&f).unwrap();
        assert_eq!(c, Polynomial::one(2));
    }

    #[test]
    fn compose_cathala_square() {
        let (x1, x2) = (x(2, 0), x(2, 1));
        let f = vec![&x1 + &x2, &(&x1 * &x1) - &Polynomial::constant(2, 0.5952)];
        let p = (&x1 * &x1).compose(&f).unwrap();
        // (x1 + x2)^2 expanded by hand
        let expected = Polynomial::from_terms(
            2,
            vec![
                (Exponent::new(vec![2, 0]), 1.0),
                (Exponent::new(vec![1, 1]), 2.0),
                (Exponent::new(vec![0, 2]), 1.0),
            ],
        )
        .unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn compose_checks_lengths() {
        let err = x(2, 0).compose(&[x(2, 0)]).unwrap_err();
        assert_eq!(
            err,
            PolyError::ComponentCount {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn evaluation_examples() {
        let p = &(&x(2, 0) * &x(2, 0)) - &(&x(2, 1) * &x(2, 1));
        assert_eq!(p.evaluate(&[1.0, 1.0]).unwrap(), 0.0);
        let cathala_x2 = &(&x(2, 0) * &x(2, 0)) - &Polynomial::constant(2, 0.5952);
        assert_eq!(cathala_x2.evaluate(&[0.0, 0.0]).unwrap(), -0.5952);
        let f = toy_dynamics();
        assert_eq!(f[0].evaluate(&[0.5, 0.5]).unwrap(), 0.5);
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn coefficient_vectors() {
        let basis = MonomialBasis::new(2, 2);
        let zero = Polynomial::<f64>::zero(2);
        assert!(zero
            .coefficient_vector(&basis)
            .unwrap()
            .iter()
            .all(|&c| c == 0.0));
        let p = &Polynomial::one(2) + &(&x(2, 0) * &x(2, 1));
        let v = p.coefficient_vector(&basis).unwrap();
        let nz: Vec<f64> = v.iter().copied().filter(|&c| c != 0.0).collect();
        assert_eq!(nz, vec![1.0, 1.0]);
        assert_eq!(Polynomial::from_coefficients(&basis, &v).unwrap(), p);
        let cubic = x(2, 0).pow(3);
        match cubic.coefficient_vector(&basis) {
            Err(PolyError::DegreeOverflow { monomial, .. }) => {
                assert_eq!(monomial, Exponent::new(vec![3, 0]))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clean_drops_small_terms() {
        let p = &Polynomial::constant(1, 1e-14) + &x(1, 0);
        assert_eq!(p.clean(DEFAULT_CLEAN_EPS), x(1, 0));
    }

    #[test]
    fn display_uses_names() {
        let names = vec!["a".to_string(), "b".to_string()];
        let p = &x(2, 0).scale(-0.5) + &x(2, 1).pow(2);
        assert_eq!(p.display_with(&names).to_string(), "-0.5*a + b^2");
    }

    #[test]
    fn works_in_single_precision() {
        let p: Polynomial<f32> = &Polynomial::variable(2, 0) * &Polynomial::variable(2, 1);
        assert_eq!(p.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    }
}
