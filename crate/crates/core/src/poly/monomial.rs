//! Exponent vectors and graded-lex monomial bases.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Exponent vector `β ∈ N^n` of a monomial `x^β`.
///
/// Ordered graded-lexicographically: total degree first, then
/// lexicographically on the entries. With this order the monomials of
/// degree at most `r` form a prefix of any larger basis.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(exponents: Vec<u32>) -> Self {
        Exponent(exponents)
    }

    pub fn zero(n_vars: usize) -> Self {
        Exponent(vec![0; n_vars])
    }

    /// Unit exponent `e_i`.
    pub fn unit(n_vars: usize, i: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[i] = 1;
        Exponent(e)
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// `β + γ`. Panics when the lengths differ.
    pub fn add(&self, other: &Exponent) -> Exponent {
        assert_eq!(self.0.len(), other.0.len(), "exponent length mismatch");
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `β − γ` when every entry stays nonnegative.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        if self.0.len() != other.0.len() {
            return None;
        }
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(Exponent(out))
    }

    /// True when some entry is odd.
    pub fn has_odd_entry(&self) -> bool {
        self.0.iter().any(|e| e % 2 == 1)
    }
}

impl From<Vec<u32>> for Exponent {
    fn from(v: Vec<u32>) -> Self {
        Exponent(v)
    }
}

impl std::ops::Index<usize> for Exponent {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// All exponents of `N^n_r` in graded-lex order, with reverse lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    n_vars: usize,
    max_degree: u32,
    monomials: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    /// Enumerates `N^n_r`; the result has `binomial(n + r, r)` elements.
    pub fn new(n_vars: usize, max_degree: u32) -> Self {
        assert!(n_vars >= 1, "a monomial basis needs at least one variable");
        let mut monomials = Vec::with_capacity(binomial(n_vars + max_degree as usize, n_vars));
        for degree in 0..=max_degree {
            let mut current = vec![0u32; n_vars];
            compositions(degree, 0, &mut current, &mut monomials);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            n_vars,
            max_degree,
            monomials,
            index,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Exponent] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &Exponent {
        &self.monomials[i]
    }

    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Exponent> {
        self.monomials.iter()
    }
}

// Appends every exponent of total degree `remaining` over positions `pos..`
// in ascending lexicographic order.
fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Exponent>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(Exponent(current.clone()));
        current[pos] = 0;
        return;
    }
    for e in 0..=remaining {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}
