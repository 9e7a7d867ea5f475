use std::collections::HashMap;

use crate::poly::{Exponent, MonomialBasis, PolyError, Polynomial, PowerCache};
use crate::scalar::Real;
use crate::sdp::svec_len;

/// Linear map from a moment vector to the packed lower triangle of a
/// localizing matrix `M_k(g y)`.
///
/// `entries[t]` lists `(moment index, coefficient)` for svec position `t`;
/// the coefficients are those of `g(x) x^{β+γ}`, without the packing factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizingSpec<T> {
    pub order: u32,
    pub size: usize,
    pub entries: Vec<Vec<(usize, T)>>,
}

impl<T: Real> LocalizingSpec<T> {
    /// `1` on the diagonal and `√2` off it, so that the packed entry of the
    /// matrix is `factor · Σ coef · y`.
    pub fn packing_factors(&self) -> Vec<T> {
        let s2 = T::lit(2.0).sqrt();
        let mut out = Vec::with_capacity(svec_len(self.size));
        for j in 0..self.size {
            for i in j..self.size {
                out.push(if i == j { T::one() } else { s2 });
            }
        }
        out
    }

    /// Evaluates the matrix on a moment vector.
    pub fn matrix(&self, y: &[T]) -> nalgebra::DMatrix<T> {
        let k = self.size;
        let mut m = nalgebra::DMatrix::zeros(k, k);
        let mut t = 0;
        for j in 0..k {
            for i in j..k {
                let v = self.entries[t]
                    .iter()
                    .fold(T::zero(), |acc, &(idx, c)| acc + c * y[idx]);
                m[(i, j)] = v;
                m[(j, i)] = v;
                t += 1;
            }
        }
        m
    }
}

/// Builds `M_k(g y)` over the order-`k` basis; moment indices refer to
/// `moments`, which must contain every monomial of degree `2k + deg g`.
/// Entries sharing the same `β + γ` share one expansion.
pub fn moment_matrix_spec<T: Real>(
    k: u32,
    g: &Polynomial<T>,
    moments: &MonomialBasis,
) -> Result<LocalizingSpec<T>, PolyError> {
    let n = g.n_vars();
    if moments.max_degree() < 2 * k + g.degree() {
        let monomial = g
            .terms()
            .map(|(e, _)| e.clone())
            .last()
            .unwrap_or_else(|| Exponent::zero(n));
        return Err(PolyError::DegreeOverflow {
            monomial,
            max_degree: moments.max_degree(),
        });
    }
    let basis = MonomialBasis::new(n, k);
    let size = basis.len();
    let mut cache: HashMap<Exponent, Vec<(usize, T)>> = HashMap::new();
    let mut entries = Vec::with_capacity(svec_len(size));
    for j in 0..size {
        for i in j..size {
            let sigma = basis.get(i).add(basis.get(j));
            let row = cache
                .entry(sigma)
                .or_insert_with_key(|sigma| {
                    g.terms()
                        .map(|(e, c)| {
                            let idx = moments
                                .index_of(&e.add(sigma))
                                .expect("degree checked above");
                            (idx, *c)
                        })
                        .collect()
                })
                .clone();
            entries.push(row);
        }
    }
    Ok(LocalizingSpec {
        order: k,
        size,
        entries,
    })
}

/// Coefficients of `Π_i f_i(x)^{β_i}` over `target`, i.e. the functional
/// `z ↦ ℓ_z(f(x)^β)`.
pub fn pushforward_row<T: Real>(
    cache: &mut PowerCache<'_, T>,
    beta: &Exponent,
    target: &MonomialBasis,
) -> Result<Vec<(usize, T)>, PolyError> {
    let p = cache.product(beta);
    p.terms()
        .map(|(e, c)| {
            target
                .index_of(e)
                .map(|i| (i, *c))
                .ok_or_else(|| PolyError::DegreeOverflow {
                    monomial: e.clone(),
                    max_degree: target.max_degree(),
                })
        })
        .collect()
}

/// `Σ_{a,b} Q_ab x^{B_a + B_b} g(x)` for a Gram matrix over the order-`k`
/// basis.
pub fn gram_polynomial<T: Real>(
    q: &nalgebra::DMatrix<T>,
    k: u32,
    g: &Polynomial<T>,
) -> Polynomial<T> {
    let n = g.n_vars();
    let basis = MonomialBasis::new(n, k);
    let mut sos = Polynomial::zero(n);
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            let v = q[(a, b)];
            if v != T::zero() {
                sos.add_term(basis.get(a).add(basis.get(b)), v);
            }
        }
    }
    &sos * g
}
