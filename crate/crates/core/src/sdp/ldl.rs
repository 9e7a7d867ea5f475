//! Dense LDLᵀ for symmetric quasi-definite matrices with a known pivot
//! sign pattern.

use crate::scalar::Real;

/// Unrolled dot product with a fixed summation order.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let o = c * 8;
        for k in 0..8 {
            acc[k] += a[o + k] * b[o + k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Factor `P (K + Δ) Pᵀ = L D Lᵀ` of a symmetric matrix given in row-major
/// order, where `Δ = diag(sign_i · δ)` and each pivot is forced to carry its
/// expected sign.
#[derive(Debug, Clone)]
pub(crate) struct Ldl<T> {
    n: usize,
    l: Vec<T>,
    d: Vec<T>,
    /// Pivots that had to be replaced.
    pub perturbed: usize,
}

impl<T: Real> Ldl<T> {
    /// Factors in place; only the lower triangle of `a` is read. A pivot
    /// that is not safely of its expected sign relative to its own diagonal
    /// entry is replaced by `ε^{3/4}` times that diagonal entry, with that
    /// sign; refinement against the unperturbed system absorbs the change.
    pub fn factor(mut a: Vec<T>, n: usize, signs: &[i8], delta: T) -> Self {
        assert_eq!(a.len(), n * n);
        assert_eq!(signs.len(), n);
        let eps = T::machine_eps();
        let eps34 = eps.sqrt() * eps.sqrt().sqrt();
        let mut d = vec![T::zero(); n];
        let mut t = vec![T::zero(); n];
        let mut perturbed = 0;
        for i in 0..n {
            let (done, rest) = a.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + j];
                let s = row_i[j] - dot(row_j, &t[..j]);
                t[j] = s;
                row_i[j] = s / d[j];
            }
            let sign = T::lit(signs[i] as f64);
            let diag = row_i[i] + sign * delta;
            let threshold = eps * T::lit(1e2) * diag.abs().max(delta);
            let mut di = diag - dot(&row_i[..i], &t[..i]);
            if !(di * sign > threshold) || !di.is_finite() {
                di = sign * eps34 * diag.abs().max(delta);
                perturbed += 1;
            }
            d[i] = di;
            row_i[i] = T::one();
        }
        Ldl {
            n,
            l: a,
            d,
            perturbed,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] -= s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let bi = b[i];
            if bi != T::zero() {
                let row = &self.l[i * n..i * n + i];
                axpy(-bi, row, &mut b[..i]);
            }
        }
    }
}
