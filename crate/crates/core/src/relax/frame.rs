use nalgebra::DMatrix;

use crate::moments::DomainGeometry;
use crate::poly::{affine, Polynomial};
use crate::scalar::Real;

/// Affine change of variables `x = c + L ξ` that sends the state geometry
/// into the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFrame<T: Real> {
    center: Vec<T>,
    l: DMatrix<T>,
    l_inv: DMatrix<T>,
}

impl<T: Real> ScalingFrame<T> {
    pub fn new(geometry: &DomainGeometry<T>) -> Self {
        let (center, l) = geometry.normalizing_map();
        let l_inv = l
            .clone()
            .try_inverse()
            .expect("normalizing map is invertible");
        ScalingFrame { center, l, l_inv }
    }

    pub fn identity(n: usize) -> Self {
        ScalingFrame {
            center: vec![T::zero(); n],
            l: DMatrix::identity(n, n),
            l_inv: DMatrix::identity(n, n),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.l
    }

    /// `|det L|`, the factor relating volumes in both frames.
    pub fn jacobian(&self) -> T {
        self.l.determinant().abs()
    }

    /// `ξ = L⁻¹ (x − c)`.
    pub fn to_scaled(&self, x: &[T]) -> Vec<T> {
        let n = self.n_vars();
        (0..n)
            .map(|i| {
                (0..n).fold(T::zero(), |acc, j| {
                    acc + self.l_inv[(i, j)] * (x[j] - self.center[j])
                })
            })
            .collect()
    }

    /// `x = c + L ξ`.
    pub fn to_original(&self, xi: &[T]) -> Vec<T> {
        let n = self.n_vars();
        (0..n)
            .map(|i| (0..n).fold(self.center[i], |acc, j| acc + self.l[(i, j)] * xi[j]))
            .collect()
    }

    fn forward_maps(&self) -> Vec<Polynomial<T>> {
        let n = self.n_vars();
        (0..n)
            .map(|i| {
                let row: Vec<T> = (0..n).map(|j| self.l[(i, j)]).collect();
                affine(self.center[i], &row)
            })
            .collect()
    }

    fn inverse_maps(&self) -> Vec<Polynomial<T>> {
        let n = self.n_vars();
        (0..n)
            .map(|i| {
                let row: Vec<T> = (0..n).map(|j| self.l_inv[(i, j)]).collect();
                let shift = (0..n).fold(T::zero(), |acc, j| {
                    acc - self.l_inv[(i, j)] * self.center[j]
                });
                affine(shift, &row)
            })
            .collect()
    }

    /// `p(c + L ξ)` as a polynomial in `ξ`.
    pub fn pull(&self, p: &Polynomial<T>) -> Polynomial<T> {
        p.compose(&self.forward_maps())
            .expect("frame matches polynomial")
    }

    /// `p̃(L⁻¹(x − c))` as a polynomial in `x`.
    pub fn push(&self, p: &Polynomial<T>) -> Polynomial<T> {
        p.compose(&self.inverse_maps())
            .expect("frame matches polynomial")
    }

    /// `f̃(ξ) = L⁻¹ (f(c + L ξ) − c)`.
    pub fn conjugate(&self, f: &[Polynomial<T>]) -> Vec<Polynomial<T>> {
        let n = self.n_vars();
        let pulled: Vec<Polynomial<T>> = f.iter().map(|fi| self.pull(fi)).collect();
        (0..n)
            .map(|i| {
                let mut out = Polynomial::zero(n);
                for j in 0..n {
                    let shifted = &pulled[j] - &Polynomial::constant(n, self.center[j]);
                    out = &out + &shifted.scale(self.l_inv[(i, j)]);
                }
                out
            })
            .collect()
    }
}
