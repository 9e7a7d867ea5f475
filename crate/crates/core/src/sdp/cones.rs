//! Packed symmetric storage and Nesterov-Todd scaling for products of
//! nonnegative orthants and PSD cones.

use nalgebra::{DMatrix, SVD};

use crate::scalar::Real;

pub fn svec_len(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Position of entry `(i, j)` in the packed lower triangle (column-major).
pub fn svec_index(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    j * (2 * k - j + 1) / 2 + (i - j)
}

/// Unpacks an `svec` into a full symmetric matrix.
pub fn svec_to_mat<T: Real>(v: &[T], k: usize) -> DMatrix<T> {
    debug_assert_eq!(v.len(), svec_len(k));
    let inv_sqrt2 = T::one() / T::lit(2.0).sqrt();
    let mut m = DMatrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        m[(j, j)] = v[idx];
        idx += 1;
        for i in j + 1..k {
            let x = v[idx] * inv_sqrt2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    m
}

/// Packs the symmetric part of `m`.
pub fn mat_to_svec<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let k = m.nrows();
    let s = T::lit(2.0).sqrt() / T::lit(2.0);
    let mut v = Vec::with_capacity(svec_len(k));
    for j in 0..k {
        v.push(m[(j, j)]);
        for i in j + 1..k {
            v.push((m[(i, j)] + m[(j, i)]) * s);
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BlockKind {
    Lp(usize),
    Psd(usize),
}

impl BlockKind {
    pub fn dim(self) -> usize {
        match self {
            BlockKind::Lp(n) => n,
            BlockKind::Psd(k) => svec_len(k),
        }
    }

    /// Barrier degree of the block.
    pub fn degree(self) -> usize {
        match self {
            BlockKind::Lp(n) | BlockKind::Psd(n) => n,
        }
    }
}

/// Ordered cone blocks of a conic vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeLayout {
    pub blocks: Vec<(BlockKind, usize)>,
    pub dim: usize,
}

impl ConeLayout {
    pub fn new(kinds: &[BlockKind]) -> Self {
        let mut off = 0;
        let blocks = kinds
            .iter()
            .map(|&k| {
                let o = off;
                off += k.dim();
                (k, o)
            })
            .collect();
        ConeLayout { blocks, dim: off }
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|(k, _)| k.degree()).sum()
    }

    pub fn identity<T: Real>(&self) -> Vec<T> {
        let mut e = vec![T::zero(); self.dim];
        for &(kind, off) in &self.blocks {
            match kind {
                BlockKind::Lp(n) => e[off..off + n].iter_mut().for_each(|v| *v = T::one()),
                BlockKind::Psd(k) => {
                    for j in 0..k {
                        e[off + svec_index(k, j, j)] = T::one();
                    }
                }
            }
        }
        e
    }

    /// Smallest eigenvalue over all blocks (entries for orthant blocks).
    pub fn min_eig<T: Real>(&self, v: &[T]) -> T {
        let mut m = T::max_value().unwrap_or_else(T::one);
        for &(kind, off) in &self.blocks {
            match kind {
                BlockKind::Lp(n) => {
                    for x in &v[off..off + n] {
                        m = m.min(*x);
                    }
                }
                BlockKind::Psd(k) => {
                    let e = svec_to_mat(&v[off..off + svec_len(k)], k).symmetric_eigenvalues();
                    m = m.min(e.min());
                }
            }
        }
        m
    }

    /// Jordan product `u ∘ v`.
    pub fn jordan<T: Real>(&self, u: &[T], v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for &(kind, off) in &self.blocks {
            match kind {
                BlockKind::Lp(n) => {
                    for i in off..off + n {
                        out[i] = u[i] * v[i];
                    }
                }
                BlockKind::Psd(k) => {
                    let r = off..off + svec_len(k);
                    let a = svec_to_mat(&u[r.clone()], k);
                    let b = svec_to_mat(&v[r.clone()], k);
                    let p = &a * &b;
                    let sym = (&p + p.transpose()) * T::lit(0.5);
                    out[r].copy_from_slice(&mat_to_svec(&sym));
                }
            }
        }
        out
    }
}

/// Scaling data of one block.
#[derive(Debug, Clone)]
pub(crate) enum BlockScaling<T: Real> {
    Lp {
        w: Vec<T>,
        lambda: Vec<T>,
    },
    Psd {
        r: DMatrix<T>,
        rinv: DMatrix<T>,
        /// `R Rᵀ`, so that `WᵀW(U) = Wm U Wm`.
        wm: DMatrix<T>,
        wm_inv: DMatrix<T>,
        lambda: Vec<T>,
    },
}

/// Nesterov-Todd scaling `W` with `W⁻ᵀ s = W z = λ`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling<T: Real> {
    pub layout: ConeLayout,
    pub blocks: Vec<BlockScaling<T>>,
}

impl<T: Real> Scaling<T> {
    pub fn identity(layout: &ConeLayout) -> Self {
        let blocks = layout
            .blocks
            .iter()
            .map(|&(kind, _)| match kind {
                BlockKind::Lp(n) => BlockScaling::Lp {
                    w: vec![T::one(); n],
                    lambda: vec![T::one(); n],
                },
                BlockKind::Psd(k) => BlockScaling::Psd {
                    r: DMatrix::identity(k, k),
                    rinv: DMatrix::identity(k, k),
                    wm: DMatrix::identity(k, k),
                    wm_inv: DMatrix::identity(k, k),
                    lambda: vec![T::one(); k],
                },
            })
            .collect();
        Scaling {
            layout: layout.clone(),
            blocks,
        }
    }

    /// Computes the scaling point of two interior vectors.
    pub fn nt(layout: &ConeLayout, s: &[T], z: &[T]) -> Result<Self, String> {
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for &(kind, off) in &layout.blocks {
            match kind {
                BlockKind::Lp(n) => {
                    let mut w = Vec::with_capacity(n);
                    let mut lambda = Vec::with_capacity(n);
                    for i in off..off + n {
                        if !(s[i] > T::zero() && z[i] > T::zero()) {
                            return Err(format!("orthant entry {i} left the interior"));
                        }
                        w.push((s[i] / z[i]).sqrt());
                        lambda.push((s[i] * z[i]).sqrt());
                    }
                    blocks.push(BlockScaling::Lp { w, lambda });
                }
                BlockKind::Psd(k) => {
                    let r = off..off + svec_len(k);
                    let sm = svec_to_mat(&s[r.clone()], k);
                    let zm = svec_to_mat(&z[r], k);
                    let ls = sm
                        .cholesky()
                        .ok_or_else(|| format!("primal block at {off} not positive definite"))?
                        .l();
                    let lz = zm
                        .cholesky()
                        .ok_or_else(|| format!("dual block at {off} not positive definite"))?
                        .l();
                    let prod = lz.transpose() * &ls;
                    let svd = SVD::new(prod, true, true);
                    let u = svd.u.as_ref().expect("requested U");
                    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
                    let sv = &svd.singular_values;
                    if sv.iter().any(|x| !(*x > T::zero())) {
                        return Err(format!("degenerate scaling in block at {off}"));
                    }
                    let mut r_mat = ls * vt.transpose();
                    let mut rinv = u.transpose() * lz.transpose();
                    for (j, &l) in sv.iter().enumerate() {
                        let root = l.sqrt();
                        r_mat.column_mut(j).unscale_mut(root);
                        rinv.row_mut(j).unscale_mut(root);
                    }
                    let wm = &r_mat * r_mat.transpose();
                    let wm_inv = rinv.transpose() * &rinv;
                    blocks.push(BlockScaling::Psd {
                        r: r_mat,
                        rinv,
                        wm,
                        wm_inv,
                        lambda: sv.iter().copied().collect(),
                    });
                }
            }
        }
        Ok(Scaling {
            layout: layout.clone(),
            blocks,
        })
    }

    /// `λ` as a conic vector (diagonal matrices for PSD blocks).
    pub fn lambda(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.layout.dim];
        for (b, &(_, off)) in self.blocks.iter().zip(&self.layout.blocks) {
            match b {
                BlockScaling::Lp { lambda, .. } => {
                    out[off..off + lambda.len()].copy_from_slice(lambda)
                }
                BlockScaling::Psd { lambda, .. } => {
                    let k = lambda.len();
                    for (j, l) in lambda.iter().enumerate() {
                        out[off + svec_index(k, j, j)] = *l;
                    }
                }
            }
        }
        out
    }

    fn map_blocks<F, G>(&self, u: &[T], lp: F, psd: G) -> Vec<T>
    where
        F: Fn(&[T], &[T]) -> Vec<T>,
        G: Fn(&BlockScaling<T>, &DMatrix<T>) -> DMatrix<T>,
    {
        let mut out = vec![T::zero(); self.layout.dim];
        for (b, &(kind, off)) in self.blocks.iter().zip(&self.layout.blocks) {
            let r = off..off + kind.dim();
            match (b, kind) {
                (BlockScaling::Lp { w, .. }, _) => out[r.clone()].copy_from_slice(&lp(w, &u[r])),
                (BlockScaling::Psd { .. }, BlockKind::Psd(k)) => {
                    let m = svec_to_mat(&u[r.clone()], k);
                    out[r].copy_from_slice(&mat_to_svec(&psd(b, &m)));
                }
                _ => unreachable!("scaling matches layout"),
            }
        }
        out
    }

    /// `W u`.
    pub fn apply_w(&self, u: &[T]) -> Vec<T> {
        self.map_blocks(
            u,
            |w, v| w.iter().zip(v).map(|(a, b)| *a * *b).collect(),
            |b, m| match b {
                BlockScaling::Psd { r, .. } => r.transpose() * m * r,
                _ => unreachable!(),
            },
        )
    }

    /// `Wᵀ u`.
    pub fn apply_wt(&self, u: &[T]) -> Vec<T> {
        self.map_blocks(
            u,
            |w, v| w.iter().zip(v).map(|(a, b)| *a * *b).collect(),
            |b, m| match b {
                BlockScaling::Psd { r, .. } => r * m * r.transpose(),
                _ => unreachable!(),
            },
        )
    }

    /// `W⁻ᵀ u`.
    #[allow(dead_code)]
    pub fn apply_w_inv_t(&self, u: &[T]) -> Vec<T> {
        self.map_blocks(
            u,
            |w, v| w.iter().zip(v).map(|(a, b)| *b / *a).collect(),
            |b, m| match b {
                BlockScaling::Psd { rinv, .. } => rinv * m * rinv.transpose(),
                _ => unreachable!(),
            },
        )
    }

    /// `WᵀW u`.
    pub fn apply_wtw(&self, u: &[T]) -> Vec<T> {
        self.map_blocks(
            u,
            |w, v| w.iter().zip(v).map(|(a, b)| *a * *a * *b).collect(),
            |b, m| match b {
                BlockScaling::Psd { wm, .. } => wm * m * wm,
                _ => unreachable!(),
            },
        )
    }

    /// `(WᵀW)⁻¹ u`.
    pub fn apply_wtw_inv(&self, u: &[T]) -> Vec<T> {
        self.map_blocks(
            u,
            |w, v| w.iter().zip(v).map(|(a, b)| *b / (*a * *a)).collect(),
            |b, m| match b {
                BlockScaling::Psd { wm_inv, .. } => wm_inv * m * wm_inv,
                _ => unreachable!(),
            },
        )
    }

    /// Solves `λ ∘ q = d` for `q`.
    pub fn lambda_div(&self, d: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        let mut out = vec![T::zero(); self.layout.dim];
        for (b, &(kind, off)) in self.blocks.iter().zip(&self.layout.blocks) {
            match b {
                BlockScaling::Lp { lambda, .. } => {
                    for (i, l) in lambda.iter().enumerate() {
                        out[off + i] = d[off + i] / *l;
                    }
                }
                BlockScaling::Psd { lambda, .. } => {
                    let k = lambda.len();
                    debug_assert_eq!(kind, BlockKind::Psd(k));
                    let mut idx = off;
                    for j in 0..k {
                        for i in j..k {
                            out[idx] = d[idx] * two / (lambda[i] + lambda[j]);
                            idx += 1;
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest `α` with `λ + α d` in the cone (infinite when unconstrained).
    pub fn max_step(&self, d: &[T]) -> T {
        let mut alpha = T::max_value().unwrap_or_else(T::one);
        for (b, &(_, off)) in self.blocks.iter().zip(&self.layout.blocks) {
            match b {
                BlockScaling::Lp { lambda, .. } => {
                    for (i, l) in lambda.iter().enumerate() {
                        let di = d[off + i];
                        if di < T::zero() {
                            alpha = alpha.min(-*l / di);
                        }
                    }
                }
                BlockScaling::Psd { lambda, .. } => {
                    let k = lambda.len();
                    let mut m = svec_to_mat(&d[off..off + svec_len(k)], k);
                    let inv_root: Vec<T> = lambda.iter().map(|l| T::one() / l.sqrt()).collect();
                    for j in 0..k {
                        for i in 0..k {
                            m[(i, j)] *= inv_root[i] * inv_root[j];
                        }
                    }
                    let min = m.symmetric_eigenvalues().min();
                    if min < T::zero() {
                        alpha = alpha.min(-T::one() / min);
                    }
                }
            }
        }
        alpha
    }
}
