//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! The standard-form program `min cᵀx, Ax = b, x ∈ K` is first reduced:
//! cone blocks whose columns each sit alone in a distinct row shared only
//! with free columns are eliminated, which turns `X = M(y)` linking rows into
//! linear matrix inequalities. The solver then works on
//!
//! ```text
//! min cᵀx  s.t.  A x = b,  G x + s = h,  s ∈ K
//! ```
//!
//! where `x = (x_F, x_K)`, `G = [[G_E, 0], [0, −I]]`, `h = (h_E, 0)`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::cones::{svec_len, BlockKind, BlockScaling, ConeLayout, Scaling};
use super::ldl::{dot, Ldl};
use super::{
    residuals, Cone, ConicProgram, ConicSolver, Residuals, Solution, SolveError, SolverOptions,
    SparseMatrix, Status,
};
use crate::scalar::Real;

/// Built-in primal-dual interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl<T: Real> ConicSolver<T> for InteriorPoint {
    fn name(&self) -> &str {
        "builtin-ipm"
    }

    fn solve(
        &self,
        program: &ConicProgram<T>,
        opts: &SolverOptions,
    ) -> Result<Solution<T>, SolveError> {
        program.validate()?;
        let reduced = Reduced::new(program);
        run(program, &reduced, opts)
    }
}

#[derive(Debug, Clone, Copy)]
struct ElimCol<T> {
    col: usize,
    row: usize,
    pivot: T,
    cost: T,
}

/// `(global index, lower-triangle entries (p, q, m))` of one constraint
/// matrix restricted to a cone block.
type Item<T> = (usize, Vec<(usize, usize, T)>);

#[derive(Debug, Clone)]
struct BlockItems<T> {
    block: usize,
    items: Vec<Item<T>>,
}

#[derive(Debug, Clone)]
struct Reduced<T: Real> {
    n_rows: usize,
    free_cols: Vec<usize>,
    kept_cols: Vec<usize>,
    kept_rows: Vec<usize>,
    elim: Vec<ElimCol<T>>,
    nf: usize,
    nk: usize,
    ne: usize,
    a: SparseMatrix<T>,
    b: Vec<T>,
    c: Vec<T>,
    g_e: SparseMatrix<T>,
    h: Vec<T>,
    layout: ConeLayout,
    row_touches_k: Vec<bool>,
    schur_items: Vec<BlockItems<T>>,
    nf_items: Vec<BlockItems<T>>,
}

fn block_kind(cone: Cone) -> Option<BlockKind> {
    match cone {
        Cone::Free(_) => None,
        Cone::Nonneg(n) => Some(BlockKind::Lp(n)),
        Cone::Psd(k) => Some(BlockKind::Psd(k)),
    }
}

/// Lower-triangle `(row, col)` of each svec position.
fn svec_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(svec_len(k));
    for j in 0..k {
        for i in j..k {
            out.push((i, j));
        }
    }
    out
}

fn to_entry<T: Real>(
    kind: BlockKind,
    pairs: &[(usize, usize)],
    local: usize,
    a: T,
) -> (usize, usize, T) {
    match kind {
        BlockKind::Lp(_) => (local, local, a),
        BlockKind::Psd(_) => {
            let (p, q) = pairs[local];
            if p == q {
                (p, q, a)
            } else {
                (p, q, a / T::lit(2.0).sqrt())
            }
        }
    }
}

impl<T: Real> Reduced<T> {
    fn new(p: &ConicProgram<T>) -> Self {
        let n_rows = p.n_rows();
        let n_cols = p.n_cols();
        let offsets = p.cone_offsets();
        let mut is_free = vec![false; n_cols];
        for (cone, &off) in p.cones.iter().zip(&offsets) {
            if let Cone::Free(n) = cone {
                is_free[off..off + n].iter_mut().for_each(|f| *f = true);
            }
        }
        let at = p.a.transpose();

        let mut used_rows = HashSet::new();
        let mut eliminated = vec![false; p.cones.len()];
        let mut elim = Vec::new();
        for (bi, (cone, &off)) in p.cones.iter().zip(&offsets).enumerate() {
            if block_kind(*cone).is_none() {
                continue;
            }
            let mut cand = Vec::with_capacity(cone.dim());
            let mut rows = HashSet::new();
            let ok = (off..off + cone.dim()).all(|col| {
                let (r, v) = at.row(col);
                if r.len() != 1 || !rows.insert(r[0]) || used_rows.contains(&r[0]) {
                    return false;
                }
                let (cols, _) = p.a.row(r[0]);
                if cols.iter().any(|&j| j != col && !is_free[j]) {
                    return false;
                }
                cand.push(ElimCol {
                    col,
                    row: r[0],
                    pivot: v[0],
                    cost: p.c[col],
                });
                true
            });
            if ok {
                eliminated[bi] = true;
                used_rows.extend(rows);
                elim.extend(cand);
            }
        }

        let free_cols: Vec<usize> = (0..n_cols).filter(|&j| is_free[j]).collect();
        let mut kept_cols = Vec::new();
        let mut kinds_e = Vec::new();
        let mut kinds_k = Vec::new();
        for (bi, (cone, &off)) in p.cones.iter().zip(&offsets).enumerate() {
            if let Some(kind) = block_kind(*cone) {
                if eliminated[bi] {
                    kinds_e.push(kind);
                } else {
                    kinds_k.push(kind);
                    kept_cols.extend(off..off + cone.dim());
                }
            }
        }
        let nf = free_cols.len();
        let nk = kept_cols.len();
        let ne = elim.len();
        let mut col_map = vec![usize::MAX; n_cols];
        for (i, &j) in free_cols.iter().chain(&kept_cols).enumerate() {
            col_map[j] = i;
        }
        let kept_rows: Vec<usize> = (0..n_rows).filter(|r| !used_rows.contains(r)).collect();

        let mut trip = Vec::new();
        let mut row_touches_k = vec![false; kept_rows.len()];
        for (q, &r) in kept_rows.iter().enumerate() {
            let (cols, vals) = p.a.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                let ij = col_map[j];
                trip.push((q, ij, v));
                if ij >= nf {
                    row_touches_k[q] = true;
                }
            }
        }
        let a = SparseMatrix::from_triplets(kept_rows.len(), nf + nk, trip);
        let b: Vec<T> = kept_rows.iter().map(|&r| p.b[r]).collect();
        let mut c: Vec<T> = free_cols
            .iter()
            .chain(&kept_cols)
            .map(|&j| p.c[j])
            .collect();
        let mut g_trip = Vec::new();
        let mut h = vec![T::zero(); ne + nk];
        for (e, ec) in elim.iter().enumerate() {
            let (cols, vals) = p.a.row(ec.row);
            let ce = p.c[ec.col] / ec.pivot;
            for (&j, &v) in cols.iter().zip(vals) {
                if j != ec.col {
                    c[col_map[j]] -= v * ce;
                    g_trip.push((e, col_map[j], v / ec.pivot));
                }
            }
            h[e] = p.b[ec.row] / ec.pivot;
        }
        let g_e = SparseMatrix::from_triplets(ne, nf, g_trip);
        let kinds: Vec<BlockKind> = kinds_e.iter().chain(&kinds_k).copied().collect();
        let layout = ConeLayout::new(&kinds);

        // s index → (block, local index)
        let mut s_block = vec![(0usize, 0usize); layout.dim];
        for (bi, &(kind, off)) in layout.blocks.iter().enumerate() {
            for t in 0..kind.dim() {
                s_block[off + t] = (bi, t);
            }
        }
        let pairs: Vec<Vec<(usize, usize)>> = layout
            .blocks
            .iter()
            .map(|&(kind, _)| match kind {
                BlockKind::Psd(k) => svec_pairs(k),
                BlockKind::Lp(_) => Vec::new(),
            })
            .collect();
        let collect_items = |mat: &SparseMatrix<T>, s_shift: usize, lo: usize| {
            let mut per_block: Vec<BlockItems<T>> = (0..layout.blocks.len())
                .map(|block| BlockItems {
                    block,
                    items: Vec::new(),
                })
                .collect();
            for g in 0..mat.n_rows() {
                let (cols, vals) = mat.row(g);
                let mut cur: Option<(usize, Vec<(usize, usize, T)>)> = None;
                for (&j, &v) in cols.iter().zip(vals) {
                    if j < lo {
                        continue;
                    }
                    let (bi, t) = s_block[j - lo + s_shift];
                    let entry = to_entry(layout.blocks[bi].0, &pairs[bi], t, v);
                    match &mut cur {
                        Some((b, list)) if *b == bi => list.push(entry),
                        _ => {
                            if let Some((b, list)) = cur.take() {
                                per_block[b].items.push((g, list));
                            }
                            cur = Some((bi, vec![entry]));
                        }
                    }
                }
                if let Some((b, list)) = cur {
                    per_block[b].items.push((g, list));
                }
            }
            per_block.retain(|b| !b.items.is_empty());
            per_block
        };
        let schur_items = collect_items(&a, ne, nf);
        let nf_items = collect_items(&g_e.transpose(), 0, 0);

        Reduced {
            n_rows,
            free_cols,
            kept_cols,
            kept_rows,
            elim,
            nf,
            nk,
            ne,
            a,
            b,
            c,
            g_e,
            h,
            layout,
            row_touches_k,
            schur_items,
            nf_items,
        }
    }

    fn m(&self) -> usize {
        self.kept_rows.len()
    }

    fn n_x(&self) -> usize {
        self.nf + self.nk
    }

    /// `G x`.
    fn g_mul(&self, x: &[T]) -> Vec<T> {
        let mut out = self.g_e.mul_vec(&x[..self.nf]);
        out.extend(x[self.nf..].iter().map(|v| -*v));
        out
    }

    /// `Gᵀ z`.
    fn gt_mul(&self, z: &[T]) -> Vec<T> {
        let mut out = self.g_e.tr_mul_vec(&z[..self.ne]);
        out.extend(z[self.ne..].iter().map(|v| -*v));
        out
    }

    /// Maps an internal iterate back to the original variables.
    fn recover(
        &self,
        x: &[T],
        y: &[T],
        s: &[T],
        z: &[T],
        tau: T,
        n_cols: usize,
    ) -> (Vec<T>, Vec<T>) {
        let mut xo = vec![T::zero(); n_cols];
        for (i, &j) in self.free_cols.iter().chain(&self.kept_cols).enumerate() {
            xo[j] = x[i] / tau;
        }
        let mut yo = vec![T::zero(); self.n_rows];
        for (q, &r) in self.kept_rows.iter().enumerate() {
            yo[r] = -y[q] / tau;
        }
        for (e, ec) in self.elim.iter().enumerate() {
            xo[ec.col] = s[e] / tau;
            yo[ec.row] = (ec.cost - z[e] / tau) / ec.pivot;
        }
        (xo, yo)
    }
}

/// Lower-triangle contributions `(i, l, <M_i, D M_l D>)` of one block.
fn congruence<T: Real>(
    items: &[Item<T>],
    kind: BlockKind,
    scaling: &BlockScaling<T>,
    inverse: bool,
) -> Vec<(usize, usize, T)> {
    let two = T::lit(2.0);
    match (kind, scaling) {
        (BlockKind::Lp(n), BlockScaling::Lp { w, .. }) => {
            let d: Vec<T> = w
                .iter()
                .map(|wi| {
                    if inverse {
                        T::one() / (*wi * *wi)
                    } else {
                        *wi * *wi
                    }
                })
                .collect();
            let mut work = vec![T::zero(); n];
            let mut out = Vec::new();
            for (l, (gl, ml)) in items.iter().enumerate() {
                for &(p, _, m) in ml {
                    work[p] = m * d[p];
                }
                for (gi, mi) in &items[l..] {
                    let v = mi
                        .iter()
                        .fold(T::zero(), |acc, &(p, _, m)| acc + m * work[p]);
                    if v != T::zero() {
                        out.push((*gi, *gl, v));
                    }
                }
                for &(p, _, _) in ml {
                    work[p] = T::zero();
                }
            }
            out
        }
        (BlockKind::Psd(k), BlockScaling::Psd { wm, wm_inv, .. }) => {
            let dm: &DMatrix<T> = if inverse { wm_inv } else { wm };
            let dcol = dm.as_slice();
            let parts: Vec<Vec<(usize, usize, T)>> = (0..items.len())
                .into_par_iter()
                .map(|l| {
                    let mut g = vec![T::zero(); k * k];
                    let rank1 = |g: &mut [T], m: T, a: usize, b: usize| {
                        let u = &dcol[a * k..(a + 1) * k];
                        let v = &dcol[b * k..(b + 1) * k];
                        for q in 0..k {
                            let coef = m * v[q];
                            if coef != T::zero() {
                                let col = &mut g[q * k + q..(q + 1) * k];
                                for (gp, up) in col.iter_mut().zip(&u[q..]) {
                                    *gp += coef * *up;
                                }
                            }
                        }
                    };
                    for &(a, b, m) in &items[l].1 {
                        rank1(&mut g, m, a, b);
                        if a != b {
                            rank1(&mut g, m, b, a);
                        }
                    }
                    let gl = items[l].0;
                    items[l..]
                        .iter()
                        .filter_map(|(gi, mi)| {
                            let v = mi.iter().fold(T::zero(), |acc, &(p, q, m)| {
                                let w = if p == q { m } else { two * m };
                                acc + w * g[q * k + p]
                            });
                            (v != T::zero()).then_some((*gi, gl, v))
                        })
                        .collect()
                })
                .collect();
            parts.into_iter().flatten().collect()
        }
        _ => unreachable!("scaling matches layout"),
    }
}

/// Factored reduced KKT system for one scaling.
struct Kkt<'a, T: Real> {
    red: &'a Reduced<T>,
    w: &'a Scaling<T>,
    ldl: Ldl<T>,
    pos_x: Vec<usize>,
    pos_y: Vec<usize>,
}

impl<'a, T: Real> Kkt<'a, T> {
    fn factor(red: &'a Reduced<T>, w: &'a Scaling<T>) -> Self {
        let (nf, m) = (red.nf, red.m());
        let n = nf + m;
        let mut pos_y = vec![0; m];
        let mut pos_x = vec![0; nf];
        let mut signs = Vec::with_capacity(n);
        for q in (0..m).filter(|&q| red.row_touches_k[q]) {
            pos_y[q] = signs.len();
            signs.push(-1i8);
        }
        for (f, px) in pos_x.iter_mut().enumerate() {
            let _ = f;
            *px = signs.len();
            signs.push(1);
        }
        for q in (0..m).filter(|&q| !red.row_touches_k[q]) {
            pos_y[q] = signs.len();
            signs.push(-1);
        }
        let mut k = vec![T::zero(); n * n];
        let mut add = |i: usize, j: usize, v: T| {
            let (i, j) = if i >= j { (i, j) } else { (j, i) };
            k[i * n + j] += v;
        };
        for bi in &red.schur_items {
            let (kind, _) = red.layout.blocks[bi.block];
            for (qi, ql, v) in congruence(&bi.items, kind, &w.blocks[bi.block], false) {
                add(pos_y[qi], pos_y[ql], -v);
            }
        }
        for bi in &red.nf_items {
            let (kind, _) = red.layout.blocks[bi.block];
            for (fi, fl, v) in congruence(&bi.items, kind, &w.blocks[bi.block], true) {
                add(pos_x[fi], pos_x[fl], v);
            }
        }
        for q in 0..m {
            let (cols, vals) = red.a.row(q);
            for (&j, &v) in cols.iter().zip(vals) {
                if j < nf {
                    add(pos_y[q], pos_x[j], v);
                }
            }
        }
        let delta = T::machine_eps().sqrt() * T::lit(1e-3);
        let ldl = Ldl::factor(k, n, &signs, delta);
        if ldl.perturbed > 0 {
            log::debug!("{} pivots regularized", ldl.perturbed);
        }
        Kkt {
            red,
            w,
            ldl,
            pos_x,
            pos_y,
        }
    }

    fn split_s<'b>(&self, v: &'b [T]) -> (&'b [T], &'b [T]) {
        v.split_at(self.red.ne)
    }

    fn solve_once(&self, r1: &[T], r2: &[T], r3: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let red = self.red;
        let (nf, ne) = (red.nf, red.ne);
        let (r3e, r3k) = self.split_s(r3);
        let mut tmp = r3e.to_vec();
        tmp.resize(ne + red.nk, T::zero());
        let t = self.w.apply_wtw_inv(&tmp);
        let corr = red.g_e.tr_mul_vec(&t[..ne]);
        let mut rhs = vec![T::zero(); self.ldl.dim()];
        for f in 0..nf {
            rhs[self.pos_x[f]] = r1[f] + corr[f];
        }
        let mut tmp = vec![T::zero(); ne];
        tmp.extend_from_slice(&r1[nf..]);
        let v = self.w.apply_wtw(&tmp);
        let mut xk = vec![T::zero(); nf];
        xk.extend(v[ne..].iter().zip(r3k).map(|(a, b)| *a - *b));
        let ak = red.a.mul_vec(&xk);
        for q in 0..red.m() {
            rhs[self.pos_y[q]] = r2[q] - ak[q];
        }
        self.ldl.solve(&mut rhs);
        let dxf: Vec<T> = self.pos_x.iter().map(|&p| rhs[p]).collect();
        let dy: Vec<T> = self.pos_y.iter().map(|&p| rhs[p]).collect();
        let aty = red.a.tr_mul_vec(&dy);
        let mut tmp = vec![T::zero(); ne];
        tmp.extend(r1[nf..].iter().zip(&aty[nf..]).map(|(a, b)| *a - *b));
        let v = self.w.apply_wtw(&tmp);
        let mut dx = dxf.clone();
        dx.extend(v[ne..].iter().zip(r3k).map(|(a, b)| *a - *b));
        let ge = red.g_e.mul_vec(&dxf);
        let mut tmp: Vec<T> = ge.iter().zip(r3e).map(|(a, b)| *a - *b).collect();
        tmp.resize(ne + red.nk, T::zero());
        let v = self.w.apply_wtw_inv(&tmp);
        let mut dz = v[..ne].to_vec();
        dz.extend(aty[nf..].iter().zip(&r1[nf..]).map(|(a, b)| *a - *b));
        (dx, dy, dz)
    }

    /// Full KKT product `[[0, Aᵀ, Gᵀ], [A, 0, 0], [G, 0, −WᵀW]]`.
    fn apply(&self, dx: &[T], dy: &[T], dz: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let red = self.red;
        let mut k1 = red.a.tr_mul_vec(dy);
        for (a, b) in k1.iter_mut().zip(red.gt_mul(dz)) {
            *a += b;
        }
        let k2 = red.a.mul_vec(dx);
        let wz = self.w.apply_wtw(dz);
        let k3 = red
            .g_mul(dx)
            .iter()
            .zip(&wz)
            .map(|(a, b)| *a - *b)
            .collect();
        (k1, k2, k3)
    }

    fn solve(&self, r1: &[T], r2: &[T], r3: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut sol = self.solve_once(r1, r2, r3);
        let scale = T::one() + inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3));
        let tol = T::machine_eps() * T::lit(100.0) * scale;
        let mut last = T::max_value().unwrap_or_else(T::one);
        for _ in 0..5 {
            let (k1, k2, k3) = self.apply(&sol.0, &sol.1, &sol.2);
            let e1: Vec<T> = r1.iter().zip(&k1).map(|(a, b)| *a - *b).collect();
            let e2: Vec<T> = r2.iter().zip(&k2).map(|(a, b)| *a - *b).collect();
            let e3: Vec<T> = r3.iter().zip(&k3).map(|(a, b)| *a - *b).collect();
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            if err <= tol || !(err < last * T::lit(0.5)) {
                break;
            }
            last = err;
            let d = self.solve_once(&e1, &e2, &e3);
            add_assign(&mut sol.0, &d.0, T::one());
            add_assign(&mut sol.1, &d.1, T::one());
            add_assign(&mut sol.2, &d.2, T::one());
        }
        sol
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

fn norm2<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

fn add_assign<T: Real>(y: &mut [T], x: &[T], alpha: T) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * *b;
    }
}

/// Moves `v` into the interior of the cone if needed.
fn shift_interior<T: Real>(layout: &ConeLayout, v: &mut [T]) {
    if layout.dim == 0 {
        return;
    }
    let alpha = -layout.min_eig(v);
    if alpha >= T::zero() {
        let e: Vec<T> = layout.identity();
        add_assign(v, &e, T::one() + alpha);
    }
}

struct Iterate<T> {
    x: Vec<T>,
    y: Vec<T>,
    s: Vec<T>,
    z: Vec<T>,
    tau: T,
    kappa: T,
}

struct Direction<T> {
    dx: Vec<T>,
    dy: Vec<T>,
    dz: Vec<T>,
    ds: Vec<T>,
    dtau: T,
    dkappa: T,
    /// `W⁻ᵀ Δs` and `W Δz`.
    ds_scaled: Vec<T>,
    dz_scaled: Vec<T>,
}

struct Candidate<T> {
    x: Vec<T>,
    y: Vec<T>,
    res: Residuals<T>,
    score: T,
    iteration: usize,
}

fn run<T: Real>(
    p: &ConicProgram<T>,
    red: &Reduced<T>,
    opts: &SolverOptions,
) -> Result<Solution<T>, SolveError> {
    let feas_tol = T::lit(opts.feas_tol);
    let gap_tol = T::lit(opts.gap_tol);
    let near = T::lit(opts.near_optimal_factor);
    let layout = &red.layout;
    let nu = T::from_usize_lossy(layout.degree());
    let e: Vec<T> = layout.identity();
    let (c, b, h) = (&red.c, &red.b, &red.h);
    let n_cols = p.n_cols();

    let ident = Scaling::identity(layout);
    let kkt = Kkt::factor(red, &ident);
    let (x, _, mut s) = kkt.solve(&vec![T::zero(); red.n_x()], b, h);
    s.iter_mut().for_each(|v| *v = -*v);
    let neg_c: Vec<T> = c.iter().map(|v| -*v).collect();
    let (_, y, mut z) = kkt.solve(
        &neg_c,
        &vec![T::zero(); red.m()],
        &vec![T::zero(); layout.dim],
    );
    drop(kkt);
    shift_interior(layout, &mut s);
    shift_interior(layout, &mut z);
    let mut it = Iterate {
        x,
        y,
        s,
        z,
        tau: T::one(),
        kappa: T::one(),
    };

    let res_x0 = T::one().max(norm2(c));
    let res_y0 = T::one().max(norm2(b));
    let res_z0 = T::one().max(norm2(h));
    let mut best: Option<Candidate<T>> = None;
    let mut failure: Option<String> = None;
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let (xo, yo) = red.recover(&it.x, &it.y, &it.s, &it.z, it.tau, n_cols);
        let res = residuals(p, &xo, &yo);
        let score = (res.primal / feas_tol)
            .max(res.dual / feas_tol)
            .max(res.gap / gap_tol);
        let log_line = format!(
            "iter {iter:3}  pres {:.2e}  dres {:.2e}  gap {:.2e}  tau {:.2e}  kappa {:.2e}",
            res.primal.to_f64_lossy(),
            res.dual.to_f64_lossy(),
            res.gap.to_f64_lossy(),
            it.tau.to_f64_lossy(),
            it.kappa.to_f64_lossy()
        );
        if opts.verbose {
            log::info!("{log_line}");
        } else {
            log::debug!("{log_line}");
        }
        if score.is_finite() && best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(Candidate {
                x: xo,
                y: yo,
                res,
                score,
                iteration: iter,
            });
        }
        if res.within(feas_tol, gap_tol) {
            break;
        }
        // no progress for a while: keep the best iterate
        if best
            .as_ref()
            .is_some_and(|b| iter >= b.iteration + opts.stall_iterations)
        {
            break;
        }

        let cx = dot(c, &it.x);
        let by = dot(b, &it.y);
        let hz = dot(h, &it.z);
        let mut gx = red.g_mul(&it.x);
        add_assign(&mut gx, &it.s, T::one());
        let atyz = {
            let mut v = red.a.tr_mul_vec(&it.y);
            add_assign(&mut v, &red.gt_mul(&it.z), T::one());
            v
        };
        if hz + by < T::zero() {
            let pinf = norm2(&atyz) / res_x0 / (-(hz + by));
            if pinf <= feas_tol {
                return Ok(certificate(p, red, &it, Status::Infeasible, iter));
            }
        }
        if cx < T::zero() {
            let ax = red.a.mul_vec(&it.x);
            let dinf = (norm2(&ax) / res_y0).max(norm2(&gx) / res_z0) / (-cx);
            if dinf <= feas_tol {
                return Ok(certificate(p, red, &it, Status::Unbounded, iter));
            }
        }
        if iter == opts.max_iter {
            break;
        }

        // residuals of the homogeneous embedding
        let mut rx = atyz.clone();
        add_assign(&mut rx, c, it.tau);
        let mut ry = red.a.mul_vec(&it.x);
        add_assign(&mut ry, b, -it.tau);
        let mut rz = gx;
        add_assign(&mut rz, h, -it.tau);
        let rt = it.kappa + cx + by + hz;
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (nu + T::one());

        let w = match Scaling::nt(layout, &it.s, &it.z) {
            Ok(w) => w,
            Err(msg) => {
                failure = Some(msg);
                break;
            }
        };
        let kkt = Kkt::factor(red, &w);
        let neg_c: Vec<T> = c.iter().map(|v| -*v).collect();
        let sol1 = kkt.solve(&neg_c, b, h);
        let den1 = dot(c, &sol1.0) + dot(b, &sol1.1) + dot(h, &sol1.2);
        let lambda = w.lambda();
        let lam_sq = layout.jordan(&lambda, &lambda);

        let direction = |eta: T, ds_rhs: &[T], dk: T| -> Direction<T> {
            let q = w.lambda_div(ds_rhs);
            let r1: Vec<T> = rx.iter().map(|v| -eta * *v).collect();
            let r2: Vec<T> = ry.iter().map(|v| -eta * *v).collect();
            let wtq = w.apply_wt(&q);
            let r3: Vec<T> = rz.iter().zip(&wtq).map(|(a, b)| -eta * *a - *b).collect();
            let sol0 = kkt.solve(&r1, &r2, &r3);
            let num =
                -eta * rt - dk / it.tau - (dot(c, &sol0.0) + dot(b, &sol0.1) + dot(h, &sol0.2));
            let dtau = num / (den1 - it.kappa / it.tau);
            let mut dx = sol0.0;
            add_assign(&mut dx, &sol1.0, dtau);
            let mut dy = sol0.1;
            add_assign(&mut dy, &sol1.1, dtau);
            let mut dz = sol0.2;
            add_assign(&mut dz, &sol1.2, dtau);
            let dz_scaled = w.apply_w(&dz);
            let ds_scaled: Vec<T> = q.iter().zip(&dz_scaled).map(|(a, b)| *a - *b).collect();
            let ds = w.apply_wt(&ds_scaled);
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            Direction {
                dx,
                dy,
                dz,
                ds,
                dtau,
                dkappa,
                ds_scaled,
                dz_scaled,
            }
        };
        let max_step = |d: &Direction<T>| -> T {
            let mut a = w.max_step(&d.ds_scaled).min(w.max_step(&d.dz_scaled));
            if d.dtau < T::zero() {
                a = a.min(-it.tau / d.dtau);
            }
            if d.dkappa < T::zero() {
                a = a.min(-it.kappa / d.dkappa);
            }
            a
        };

        let ds_aff: Vec<T> = lam_sq.iter().map(|v| -*v).collect();
        let aff = direction(T::one(), &ds_aff, -it.tau * it.kappa);
        let alpha_aff = max_step(&aff).min(T::one());
        let sigma = (T::one() - alpha_aff).max(T::zero()).powi(3).min(T::one());
        let cross = layout.jordan(&aff.ds_scaled, &aff.dz_scaled);
        let ds_cc: Vec<T> = lam_sq
            .iter()
            .zip(&cross)
            .zip(&e)
            .map(|((l, x), ei)| -*l - *x + sigma * mu * *ei)
            .collect();
        let dk_cc = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = direction(T::one() - sigma, &ds_cc, dk_cc);
        let alpha = (T::lit(opts.step_fraction) * max_step(&dir)).min(T::one());
        if !(alpha > T::lit(1e-12)) || !alpha.is_finite() {
            failure = Some(format!("step length {:.1e}", alpha.to_f64_lossy()));
            iterations = iter + 1;
            break;
        }
        add_assign(&mut it.x, &dir.dx, alpha);
        add_assign(&mut it.y, &dir.dy, alpha);
        add_assign(&mut it.z, &dir.dz, alpha);
        add_assign(&mut it.s, &dir.ds, alpha);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
    }

    let Some(best) = best else {
        return Err(SolveError::Breakdown {
            iteration: iterations,
            detail: failure.unwrap_or_else(|| "no finite iterate".into()),
        });
    };
    let status = if best.res.within(feas_tol, gap_tol) {
        Status::Optimal
    } else if best.res.within(feas_tol * near, gap_tol * near) {
        Status::NearOptimal
    } else if let Some(detail) = failure {
        return Err(SolveError::Breakdown {
            iteration: iterations,
            detail,
        });
    } else {
        Status::MaxIter
    };
    Ok(Solution {
        primal_objective: dot(&p.c, &best.x),
        dual_objective: dot(&p.b, &best.y),
        x: best.x,
        y: best.y,
        status,
        iterations,
        residuals: best.res,
    })
}

/// Packages an infeasibility or unboundedness certificate, normalized so
/// that the certifying objective equals ∓1.
fn certificate<T: Real>(
    p: &ConicProgram<T>,
    red: &Reduced<T>,
    it: &Iterate<T>,
    status: Status,
    iteration: usize,
) -> Solution<T> {
    let n_cols = p.n_cols();
    let (mut x, mut y) = (vec![T::zero(); n_cols], vec![T::zero(); p.n_rows()]);
    match status {
        Status::Infeasible => {
            let scale = -(dot(&red.h, &it.z) + dot(&red.b, &it.y));
            let (_, yo) = red.recover(
                &vec![T::zero(); red.n_x()],
                &it.y,
                &it.s,
                &it.z,
                scale,
                n_cols,
            );
            // `recover` adds the cost vector on eliminated rows; remove it
            y = yo;
            for ec in &red.elim {
                y[ec.row] -= ec.cost / ec.pivot;
            }
        }
        _ => {
            let scale = -dot(&red.c, &it.x);
            let (xo, _) = red.recover(&it.x, &it.y, &it.s, &it.z, scale, n_cols);
            x = xo;
        }
    }
    let res = residuals(p, &vec![T::zero(); n_cols], &vec![T::zero(); p.n_rows()]);
    Solution {
        primal_objective: dot(&p.c, &x),
        dual_objective: dot(&p.b, &y),
        x,
        y,
        status,
        iterations: iteration,
        residuals: res,
    }
}
