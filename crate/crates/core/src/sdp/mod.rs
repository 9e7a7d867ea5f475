//! Standard-form conic programs and a built-in interior-point solver.
//!
//! A program is `min cᵀx  s.t.  A x = b,  x ∈ K` where `K` is a product of
//! free, nonnegative and PSD blocks. PSD blocks are stored in packed `svec`
//! form: the lower triangle column by column with off-diagonal entries
//! scaled by √2, so that `svec(X)ᵀ svec(Y) = trace(XY)`.

mod cones;
mod ipm;
mod ldl;
mod sparse;

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::Real;

pub use cones::{mat_to_svec, svec_index, svec_len, svec_to_mat};
pub use ipm::InteriorPoint;
pub use sparse::SparseMatrix;

/// One block of the cone `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Free(usize),
    Nonneg(usize),
    /// `k × k` PSD matrices, occupying `k(k+1)/2` columns.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Free(n) | Cone::Nonneg(n) => n,
            Cone::Psd(k) => svec_len(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("cone dimensions sum to {cones} but the program has {cols} columns")]
    ColumnCount { cones: usize, cols: usize },
    #[error("right-hand side has {got} entries for {rows} rows")]
    RhsLength { got: usize, rows: usize },
    #[error("objective has {got} entries for {cols} columns")]
    ObjectiveLength { got: usize, cols: usize },
    #[error("constraint row {0} is empty")]
    EmptyRow(usize),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid program: {0}")]
    Program(#[from] ProgramError),
    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    Breakdown { iteration: usize, detail: String },
}

/// `min cᵀx  s.t.  A x = b,  x ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T: Real> {
    pub c: Vec<T>,
    pub a: SparseMatrix<T>,
    pub b: Vec<T>,
    pub cones: Vec<Cone>,
}

impl<T: Real> ConicProgram<T> {
    pub fn new(
        c: Vec<T>,
        a: SparseMatrix<T>,
        b: Vec<T>,
        cones: Vec<Cone>,
    ) -> Result<Self, ProgramError> {
        let p = ConicProgram { c, a, b, cones };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != self.a.n_cols() {
            return Err(ProgramError::ColumnCount {
                cones: total,
                cols: self.a.n_cols(),
            });
        }
        if self.c.len() != self.a.n_cols() {
            return Err(ProgramError::ObjectiveLength {
                got: self.c.len(),
                cols: self.a.n_cols(),
            });
        }
        if self.b.len() != self.a.n_rows() {
            return Err(ProgramError::RhsLength {
                got: self.b.len(),
                rows: self.a.n_rows(),
            });
        }
        for i in 0..self.a.n_rows() {
            if self.a.row(i).0.is_empty() {
                return Err(ProgramError::EmptyRow(i));
            }
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("objective"));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("right-hand side"));
        }
        if self.a.values().iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("constraint matrix"));
        }
        Ok(())
    }

    pub fn n_cols(&self) -> usize {
        self.a.n_cols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.n_rows()
    }

    /// Column offset of every cone block.
    pub fn cone_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.cones
            .iter()
            .map(|c| {
                let o = off;
                off += c.dim();
                o
            })
            .collect()
    }

    /// Writes the sparse text dump: a header `n_cols n_rows`, one line per
    /// cone block, the objective as `c col value` lines, the right-hand side
    /// as `b row value` lines, then `row col value` triplets.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n_cols(), self.n_rows())?;
        for cone in &self.cones {
            match cone {
                Cone::Free(n) => writeln!(out, "free {n}")?,
                Cone::Nonneg(n) => writeln!(out, "nonneg {n}")?,
                Cone::Psd(k) => writeln!(out, "psd {k}")?,
            }
        }
        for (j, v) in self.c.iter().enumerate() {
            if *v != T::zero() {
                writeln!(out, "c {j} {v:?}")?;
            }
        }
        for (i, v) in self.b.iter().enumerate() {
            if *v != T::zero() {
                writeln!(out, "b {i} {v:?}")?;
            }
        }
        for i in 0..self.n_rows() {
            let (cols, vals) = self.a.row(i);
            for (j, v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {j} {v:?}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::NearOptimal => "near_optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIter => "max_iter",
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(self, Status::Optimal | Status::NearOptimal)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual feasibility tolerance.
    pub feas_tol: f64,
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
    /// Iterates within this factor of the tolerances count as near-optimal.
    pub near_optimal_factor: f64,
    pub step_fraction: f64,
    /// Stop after this many iterations without a better iterate.
    pub stall_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            verbose: false,
            near_optimal_factor: 1e3,
            step_fraction: 0.99,
            stall_iterations: 25,
        }
    }
}

/// Relative residuals recomputed from a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals<T> {
    /// `(‖Ax − b‖ + dist(x, K)) / (1 + ‖b‖)`.
    pub primal: T,
    /// `(‖(c − Aᵀy)_free‖ + dist(c − Aᵀy, K)) / (1 + ‖c‖)`.
    pub dual: T,
    /// `|cᵀx − bᵀy| / (1 + |cᵀx| + |bᵀy|)`.
    pub gap: T,
}

impl<T: Real> Residuals<T> {
    pub fn within(&self, feas_tol: T, gap_tol: T) -> bool {
        self.primal <= feas_tol && self.dual <= feas_tol && self.gap <= gap_tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub x: Vec<T>,
    /// Multipliers of the equality constraints.
    pub y: Vec<T>,
    pub status: Status,
    pub iterations: usize,
    pub primal_objective: T,
    pub dual_objective: T,
    pub residuals: Residuals<T>,
}

/// Interface shared by all conic solvers.
pub trait ConicSolver<T: Real> {
    fn name(&self) -> &str;
    fn solve(
        &self,
        program: &ConicProgram<T>,
        opts: &SolverOptions,
    ) -> Result<Solution<T>, SolveError>;
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt()
}

/// Euclidean distance from `v` to the cone block.
fn cone_violation<T: Real>(cone: Cone, v: &[T]) -> T {
    match cone {
        Cone::Free(_) => T::zero(),
        Cone::Nonneg(_) => v
            .iter()
            .fold(T::zero(), |acc, x| {
                let m = x.min(T::zero());
                acc + m * m
            })
            .sqrt(),
        Cone::Psd(k) => {
            let m: DMatrix<T> = svec_to_mat(v, k);
            m.symmetric_eigenvalues()
                .iter()
                .fold(T::zero(), |acc, l| {
                    let m = l.min(T::zero());
                    acc + m * m
                })
                .sqrt()
        }
    }
}

/// Recomputes primal, dual and gap residuals from `(x, y)` alone.
pub fn residuals<T: Real>(p: &ConicProgram<T>, x: &[T], y: &[T]) -> Residuals<T> {
    let mut ax = p.a.mul_vec(x);
    for (r, bi) in ax.iter_mut().zip(&p.b) {
        *r -= *bi;
    }
    let aty = p.a.tr_mul_vec(y);
    let s: Vec<T> = p.c.iter().zip(&aty).map(|(c, v)| *c - *v).collect();
    let mut p_cone = T::zero();
    let mut d_free = T::zero();
    let mut d_cone = T::zero();
    for (cone, off) in p.cones.iter().zip(p.cone_offsets()) {
        let range = off..off + cone.dim();
        p_cone += cone_violation(*cone, &x[range.clone()]);
        match cone {
            Cone::Free(_) => d_free += s[range].iter().fold(T::zero(), |a, v| a + *v * *v),
            _ => d_cone += cone_violation(*cone, &s[range]),
        }
    }
    let cx = dot(&p.c, x);
    let by = dot(&p.b, y);
    Residuals {
        primal: (norm(&ax) + p_cone) / (T::one() + norm(&p.b)),
        dual: (d_free.sqrt() + d_cone) / (T::one() + norm(&p.c)),
        gap: (cx - by).abs() / (T::one() + cx.abs() + by.abs()),
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConicProgram<f64> {
        // min x0 + x1  s.t.  x0 + x1 = 1, x ≥ 0
        let a = SparseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 1.0)]);
        ConicProgram::new(vec![1.0, 1.0], a, vec![1.0], vec![Cone::Nonneg(2)]).unwrap()
    }

    #[test]
    fn validation_catches_shape_errors() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]);
        let p = ConicProgram::new(vec![0.0, 0.0], a, vec![1.0, 0.0], vec![Cone::Free(2)]);
        assert_eq!(p, Err(ProgramError::EmptyRow(1)));
        let a = SparseMatrix::from_triplets(1, 3, vec![(0, 0, 1.0)]);
        let p = ConicProgram::new(vec![0.0; 3], a, vec![1.0], vec![Cone::Psd(2)]);
        assert!(p.is_ok());
        let a = SparseMatrix::from_triplets(1, 3, vec![(0, 0, 1.0)]);
        let p = ConicProgram::new(vec![0.0; 3], a, vec![1.0], vec![Cone::Psd(3)]);
        assert!(matches!(p, Err(ProgramError::ColumnCount { .. })));
    }

    #[test]
    fn feasible_point_has_tiny_residual() {
        let p = tiny();
        let r = residuals(&p, &[0.25, 0.75], &[1.0]);
        assert!(r.primal <= 1e-12 && r.dual <= 1e-12 && r.gap <= 1e-12);
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let p = tiny();
        let base = residuals(&p, &[0.25, 0.75], &[1.0]);
        let moved = residuals(&p, &[0.25 + 1e-3, 0.75], &[1.0]);
        assert!(moved.primal - base.primal >= 1e-4);
        let outside = residuals(&p, &[-1e-3, 1.0 + 1e-3], &[1.0]);
        assert!(outside.primal >= 1e-4);
    }

    #[test]
    fn gap_matches_objectives() {
        let p = tiny();
        let r = residuals(&p, &[0.25, 0.75], &[0.5]);
        let expected = (1.0f64 - 0.5).abs() / (1.0 + 1.0 + 0.5);
        assert!((r.gap - expected).abs() <= 1e-12);
    }

    #[test]
    fn dump_format() {
        let mut buf = Vec::new();
        tiny().write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2 1");
        assert_eq!(lines[1], "nonneg 2");
        assert!(lines.contains(&"0 1 1.0"));
    }
}
