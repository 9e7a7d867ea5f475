//! Linear dynamics `x⁺ = A x` with origin-centred ellipsoidal initial and
//! state sets, solved as a direct SDP over a quadratic form.

use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::moments::{geometry_moment, DomainGeometry, GeometryError};
use crate::poly::{Exponent, Polynomial};
use crate::relax::{Certificate, SolveStats};
use crate::scalar::Real;
use crate::sdp::{
    mat_to_svec, svec_len, svec_to_mat, Cone, ConicProgram, ConicSolver, ProgramError, SolveError,
    SolverOptions, SparseMatrix, Status,
};
use crate::semialg::{DynamicalSystem, Horizon, ModelError, ReachProblem, SemialgebraicSet};

/// Lower bound replacing the strict `V ≻ 0`.
pub const STRICTNESS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearError {
    #[error("{0} must be a square {1}×{1} matrix")]
    Shape(&'static str, usize),
    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("initial ellipsoid is not inside the state ellipsoid (min eig of V0 − G is {0:.3e})")]
    NotNested(f64),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solver stopped with status {0}")]
    NotConverged(Status),
}

/// `x⁺ = A x`, `X⁰ = {xᵀ V0 x ≤ 1}`, `X = {xᵀ G x ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReachProblem<T: Real> {
    a: DMatrix<T>,
    v0: DMatrix<T>,
    g: DMatrix<T>,
}

fn check_spd<T: Real>(name: &'static str, m: &DMatrix<T>, n: usize) -> Result<(), LinearError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(LinearError::Shape(name, n));
    }
    let scale = m.amax().max(T::one());
    if (m - m.transpose()).amax() > T::lit(1e-12) * scale {
        return Err(LinearError::NotPositiveDefinite(name));
    }
    if m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .any(|&l| !(l > T::zero()))
    {
        return Err(LinearError::NotPositiveDefinite(name));
    }
    Ok(())
}

impl<T: Real> LinearReachProblem<T> {
    pub fn new(a: DMatrix<T>, v0: DMatrix<T>, g: DMatrix<T>) -> Result<Self, LinearError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(LinearError::Shape("A", n));
        }
        check_spd("V0", &v0, n)?;
        check_spd("G", &g, n)?;
        let gap = (&v0 - &g).symmetric_eigen().eigenvalues.min();
        if gap < T::lit(-1e-9) {
            return Err(LinearError::NotNested(gap.to_f64_lossy()));
        }
        Ok(LinearReachProblem { a, v0, g })
    }

    pub fn n_vars(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn v0(&self) -> &DMatrix<T> {
        &self.v0
    }

    pub fn g(&self) -> &DMatrix<T> {
        &self.g
    }

    pub fn geometry(&self) -> Result<DomainGeometry<T>, LinearError> {
        Ok(DomainGeometry::new_ellipsoid(
            vec![T::zero(); self.n_vars()],
            self.g.clone(),
        )?)
    }

    /// The same data as a generic problem with `u = 0`.
    pub fn to_reach_problem(&self, variables: Vec<String>) -> Result<ReachProblem<T>, LinearError> {
        let n = self.n_vars();
        let quad = |m: &DMatrix<T>| -> Polynomial<T> {
            let mut p = Polynomial::one(n);
            for i in 0..n {
                for j in 0..n {
                    p.add_term(Exponent::unit(n, i).add(&Exponent::unit(n, j)), -m[(i, j)]);
                }
            }
            p
        };
        let f = (0..n)
            .map(|i| {
                let row: Vec<T> = (0..n).map(|j| self.a[(i, j)]).collect();
                crate::poly::affine(T::zero(), &row)
            })
            .collect();
        Ok(ReachProblem::new(
            "linear",
            variables,
            SemialgebraicSet::new(n, vec![quad(&self.v0)])?,
            SemialgebraicSet::new(n, vec![quad(&self.g)])?,
            DynamicalSystem::new(f)?,
            Horizon::UZero,
            self.geometry()?,
            false,
        )?)
    }
}

/// `M_ij = ∫_X x_i x_j dx`.
pub fn second_moment_matrix<T: Real>(g: &DomainGeometry<T>) -> DMatrix<T> {
    let n = g.n_vars();
    DMatrix::from_fn(n, n, |i, j| {
        geometry_moment(g, &Exponent::unit(n, i).add(&Exponent::unit(n, j)))
    })
}

/// Column layout of the linear program: `svec(V)` then the three slack
/// blocks `V0 − V`, `V − AᵀVA`, `V − εI`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayout {
    pub n: usize,
    pub v: Range<usize>,
    pub blocks: [Range<usize>; 3],
}

/// `max trace(M V)  s.t.  V0 ⪰ V ⪰ AᵀVA,  V ⪰ εI`, as a minimization.
pub fn assemble_linear<T: Real>(
    p: &LinearReachProblem<T>,
    m: &DMatrix<T>,
) -> Result<(ConicProgram<T>, LinearLayout), LinearError> {
    let n = p.n_vars();
    let d = svec_len(n);
    let v = 0..d;
    let blocks = [d..2 * d, 2 * d..3 * d, 3 * d..4 * d];
    // svec(AᵀEA) for each svec unit vector E
    let congruence: Vec<Vec<T>> = (0..d)
        .map(|t| {
            let mut e = vec![T::zero(); d];
            e[t] = T::one();
            let em = svec_to_mat(&e, n);
            mat_to_svec(&(p.a.transpose() * em * &p.a))
        })
        .collect();
    let mut trip = Vec::new();
    let mut b = Vec::with_capacity(3 * d);
    let v0 = mat_to_svec(&p.v0);
    let eps_i = mat_to_svec(&(DMatrix::<T>::identity(n, n) * T::lit(STRICTNESS_EPS)));
    for t in 0..d {
        // S1 + V = V0
        trip.push((t, blocks[0].start + t, T::one()));
        trip.push((t, v.start + t, T::one()));
        b.push(v0[t]);
    }
    for t in 0..d {
        // S2 − V + AᵀVA = 0
        let row = d + t;
        trip.push((row, blocks[1].start + t, T::one()));
        trip.push((row, v.start + t, -T::one()));
        for (s, col) in congruence.iter().enumerate() {
            if col[t] != T::zero() {
                trip.push((row, v.start + s, col[t]));
            }
        }
        b.push(T::zero());
    }
    for t in 0..d {
        // S3 − V = −εI
        let row = 2 * d + t;
        trip.push((row, blocks[2].start + t, T::one()));
        trip.push((row, v.start + t, -T::one()));
        b.push(-eps_i[t]);
    }
    let mut c = vec![T::zero(); 4 * d];
    for (ci, mi) in c.iter_mut().zip(mat_to_svec(m)) {
        *ci = -mi;
    }
    let a = SparseMatrix::from_triplets(3 * d, 4 * d, trip);
    let cones = vec![Cone::Free(d), Cone::Psd(n), Cone::Psd(n), Cone::Psd(n)];
    Ok((
        ConicProgram::new(c, a, b, cones)?,
        LinearLayout { n, v, blocks },
    ))
}

/// Optimal quadratic form and its objective `trace(M V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution<T> {
    pub v: DMatrix<T>,
    pub objective: T,
    pub stats: SolveStats<T>,
}

pub fn solve_linear<T: Real, S: ConicSolver<T>>(
    p: &LinearReachProblem<T>,
    solver: &S,
    opts: &SolverOptions,
) -> Result<LinearSolution<T>, LinearError> {
    let m = second_moment_matrix(&p.geometry()?);
    let (program, layout) = assemble_linear(p, &m)?;
    let sol = solver.solve(&program, opts)?;
    if !sol.status.is_converged() {
        return Err(LinearError::NotConverged(sol.status));
    }
    let v = svec_to_mat(&sol.x[layout.v], layout.n);
    Ok(LinearSolution {
        objective: (&m * &v).trace(),
        v,
        stats: SolveStats {
            status: sol.status,
            iterations: sol.iterations,
            residuals: sol.residuals,
        },
    })
}

/// `u = 0`, `v = 1 − xᵀVx`, `w = 1 + v`.
pub fn quadratic_certificate<T: Real>(
    v: &DMatrix<T>,
    variables: Vec<String>,
    objective: T,
) -> Certificate<T> {
    let n = v.nrows();
    let mut vp = Polynomial::one(n);
    for i in 0..n {
        for j in 0..n {
            vp.add_term(Exponent::unit(n, i).add(&Exponent::unit(n, j)), -v[(i, j)]);
        }
    }
    let w = &vp + &Polynomial::one(n);
    Certificate {
        variables,
        order: 1,
        horizon: Horizon::UZero,
        u: T::zero(),
        v: vp,
        w,
        objective,
        memberships: Vec::new(),
        stats: None,
    }
}

/// The quadratic part of `p` as a symmetric matrix (`p = … + xᵀQx`).
pub fn quadratic_form<T: Real>(p: &Polynomial<T>) -> DMatrix<T> {
    let n = p.n_vars();
    DMatrix::from_fn(n, n, |i, j| {
        let c = p.coefficient(&Exponent::unit(n, i).add(&Exponent::unit(n, j)));
        if i == j {
            c
        } else {
            c / T::lit(2.0)
        }
    })
}
