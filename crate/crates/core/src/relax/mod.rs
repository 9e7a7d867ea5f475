//! Order-`r` moment relaxation and its dual SOS strengthening.
//!
//! Both programs are assembled in a scaled frame where the state geometry
//! fits the unit ball; certificates are mapped back to the original
//! coordinates on extraction.

mod blocks;
mod frame;

use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::moments::moment_vector;
use crate::poly::{MonomialBasis, PolyError, Polynomial, PowerCache, DEFAULT_CLEAN_EPS};
use crate::scalar::Real;
use crate::sdp::{
    svec_len, svec_to_mat, Cone, ConicProgram, ConicSolver, ProgramError, Residuals, Solution,
    SolveError, SolverOptions, SparseMatrix, Status,
};
use crate::semialg::{validate_archimedean, Horizon, ModelError, ReachProblem, SemialgebraicSet};

pub use blocks::{gram_polynomial, moment_matrix_spec, pushforward_row, LocalizingSpec};
pub use frame::ScalingFrame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelaxError {
    #[error("relaxation order r = {r} is below the minimum r = {r_min}")]
    OrderTooLow { r: u32, r_min: u32 },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(
        "solver stopped with status {status} (primal {primal:.2e}, dual {dual:.2e}, gap {gap:.2e})"
    )]
    NotConverged {
        status: Status,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("solution has {got} entries, layout expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
}

/// The four measures of the moment program, and the matching quadratic
/// module memberships of the SOS program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// `μ₀` on `X⁰`; dual `v ∈ Q_r⁰`.
    Initial,
    /// `μ` on `X`; dual `w − 1 − v ∈ Q_r`.
    Target,
    /// `μ̂` on `X`; dual `w ∈ Q_r`.
    Slack,
    /// `ν` on `X`; dual `u + v∘f − v ∈ Q_{rd}`.
    Occupation,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Initial,
        Component::Target,
        Component::Slack,
        Component::Occupation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Initial => "initial",
            Component::Target => "target",
            Component::Slack => "slack",
            Component::Occupation => "occupation",
        }
    }
}

/// A PSD block: the localizing matrix of `multiplier` (0 is the constant
/// `1`, `j + 1` the `j`-th inequality) for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub component: Component,
    pub multiplier: usize,
    pub order: u32,
    pub offset: usize,
    pub size: usize,
}

/// Column layout of the moment program.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub y0: Range<usize>,
    pub y: Range<usize>,
    pub y_hat: Range<usize>,
    pub z: Range<usize>,
    pub a: Option<usize>,
    pub psd: Vec<PsdBlock>,
    pub n_cols: usize,
}

/// Column layout of the SOS program.
#[derive(Debug, Clone)]
pub struct DualLayout<T: Real> {
    pub relaxation: Relaxation<T>,
    pub u: Option<usize>,
    pub v: Range<usize>,
    pub w: Range<usize>,
    pub grams: Vec<PsdBlock>,
    pub n_cols: usize,
}

/// Problem data in the scaled frame at a fixed order.
#[derive(Debug, Clone)]
pub struct Relaxation<T: Real> {
    r: u32,
    d: u32,
    horizon: Horizon,
    frame: ScalingFrame<T>,
    variables: Vec<String>,
    init: SemialgebraicSet<T>,
    state: SemialgebraicSet<T>,
    system: Vec<Polynomial<T>>,
    basis: MonomialBasis,
    z_basis: MonomialBasis,
    lebesgue: Vec<T>,
}

fn normalize<T: Real>(p: &Polynomial<T>) -> Polynomial<T> {
    let m = p.max_abs_coefficient();
    if m > T::zero() {
        p.scale(T::one() / m).clean(T::lit(1e-14))
    } else {
        p.clone()
    }
}

impl<T: Real> Relaxation<T> {
    pub fn new(problem: &ReachProblem<T>, r: u32) -> Result<Self, RelaxError> {
        let r_min = problem.r_min().max(1);
        if r < r_min {
            return Err(RelaxError::OrderTooLow { r, r_min });
        }
        let n = problem.n_vars();
        let frame = ScalingFrame::new(&problem.geometry);
        let init = problem
            .init
            .map_inequalities(n, |g| normalize(&frame.pull(g)));
        let state = problem
            .state
            .without_augmentation()
            .map_inequalities(n, |g| normalize(&frame.pull(g)));
        let (state, _) = validate_archimedean(&state, Some(T::one()))?;
        let system: Vec<Polynomial<T>> = frame
            .conjugate(problem.system.components())
            .into_iter()
            .map(|p| p.clean(T::lit(1e-14)))
            .collect();
        let d = problem.system.degree();
        let basis = MonomialBasis::new(n, 2 * r);
        let z_basis = MonomialBasis::new(n, 2 * r * d);
        let lebesgue = moment_vector(&problem.geometry.normalized(), 2 * r)
            .values()
            .to_vec();
        Ok(Relaxation {
            r,
            d,
            horizon: problem.horizon,
            frame,
            variables: problem.variables.clone(),
            init,
            state,
            system,
            basis,
            z_basis,
            lebesgue,
        })
    }

    pub fn order(&self) -> u32 {
        self.r
    }

    pub fn frame(&self) -> &ScalingFrame<T> {
        &self.frame
    }

    /// Scaled transition map.
    pub fn system(&self) -> &[Polynomial<T>] {
        &self.system
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn z_basis(&self) -> &MonomialBasis {
        &self.z_basis
    }

    /// Lebesgue moments of the scaled state geometry on `N_{2r}`.
    pub fn lebesgue_moments(&self) -> &[T] {
        &self.lebesgue
    }

    fn set_of(&self, c: Component) -> &SemialgebraicSet<T> {
        match c {
            Component::Initial => &self.init,
            _ => &self.state,
        }
    }

    fn top_order(&self, c: Component) -> u32 {
        match c {
            Component::Occupation => self.r * self.d,
            _ => self.r,
        }
    }

    fn moment_basis(&self, c: Component) -> &MonomialBasis {
        match c {
            Component::Occupation => &self.z_basis,
            _ => &self.basis,
        }
    }

    /// `(multiplier polynomial, Gram order)` pairs for one component.
    pub fn multipliers(&self, c: Component) -> Vec<(Polynomial<T>, u32)> {
        let n = self.basis.n_vars();
        let k = self.top_order(c);
        let set = self.set_of(c);
        std::iter::once((Polynomial::one(n), k))
            .chain(
                set.inequalities()
                    .iter()
                    .zip(set.half_degrees())
                    .map(|(g, rj)| (g.clone(), k - rj)),
            )
            .collect()
    }

    fn specs(&self, c: Component) -> Result<Vec<LocalizingSpec<T>>, RelaxError> {
        self.multipliers(c)
            .iter()
            .map(|(g, k)| Ok(moment_matrix_spec(*k, g, self.moment_basis(c))?))
            .collect()
    }

    fn pushforward_rows(&self) -> Result<Vec<Vec<(usize, T)>>, RelaxError> {
        let mut cache = PowerCache::new(&self.system);
        self.basis
            .iter()
            .map(|beta| Ok(pushforward_row(&mut cache, beta, &self.z_basis)?))
            .collect()
    }

    /// Row scale of the mass constraint, `max(T, 1)`.
    fn horizon_factor(&self) -> T {
        T::from_usize_lossy(self.horizon.multiplier().max(1) as usize)
    }

    fn horizon_steps(&self) -> T {
        T::from_usize_lossy(self.horizon.multiplier() as usize)
    }

    /// Moment program: `max y_0` over `(y0, y, ŷ, z, a)`.
    pub fn primal(&self) -> Result<(ConicProgram<T>, VariableLayout), RelaxError> {
        let nb = self.basis.len();
        let nz = self.z_basis.len();
        let y0 = 0..nb;
        let y = nb..2 * nb;
        let y_hat = 2 * nb..3 * nb;
        let z = 3 * nb..3 * nb + nz;
        let mut cols = z.end;
        let mut cones = vec![Cone::Free(cols)];
        let a = (!self.horizon.is_u_zero()).then(|| {
            cones.push(Cone::Nonneg(1));
            cols += 1;
            cols - 1
        });
        let measure = |c: Component| match c {
            Component::Initial => y0.start,
            Component::Target => y.start,
            Component::Slack => y_hat.start,
            Component::Occupation => z.start,
        };
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let mut psd = Vec::new();
        for comp in Component::ALL {
            for (mi, spec) in self.specs(comp)?.into_iter().enumerate() {
                let base = measure(comp);
                for ((t, entry), f) in spec.entries.iter().enumerate().zip(spec.packing_factors()) {
                    let row = b.len();
                    trip.push((row, cols + t, T::one()));
                    for &(idx, coef) in entry {
                        trip.push((row, base + idx, -f * coef));
                    }
                    b.push(T::zero());
                }
                psd.push(PsdBlock {
                    component: comp,
                    multiplier: mi,
                    order: spec.order,
                    offset: cols,
                    size: spec.size,
                });
                cones.push(Cone::Psd(spec.size));
                cols += svec_len(spec.size);
            }
        }
        // mass row divided by T: z_0 / T + a' = y^X_0 with a' = a / T
        if let Some(ai) = a {
            let row = b.len();
            trip.push((row, z.start, T::one() / self.horizon_factor()));
            trip.push((row, ai, T::one()));
            b.push(self.horizon_steps() / self.horizon_factor() * self.lebesgue[0]);
        }
        for (i, row_f) in self.pushforward_rows()?.into_iter().enumerate() {
            let row = b.len();
            trip.push((row, y.start + i, T::one()));
            // graded order makes N_{2r} a prefix of N_{2rd}
            trip.push((row, z.start + i, T::one()));
            for (idx, coef) in row_f {
                trip.push((row, z.start + idx, -coef));
            }
            trip.push((row, y0.start + i, -T::one()));
            b.push(T::zero());
        }
        for i in 0..nb {
            let row = b.len();
            trip.push((row, y.start + i, T::one()));
            trip.push((row, y_hat.start + i, T::one()));
            b.push(self.lebesgue[i]);
        }
        let mut c = vec![T::zero(); cols];
        c[y.start] = -T::one();
        let a_mat = SparseMatrix::from_triplets(b.len(), cols, trip);
        let program = ConicProgram::new(c, a_mat, b, cones)?;
        Ok((
            program,
            VariableLayout {
                y0,
                y,
                y_hat,
                z,
                a,
                psd,
                n_cols: cols,
            },
        ))
    }

    /// SOS program: `min Σ w_β y^X_β + u T y^X_0`.
    pub fn dual(&self) -> Result<(ConicProgram<T>, DualLayout<T>), RelaxError> {
        let nb = self.basis.len();
        let nz = self.z_basis.len();
        let v = 0..nb;
        let w = nb..2 * nb;
        let mut cols = 2 * nb;
        let mut cones = vec![Cone::Free(cols)];
        let u = (!self.horizon.is_u_zero()).then(|| {
            cones.push(Cone::Nonneg(1));
            cols += 1;
            cols - 1
        });
        let row_base = |c: Component| match c {
            Component::Initial => 0,
            Component::Target => nb,
            Component::Slack => 2 * nb,
            Component::Occupation => 3 * nb,
        };
        let n_rows = 3 * nb + nz;
        let mut trip = Vec::new();
        let mut grams = Vec::new();
        for comp in Component::ALL {
            let base = row_base(comp);
            for (mi, spec) in self.specs(comp)?.into_iter().enumerate() {
                for ((t, entry), f) in spec.entries.iter().enumerate().zip(spec.packing_factors()) {
                    for &(idx, coef) in entry {
                        trip.push((base + idx, cols + t, -f * coef));
                    }
                }
                grams.push(PsdBlock {
                    component: comp,
                    multiplier: mi,
                    order: spec.order,
                    offset: cols,
                    size: spec.size,
                });
                cones.push(Cone::Psd(spec.size));
                cols += svec_len(spec.size);
            }
        }
        let mut b = vec![T::zero(); n_rows];
        for i in 0..nb {
            trip.push((row_base(Component::Initial) + i, v.start + i, T::one()));
            trip.push((row_base(Component::Target) + i, w.start + i, T::one()));
            trip.push((row_base(Component::Target) + i, v.start + i, -T::one()));
            trip.push((row_base(Component::Slack) + i, w.start + i, T::one()));
            trip.push((row_base(Component::Occupation) + i, v.start + i, -T::one()));
        }
        b[row_base(Component::Target)] = T::one();
        for (beta, row_f) in self.pushforward_rows()?.into_iter().enumerate() {
            for (idx, coef) in row_f {
                trip.push((row_base(Component::Occupation) + idx, v.start + beta, coef));
            }
        }
        let mut c = vec![T::zero(); cols];
        c[w.clone()].copy_from_slice(&self.lebesgue);
        if let Some(ui) = u {
            // column holds u' = T u
            trip.push((
                row_base(Component::Occupation),
                ui,
                T::one() / self.horizon_factor(),
            ));
            c[ui] = self.horizon_steps() / self.horizon_factor() * self.lebesgue[0];
        }
        let a_mat = SparseMatrix::from_triplets(n_rows, cols, trip);
        let program = ConicProgram::new(c, a_mat, b, cones)?;
        Ok((
            program,
            DualLayout {
                relaxation: self.clone(),
                u,
                v,
                w,
                grams,
                n_cols: cols,
            },
        ))
    }
}

/// One quadratic-module membership `target = Σ_j (bᵀ Q_j b) g_j` in the
/// scaled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership<T: Real> {
    pub component: Component,
    pub target: Polynomial<T>,
    /// `(g_j, Gram order, Q_j)`.
    pub multipliers: Vec<(Polynomial<T>, u32, DMatrix<T>)>,
}

impl<T: Real> Membership<T> {
    /// Largest coefficient of `target − Σ_j (bᵀ Q_j b) g_j`.
    pub fn residual(&self) -> T {
        let n = self.target.n_vars();
        let recon = self
            .multipliers
            .iter()
            .fold(Polynomial::zero(n), |acc, (g, k, q)| {
                &acc + &gram_polynomial(q, *k, g)
            });
        (&self.target - &recon).max_abs_coefficient()
    }

    /// Smallest eigenvalue over all Gram matrices.
    pub fn min_gram_eigenvalue(&self) -> T {
        self.multipliers
            .iter()
            .fold(T::max_value().unwrap_or_else(T::one), |m, (_, _, q)| {
                m.min(q.symmetric_eigenvalues().min())
            })
    }
}

/// Solver statistics carried by a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats<T> {
    pub status: Status,
    pub iterations: usize,
    pub residuals: Residuals<T>,
}

/// Optimal dual triple `(u, v, w)` in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T: Real> {
    pub variables: Vec<String>,
    pub order: u32,
    pub horizon: Horizon,
    pub u: T,
    pub v: Polynomial<T>,
    pub w: Polynomial<T>,
    /// `d_r` in the original coordinates.
    pub objective: T,
    /// Gram certificates in the scaled frame; empty for loaded files.
    pub memberships: Vec<Membership<T>>,
    pub stats: Option<SolveStats<T>>,
}

impl<T: Real> Certificate<T> {
    pub fn n_vars(&self) -> usize {
        self.v.n_vars()
    }

    /// `v(x) + u T`, nonnegative on the points reachable within `T` steps.
    pub fn margin(&self, x: &[T], t: u32) -> T {
        self.v.eval_unchecked(x) + self.u * T::from_usize_lossy(t as usize)
    }

    pub fn reconstruction_residual(&self) -> T {
        self.memberships
            .iter()
            .fold(T::zero(), |m, mb| m.max(mb.residual()))
    }
}

fn check_status<T: Real>(sol: &Solution<T>) -> Result<(), RelaxError> {
    if sol.status.is_converged() {
        Ok(())
    } else {
        Err(RelaxError::NotConverged {
            status: sol.status,
            primal: sol.residuals.primal.to_f64_lossy(),
            dual: sol.residuals.dual.to_f64_lossy(),
            gap: sol.residuals.gap.to_f64_lossy(),
        })
    }
}

pub fn assemble_primal<T: Real>(
    problem: &ReachProblem<T>,
    r: u32,
) -> Result<(ConicProgram<T>, VariableLayout), RelaxError> {
    Relaxation::new(problem, r)?.primal()
}

pub fn assemble_dual<T: Real>(
    problem: &ReachProblem<T>,
    r: u32,
) -> Result<(ConicProgram<T>, DualLayout<T>), RelaxError> {
    Relaxation::new(problem, r)?.dual()
}

/// Rebuilds `(u, v, w)` and the Gram certificates from a solved SOS program.
pub fn extract_certificate<T: Real>(
    layout: &DualLayout<T>,
    sol: &Solution<T>,
) -> Result<Certificate<T>, RelaxError> {
    check_status(sol)?;
    if sol.x.len() != layout.n_cols {
        return Err(RelaxError::LayoutMismatch {
            expected: layout.n_cols,
            got: sol.x.len(),
        });
    }
    let rel = &layout.relaxation;
    let x = &sol.x;
    let u = layout.u.map_or(T::zero(), |i| x[i] / rel.horizon_factor());
    let v = Polynomial::from_coefficients(&rel.basis, &x[layout.v.clone()])?;
    let w = Polynomial::from_coefficients(&rel.basis, &x[layout.w.clone()])?;
    let n = rel.basis.n_vars();
    let one = Polynomial::one(n);
    let liouville = &(&v.compose(&rel.system)? - &v) + &Polynomial::constant(n, u);
    let mut memberships = Vec::with_capacity(4);
    for comp in Component::ALL {
        let target = match comp {
            Component::Initial => v.clone(),
            Component::Target => &(&w - &one) - &v,
            Component::Slack => w.clone(),
            Component::Occupation => liouville.clone(),
        };
        let mults = rel.multipliers(comp);
        let multipliers = layout
            .grams
            .iter()
            .filter(|g| g.component == comp)
            .map(|g| {
                let q = svec_to_mat(&x[g.offset..g.offset + svec_len(g.size)], g.size);
                let (poly, order) = mults[g.multiplier].clone();
                (poly, order, q)
            })
            .collect();
        memberships.push(Membership {
            component: comp,
            target,
            multipliers,
        });
    }
    let eps = T::lit(DEFAULT_CLEAN_EPS);
    Ok(Certificate {
        variables: rel.variables.clone(),
        order: rel.r,
        horizon: rel.horizon,
        u,
        v: rel.frame.push(&v).clean(eps),
        w: rel.frame.push(&w).clean(eps),
        objective: sol.primal_objective * rel.frame.jacobian(),
        memberships,
        stats: Some(SolveStats {
            status: sol.status,
            iterations: sol.iterations,
            residuals: sol.residuals,
        }),
    })
}

/// Optimal value of the moment program and the target measure's moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalOutcome<T> {
    /// `p_r` in the original coordinates.
    pub objective: T,
    /// Moments of `μ` in the scaled frame.
    pub target_moments: Vec<T>,
    pub stats: SolveStats<T>,
}

pub fn solve_primal<T: Real, S: ConicSolver<T>>(
    problem: &ReachProblem<T>,
    r: u32,
    solver: &S,
    opts: &SolverOptions,
) -> Result<PrimalOutcome<T>, RelaxError> {
    let rel = Relaxation::new(problem, r)?;
    let (program, layout) = rel.primal()?;
    let sol = solver.solve(&program, opts)?;
    check_status(&sol)?;
    Ok(PrimalOutcome {
        objective: -sol.primal_objective * rel.frame.jacobian(),
        target_moments: sol.x[layout.y].to_vec(),
        stats: SolveStats {
            status: sol.status,
            iterations: sol.iterations,
            residuals: sol.residuals,
        },
    })
}

pub fn solve_dual<T: Real, S: ConicSolver<T>>(
    problem: &ReachProblem<T>,
    r: u32,
    solver: &S,
    opts: &SolverOptions,
) -> Result<Certificate<T>, RelaxError> {
    let (program, layout) = assemble_dual(problem, r)?;
    let sol = solver.solve(&program, opts)?;
    extract_certificate(&layout, &sol)
}
