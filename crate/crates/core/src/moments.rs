//! Lebesgue moments of simple state-constraint geometries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::poly::{affine, Exponent, MonomialBasis, Polynomial, PowerCache};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box axis {axis}: lower bound must be below upper bound")]
    EmptyInterval { axis: usize },
    #[error("ball radius must be positive")]
    NonPositiveRadius,
    #[error("ellipsoid shape matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("geometry data has inconsistent dimensions")]
    DimensionMismatch,
    #[error("geometry needs at least one variable")]
    NoVariables,
}

/// Full-dimensional sets whose Lebesgue moments are known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainGeometry<T: Real> {
    /// Axis-aligned box `Π [lower_i, upper_i]`.
    Box { lower: Vec<T>, upper: Vec<T> },
    /// Euclidean ball `‖x − center‖ ≤ radius`.
    Ball { center: Vec<T>, radius: T },
    /// Ellipsoid `(x − center)ᵀ shape (x − center) ≤ 1`.
    Ellipsoid { center: Vec<T>, shape: DMatrix<T> },
}

impl<T: Real> DomainGeometry<T> {
    pub fn new_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self, GeometryError> {
        if lower.is_empty() {
            return Err(GeometryError::NoVariables);
        }
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch);
        }
        for (axis, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(*a < *b) {
                return Err(GeometryError::EmptyInterval { axis });
            }
        }
        Ok(DomainGeometry::Box { lower, upper })
    }

    pub fn new_ball(center: Vec<T>, radius: T) -> Result<Self, GeometryError> {
        if center.is_empty() {
            return Err(GeometryError::NoVariables);
        }
        if !(radius > T::zero()) {
            return Err(GeometryError::NonPositiveRadius);
        }
        Ok(DomainGeometry::Ball { center, radius })
    }

    pub fn new_ellipsoid(center: Vec<T>, shape: DMatrix<T>) -> Result<Self, GeometryError> {
        let n = center.len();
        if n == 0 {
            return Err(GeometryError::NoVariables);
        }
        if shape.nrows() != n || shape.ncols() != n {
            return Err(GeometryError::DimensionMismatch);
        }
        let scale = shape.amax().max(T::one());
        if (&shape - shape.transpose()).amax() > T::lit(1e-12) * scale {
            return Err(GeometryError::NotPositiveDefinite);
        }
        let eig = shape.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > T::lit(1e-10))) {
            return Err(GeometryError::NotPositiveDefinite);
        }
        Ok(DomainGeometry::Ellipsoid { center, shape })
    }

    pub fn unit_ball(n: usize) -> Self {
        DomainGeometry::Ball {
            center: vec![T::zero(); n],
            radius: T::one(),
        }
    }

    pub fn n_vars(&self) -> usize {
        match self {
            DomainGeometry::Box { lower, .. } => lower.len(),
            DomainGeometry::Ball { center, .. } | DomainGeometry::Ellipsoid { center, .. } => {
                center.len()
            }
        }
    }

    pub fn volume(&self) -> T {
        geometry_moment(self, &Exponent::zero(self.n_vars()))
    }

    /// Smallest axis-aligned box containing the set.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match self {
            DomainGeometry::Box { lower, upper } => (lower.clone(), upper.clone()),
            DomainGeometry::Ball { center, radius } => (
                center.iter().map(|&c| c - *radius).collect(),
                center.iter().map(|&c| c + *radius).collect(),
            ),
            DomainGeometry::Ellipsoid { center, shape } => {
                let inv = shape
                    .clone()
                    .try_inverse()
                    .expect("validated ellipsoid is invertible");
                let half: Vec<T> = (0..center.len()).map(|i| inv[(i, i)].sqrt()).collect();
                (
                    center.iter().zip(&half).map(|(&c, &h)| c - h).collect(),
                    center.iter().zip(&half).map(|(&c, &h)| c + h).collect(),
                )
            }
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            DomainGeometry::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&a, &b))| a <= v && v <= b),
            DomainGeometry::Ball { center, radius } => {
                let d2 = x
                    .iter()
                    .zip(center)
                    .fold(T::zero(), |acc, (&v, &c)| acc + (v - c) * (v - c));
                d2 <= *radius * *radius
            }
            DomainGeometry::Ellipsoid { center, shape } => {
                let d = DVector::from_iterator(
                    center.len(),
                    x.iter().zip(center).map(|(&v, &c)| v - c),
                );
                (d.transpose() * shape * &d)[(0, 0)] <= T::one()
            }
        }
    }

    /// Inequalities `g_j ≥ 0` describing the set. Boxes use one linear
    /// inequality per facet.
    pub fn constraints(&self) -> Vec<Polynomial<T>> {
        let n = self.n_vars();
        match self {
            DomainGeometry::Box { lower, upper } => {
                let mut out = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let x = Polynomial::variable(n, i);
                    out.push(&x - &Polynomial::constant(n, lower[i]));
                    out.push(&Polynomial::constant(n, upper[i]) - &x);
                }
                out
            }
            DomainGeometry::Ball { center, radius } => {
                let mut g = Polynomial::constant(n, *radius * *radius);
                for (i, &c) in center.iter().enumerate() {
                    let d = &Polynomial::variable(n, i) - &Polynomial::constant(n, c);
                    g = &g - &(&d * &d);
                }
                vec![g]
            }
            DomainGeometry::Ellipsoid { center, shape } => {
                let d: Vec<Polynomial<T>> = (0..n)
                    .map(|i| &Polynomial::variable(n, i) - &Polynomial::constant(n, center[i]))
                    .collect();
                let mut g = Polynomial::one(n);
                for i in 0..n {
                    for j in 0..n {
                        g = &g - &(&d[i] * &d[j]).scale(shape[(i, j)]);
                    }
                }
                vec![g]
            }
        }
    }

    /// Affine map `x = c + L u` sending a normalised set onto this one:
    /// the unit ball for balls and ellipsoids, the cube `[−1/√n, 1/√n]^n`
    /// for boxes.
    pub fn normalizing_map(&self) -> (Vec<T>, DMatrix<T>) {
        let n = self.n_vars();
        match self {
            DomainGeometry::Box { lower, upper } => {
                let two = T::lit(2.0);
                let root_n = T::from_usize_lossy(n).sqrt();
                let c = lower
                    .iter()
                    .zip(upper)
                    .map(|(&a, &b)| (a + b) / two)
                    .collect();
                let diag = DVector::from_iterator(
                    n,
                    lower
                        .iter()
                        .zip(upper)
                        .map(|(&a, &b)| (b - a) / two * root_n),
                );
                (c, DMatrix::from_diagonal(&diag))
            }
            DomainGeometry::Ball { center, radius } => {
                (center.clone(), DMatrix::identity(n, n) * *radius)
            }
            DomainGeometry::Ellipsoid { center, shape } => {
                let inv = shape
                    .clone()
                    .try_inverse()
                    .expect("validated ellipsoid is invertible");
                let inv = (&inv + inv.transpose()) * T::lit(0.5);
                let l = inv.cholesky().expect("inverse of SPD is SPD").l();
                (center.clone(), l)
            }
        }
    }

    /// The image of this set under `u = L⁻¹(x − c)` when `(c, L)` is its own
    /// [`normalizing_map`](Self::normalizing_map).
    pub fn normalized(&self) -> Self {
        let n = self.n_vars();
        match self {
            DomainGeometry::Box { .. } => {
                let h = T::one() / T::from_usize_lossy(n).sqrt();
                DomainGeometry::Box {
                    lower: vec![-h; n],
                    upper: vec![h; n],
                }
            }
            _ => DomainGeometry::unit_ball(n),
        }
    }
}

/// Truncated moment sequence `(y_β)_{|β| ≤ D}` aligned with a graded basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence<T> {
    basis: MonomialBasis,
    values: Vec<T>,
}

impl<T: Real> MomentSequence<T> {
    pub fn new(basis: MonomialBasis, values: Vec<T>) -> Self {
        assert_eq!(basis.len(), values.len(), "one value per basis monomial");
        MomentSequence { basis, values }
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_degree(&self) -> u32 {
        self.basis.max_degree()
    }

    pub fn get(&self, beta: &Exponent) -> Option<T> {
        self.basis.index_of(beta).map(|i| self.values[i])
    }

    /// `ℓ_y(p)` for a polynomial supported in the sequence's range.
    pub fn apply(&self, p: &Polynomial<T>) -> Option<T> {
        let mut acc = T::zero();
        for (e, c) in p.terms() {
            acc += *c * self.get(e)?;
        }
        Some(acc)
    }

    /// Localizing matrix `M_k(g y)` with entries `ℓ_y(g x^{β+γ})`.
    pub fn localizing_matrix(&self, g: &Polynomial<T>, k: u32) -> Option<DMatrix<T>> {
        let b = MonomialBasis::new(self.basis.n_vars(), k);
        let mut m = DMatrix::zeros(b.len(), b.len());
        for i in 0..b.len() {
            for j in i..b.len() {
                let mono = b.get(i).add(b.get(j));
                let mut acc = T::zero();
                for (e, c) in g.terms() {
                    acc += *c * self.get(&e.add(&mono))?;
                }
                m[(i, j)] = acc;
                m[(j, i)] = acc;
            }
        }
        Some(m)
    }

    pub fn moment_matrix(&self, k: u32) -> Option<DMatrix<T>> {
        self.localizing_matrix(&Polynomial::one(self.basis.n_vars()), k)
    }
}

/// `∫_{‖u‖≤1} u^α du`.
pub fn unit_ball_moment<T: Real>(alpha: &Exponent) -> T {
    if alpha.has_odd_entry() {
        return T::zero();
    }
    let n = alpha.n_vars() as f64;
    let num: f64 = alpha
        .as_slice()
        .iter()
        .map(|&a| ln_gamma((a as f64 + 1.0) / 2.0))
        .sum();
    let den = ln_gamma(1.0 + (n + alpha.degree() as f64) / 2.0);
    T::lit((num - den).exp())
}

fn box_moment<T: Real>(lower: &[T], upper: &[T], beta: &Exponent) -> T {
    let mut acc = T::one();
    for ((&a, &b), &k) in lower.iter().zip(upper).zip(beta.as_slice()) {
        let k1 = k as i32 + 1;
        acc *= (b.powi(k1) - a.powi(k1)) / T::lit(k1 as f64);
    }
    acc
}

/// Component maps `u ↦ c_i + (L u)_i`.
fn affine_maps<T: Real>(c: &[T], l: &DMatrix<T>) -> Vec<Polynomial<T>> {
    (0..c.len())
        .map(|i| {
            let row: Vec<T> = (0..c.len()).map(|j| l[(i, j)]).collect();
            affine(c[i], &row)
        })
        .collect()
}

fn ball_like_moments<T: Real>(c: &[T], l: &DMatrix<T>, exps: &[Exponent]) -> Vec<T> {
    let maps = affine_maps(c, l);
    let det = l.determinant().abs();
    let mut cache = PowerCache::new(&maps);
    exps.iter()
        .map(|beta| {
            let p = cache.product(beta);
            let mut acc = T::zero();
            for (alpha, coef) in p.terms() {
                acc += *coef * unit_ball_moment::<T>(alpha);
            }
            acc * det
        })
        .collect()
}

/// `y_β = ∫_X x^β dx` for the given geometry.
pub fn geometry_moment<T: Real>(g: &DomainGeometry<T>, beta: &Exponent) -> T {
    assert_eq!(beta.n_vars(), g.n_vars(), "exponent dimension");
    match g {
        DomainGeometry::Box { lower, upper } => box_moment(lower, upper, beta),
        DomainGeometry::Ball { center, radius } if center.iter().all(|c| *c == T::zero()) => {
            unit_ball_moment::<T>(beta) * radius.powi((g.n_vars() as u32 + beta.degree()) as i32)
        }
        _ => {
            let (c, l) = g.normalizing_map();
            ball_like_moments(&c, &l, std::slice::from_ref(beta))[0]
        }
    }
}

/// All moments up to total degree `d`.
pub fn moment_vector<T: Real>(g: &DomainGeometry<T>, d: u32) -> MomentSequence<T> {
    let basis = MonomialBasis::new(g.n_vars(), d);
    let values = match g {
        DomainGeometry::Box { .. } => basis.iter().map(|b| geometry_moment(g, b)).collect(),
        DomainGeometry::Ball { center, .. } if center.iter().all(|c| *c == T::zero()) => {
            basis.iter().map(|b| geometry_moment(g, b)).collect()
        }
        _ => {
            let (c, l) = g.normalizing_map();
            ball_like_moments(&c, &l, basis.monomials())
        }
    };
    MomentSequence::new(basis, values)
}

/// Monte Carlo estimate of `y_β` with its standard error.
pub fn mc_moment<T: Real>(
    g: &DomainGeometry<T>,
    beta: &Exponent,
    n_samples: usize,
    seed: u64,
) -> (T, T) {
    let basis = MonomialBasis::new(g.n_vars(), beta.degree());
    let all = mc_moments(g, beta.degree(), n_samples, seed);
    all[basis.index_of(beta).expect("β lies in its own basis")]
}

/// Monte Carlo estimates of every moment up to degree `d` from one sample
/// stream: uniform draws over the bounding box, rejected outside the set.
pub fn mc_moments<T: Real>(
    g: &DomainGeometry<T>,
    d: u32,
    n_samples: usize,
    seed: u64,
) -> Vec<(T, T)> {
    let n = g.n_vars();
    let basis = MonomialBasis::new(n, d);
    // Each monomial is its parent times one coordinate.
    let parents: Vec<(usize, usize)> = basis
        .iter()
        .skip(1)
        .map(|b| {
            let i = b.as_slice().iter().position(|&k| k > 0).unwrap();
            let mut p = b.as_slice().to_vec();
            p[i] -= 1;
            (basis.index_of(&Exponent::new(p)).unwrap(), i)
        })
        .collect();
    let (lo, hi) = g.bounding_box();
    let lo: Vec<f64> = lo.iter().map(|v| v.to_f64_lossy()).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v.to_f64_lossy()).collect();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0f64; basis.len()];
    let mut sum_sq = vec![0.0f64; basis.len()];
    let mut mono = vec![0.0f64; basis.len()];
    let mut x = vec![T::zero(); n];
    for _ in 0..n_samples {
        for i in 0..n {
            x[i] = T::lit(rng.random_range(lo[i]..hi[i]));
        }
        if !g.contains(&x) {
            continue;
        }
        mono[0] = 1.0;
        for (k, &(p, i)) in parents.iter().enumerate() {
            mono[k + 1] = mono[p] * x[i].to_f64_lossy();
        }
        for k in 0..basis.len() {
            sum[k] += mono[k];
            sum_sq[k] += mono[k] * mono[k];
        }
    }
    let ns = n_samples as f64;
    sum.iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| {
            let mean = s / ns;
            let var = ((q - ns * mean * mean) / (ns - 1.0)).max(0.0);
            (T::lit(box_vol * mean), T::lit(box_vol * (var / ns).sqrt()))
        })
        .collect()
}
