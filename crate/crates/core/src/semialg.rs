//! Basic semialgebraic sets, polynomial maps and reachability problems.

use thiserror::Error;

use crate::moments::DomainGeometry;
use crate::poly::{Exponent, Polynomial};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a semialgebraic set needs at least one inequality")]
    NoInequalities,
    #[error("expected {expected} variables, found {got}")]
    VariableMismatch { expected: usize, got: usize },
    #[error("bound hint must be positive")]
    NonPositiveHint,
    #[error("no ball constraint present and no bound hint available")]
    MissingHint,
    #[error("dynamics has {got} components for {expected} variables")]
    ComponentCount { expected: usize, got: usize },
    #[error("horizon must be a positive integer")]
    ZeroHorizon,
}

/// `{x : g_j(x) ≥ 0, j = 1..m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet<T: Real> {
    n_vars: usize,
    inequalities: Vec<Polynomial<T>>,
    augmented: Vec<bool>,
}

impl<T: Real> SemialgebraicSet<T> {
    pub fn new(n_vars: usize, inequalities: Vec<Polynomial<T>>) -> Result<Self, ModelError> {
        if inequalities.is_empty() {
            return Err(ModelError::NoInequalities);
        }
        if let Some(g) = inequalities.iter().find(|g| g.n_vars() != n_vars) {
            return Err(ModelError::VariableMismatch {
                expected: n_vars,
                got: g.n_vars(),
            });
        }
        let augmented = vec![false; inequalities.len()];
        Ok(SemialgebraicSet {
            n_vars,
            inequalities,
            augmented,
        })
    }

    pub fn from_geometry(g: &DomainGeometry<T>) -> Self {
        Self::new(g.n_vars(), g.constraints()).expect("geometry yields at least one constraint")
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn inequalities(&self) -> &[Polynomial<T>] {
        &self.inequalities
    }

    pub fn len(&self) -> usize {
        self.inequalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inequalities.is_empty()
    }

    /// Whether inequality `j` was appended by the Archimedean check.
    pub fn is_augmented(&self, j: usize) -> bool {
        self.augmented[j]
    }

    /// `min_j g_j(x)`; the point is a member iff this is ≥ 0.
    pub fn min_value(&self, x: &[T]) -> T {
        self.inequalities
            .iter()
            .map(|g| g.eval_unchecked(x))
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.min_value(x) >= T::zero()
    }

    pub fn half_degrees(&self) -> Vec<u32> {
        self.inequalities
            .iter()
            .map(|g| g.degree().div_ceil(2))
            .collect()
    }

    /// The same set with Archimedean augmentation removed.
    pub fn without_augmentation(&self) -> Self {
        let keep: Vec<Polynomial<T>> = self
            .inequalities
            .iter()
            .zip(&self.augmented)
            .filter(|(_, a)| !**a)
            .map(|(g, _)| g.clone())
            .collect();
        let augmented = vec![false; keep.len()];
        SemialgebraicSet {
            n_vars: self.n_vars,
            inequalities: keep,
            augmented,
        }
    }

    /// Applies `op` to every inequality, keeping augmentation flags.
    pub fn map_inequalities<F>(&self, n_vars: usize, mut op: F) -> Self
    where
        F: FnMut(&Polynomial<T>) -> Polynomial<T>,
    {
        SemialgebraicSet {
            n_vars,
            inequalities: self.inequalities.iter().map(&mut op).collect(),
            augmented: self.augmented.clone(),
        }
    }

    fn push_augmented(&mut self, g: Polynomial<T>) {
        self.inequalities.push(g);
        self.augmented.push(true);
    }
}

/// Returns `N` when `g` is syntactically `N − ‖x‖²` with `N > 0`.
pub fn ball_radius_squared<T: Real>(g: &Polynomial<T>) -> Option<T> {
    if g.degree() != 2 {
        return None;
    }
    let n = g.n_vars();
    let tol = T::lit(1e-9);
    for (e, c) in g.terms() {
        match e.degree() {
            0 => {}
            1 => return None,
            _ => {
                let is_square = e.as_slice().contains(&2);
                let target = if is_square { -T::one() } else { T::zero() };
                if (*c - target).abs() > tol {
                    return None;
                }
            }
        }
    }
    for i in 0..n {
        let mut sq = vec![0; n];
        sq[i] = 2;
        if (g.coefficient(&Exponent::new(sq)) + T::one()).abs() > tol {
            return None;
        }
    }
    let n0 = g.constant_term();
    (n0 > T::zero()).then_some(n0)
}

/// Outcome of [`validate_archimedean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archimedean {
    Present,
    Augmented,
}

/// Ensures a ball constraint `N − ‖x‖²` is among the inequalities,
/// appending one with `N = bound_hint` when missing.
pub fn validate_archimedean<T: Real>(
    set: &SemialgebraicSet<T>,
    bound_hint: Option<T>,
) -> Result<(SemialgebraicSet<T>, Archimedean), ModelError> {
    if let Some(h) = bound_hint {
        if !(h > T::zero()) {
            return Err(ModelError::NonPositiveHint);
        }
    }
    if set
        .inequalities
        .iter()
        .any(|g| ball_radius_squared(g).is_some())
    {
        return Ok((set.clone(), Archimedean::Present));
    }
    let n_big = bound_hint.ok_or(ModelError::MissingHint)?;
    let n = set.n_vars;
    let mut ball = Polynomial::constant(n, n_big);
    for i in 0..n {
        let mut sq = vec![0; n];
        sq[i] = 2;
        ball.add_term(Exponent::new(sq), -T::one());
    }
    let mut out = set.clone();
    out.push_augmented(ball);
    Ok((out, Archimedean::Augmented))
}

/// Sum of squared max-abs bounds per axis of a box.
pub fn box_bound_hint<T: Real>(lower: &[T], upper: &[T]) -> T {
    lower.iter().zip(upper).fold(T::zero(), |acc, (&a, &b)| {
        let m = a.abs().max(b.abs());
        acc + m * m
    })
}

pub fn half_degrees<T: Real>(set: &SemialgebraicSet<T>) -> Vec<u32> {
    set.half_degrees()
}

/// Polynomial transition map `x⁺ = f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalSystem<T: Real> {
    components: Vec<Polynomial<T>>,
}

impl<T: Real> DynamicalSystem<T> {
    pub fn new(components: Vec<Polynomial<T>>) -> Result<Self, ModelError> {
        let n = components.len();
        if n == 0 {
            return Err(ModelError::ComponentCount {
                expected: 1,
                got: 0,
            });
        }
        if let Some(f) = components.iter().find(|f| f.n_vars() != n) {
            return Err(ModelError::ComponentCount {
                expected: f.n_vars(),
                got: n,
            });
        }
        Ok(DynamicalSystem { components })
    }

    pub fn n_vars(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial<T>] {
        &self.components
    }

    /// `d = max deg f_i`, at least 1.
    pub fn degree(&self) -> u32 {
        self.components
            .iter()
            .map(Polynomial::degree)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_vars(), "state dimension");
        self.components
            .iter()
            .map(|f| f.eval_unchecked(x))
            .collect()
    }
}

/// Horizon handling in the relaxation: a finite `T`, or `u` fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Steps(u32),
    UZero,
}

impl Horizon {
    pub fn steps(n: u32) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        Ok(Horizon::Steps(n))
    }

    pub fn is_u_zero(self) -> bool {
        matches!(self, Horizon::UZero)
    }

    /// The `T` multiplying `u` in certificates; 0 when `u` is fixed.
    pub fn multiplier(self) -> u32 {
        match self {
            Horizon::Steps(t) => t,
            Horizon::UZero => 0,
        }
    }
}

/// Everything needed to set up one relaxation hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachProblem<T: Real> {
    pub name: String,
    pub variables: Vec<String>,
    pub init: SemialgebraicSet<T>,
    pub state: SemialgebraicSet<T>,
    pub system: DynamicalSystem<T>,
    pub horizon: Horizon,
    pub geometry: DomainGeometry<T>,
    /// User assertion that the reachable set and its closure have equal volume.
    pub volume_closure_asserted: bool,
    pub archimedean: Archimedean,
    /// Optional simple set enclosing `X⁰`, used as the sampling box.
    pub init_geometry: Option<DomainGeometry<T>>,
}

impl<T: Real> ReachProblem<T> {
    /// Checks dimensions and runs the Archimedean check on the state set,
    /// using the geometry's bounding box for the hint.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        variables: Vec<String>,
        init: SemialgebraicSet<T>,
        state: SemialgebraicSet<T>,
        system: DynamicalSystem<T>,
        horizon: Horizon,
        geometry: DomainGeometry<T>,
        volume_closure_asserted: bool,
    ) -> Result<Self, ModelError> {
        let n = system.n_vars();
        for got in [
            init.n_vars(),
            state.n_vars(),
            geometry.n_vars(),
            variables.len(),
        ] {
            if got != n {
                return Err(ModelError::VariableMismatch { expected: n, got });
            }
        }
        let (lo, hi) = geometry.bounding_box();
        let (state, archimedean) = validate_archimedean(&state, Some(box_bound_hint(&lo, &hi)))?;
        Ok(ReachProblem {
            name: name.into(),
            variables,
            init,
            state,
            system,
            horizon,
            geometry,
            volume_closure_asserted,
            archimedean,
            init_geometry: None,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.system.n_vars()
    }

    /// Smallest admissible relaxation order: the largest half-degree among
    /// the constraints of both sets.
    pub fn r_min(&self) -> u32 {
        self.init
            .half_degrees()
            .into_iter()
            .chain(self.state.half_degrees())
            .max()
            .unwrap_or(0)
    }

    pub fn with_init_geometry(mut self, g: DomainGeometry<T>) -> Result<Self, ModelError> {
        if g.n_vars() != self.n_vars() {
            return Err(ModelError::VariableMismatch {
                expected: self.n_vars(),
                got: g.n_vars(),
            });
        }
        self.init_geometry = Some(g);
        Ok(self)
    }

    pub fn with_horizon(&self, horizon: Horizon) -> Self {
        ReachProblem {
            horizon,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial<f64> {
        Polynomial::variable(n, i)
    }

    fn unit_ball_set() -> SemialgebraicSet<f64> {
        SemialgebraicSet::from_geometry(&DomainGeometry::unit_ball(2))
    }

    #[test]
    fn ball_is_recognised() {
        let (set, status) = validate_archimedean(&unit_ball_set(), None).unwrap();
        assert_eq!(status, Archimedean::Present);
        assert_eq!(set, unit_ball_set());
        let shifted = SemialgebraicSet::from_geometry(
            &DomainGeometry::new_ball(vec![0.5, 0.0], 1.0).unwrap(),
        );
        assert!(ball_radius_squared(&shifted.inequalities()[0]).is_none());
    }

    #[test]
    fn box_gets_augmented() {
        let g = DomainGeometry::new_box(vec![-0.5, -0.5, -0.5], vec![1.5, 0.5, 0.5]).unwrap();
        let set = SemialgebraicSet::from_geometry(&g);
        assert_eq!(set.len(), 6);
        let hint = box_bound_hint(&[-0.5, -0.5, -0.5], &[1.5, 0.5, 0.5]);
        assert_eq!(hint, 2.75);
        let (aug, status) = validate_archimedean(&set, Some(hint)).unwrap();
        assert_eq!(status, Archimedean::Augmented);
        assert_eq!(aug.len(), 7);
        assert!(aug.is_augmented(6));
        assert_eq!(ball_radius_squared(&aug.inequalities()[6]), Some(2.75));
        let balls = aug
            .inequalities()
            .iter()
            .filter(|g| ball_radius_squared(*g).is_some())
            .count();
        assert_eq!(balls, 1);
        assert_eq!(aug.inequalities()[6].evaluate(&[0.0; 3]).unwrap(), 2.75);
        assert_eq!(aug.without_augmentation(), set);
    }

    #[test]
    fn linear_only_needs_hint() {
        let set = SemialgebraicSet::new(1, vec![x(1, 0), &Polynomial::one(1) - &x(1, 0)]).unwrap();
        assert_eq!(
            validate_archimedean(&set, None),
            Err(ModelError::MissingHint)
        );
        assert_eq!(
            validate_archimedean(&set, Some(0.0)),
            Err(ModelError::NonPositiveHint)
        );
    }

    #[test]
    fn half_degree_examples() {
        assert_eq!(half_degrees(&unit_ball_set()), vec![1]);
        let cathala0 = DomainGeometry::new_ball(vec![-0.6, 0.5], 0.4).unwrap();
        assert_eq!(
            SemialgebraicSet::from_geometry(&cathala0).half_degrees(),
            vec![1]
        );
        let cubic = SemialgebraicSet::new(2, vec![x(2, 0).pow(3)]).unwrap();
        assert_eq!(cubic.half_degrees(), vec![2]);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(
            SemialgebraicSet::<f64>::new(2, vec![]),
            Err(ModelError::NoInequalities)
        );
    }

    #[test]
    fn dynamics_degree_floor() {
        let constant = DynamicalSystem::new(vec![Polynomial::constant(1, 0.3)]).unwrap();
        assert_eq!(constant.degree(), 1);
        assert!(DynamicalSystem::new(vec![x(2, 0)]).is_err());
    }

    #[test]
    fn toy_problem_bookkeeping() {
        let f1 = (&x(2, 0) + &(&x(2, 0) * &x(2, 1)).scale(2.0)).scale(0.5);
        let f2 = (&x(2, 1) - &x(2, 0).pow(3).scale(2.0)).scale(0.5);
        let sys = DynamicalSystem::new(vec![f1, f2]).unwrap();
        let init = SemialgebraicSet::from_geometry(
            &DomainGeometry::new_ball(vec![0.5, 0.5], 0.25).unwrap(),
        );
        let geom = DomainGeometry::unit_ball(2);
        let p = ReachProblem::new(
            "toy",
            vec!["x1".into(), "x2".into()],
            init,
            SemialgebraicSet::from_geometry(&geom),
            sys,
            Horizon::UZero,
            geom,
            true,
        )
        .unwrap();
        assert_eq!(p.system.degree(), 3);
        assert_eq!(p.r_min(), 1);
        assert_eq!(p.archimedean, Archimedean::Present);
        assert!(p.init.contains(&[0.5, 0.5]));
        assert!(!p.init.contains(&[0.0, 0.0]));
    }
}
