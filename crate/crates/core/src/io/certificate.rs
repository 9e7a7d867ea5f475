//! Certificate files (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OutputError;
use crate::poly::{Exponent, Polynomial};
use crate::relax::Certificate;
use crate::semialg::{Horizon, ReachProblem};

pub const CERTIFICATE_FORMAT: &str = "reach-sos-certificate";
pub const CERTIFICATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponent: Vec<u32>,
    pub coefficient: f64,
}

/// Bounding box of the state set, used for grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub format: String,
    pub version: u32,
    pub problem: String,
    pub problem_hash: String,
    pub variables: Vec<String>,
    /// Relaxation degree `2r`.
    pub order: u32,
    /// `null` when `u` is fixed to zero.
    pub horizon: Option<u32>,
    pub u: f64,
    pub objective: f64,
    pub v: Vec<Term>,
    pub w: Vec<Term>,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
}

fn terms(p: &Polynomial<f64>) -> Vec<Term> {
    p.terms()
        .map(|(e, c)| Term {
            exponent: e.as_slice().to_vec(),
            coefficient: *c,
        })
        .collect()
}

fn polynomial(n: usize, terms: &[Term], field: &str) -> Result<Polynomial<f64>, OutputError> {
    Polynomial::from_terms(
        n,
        terms
            .iter()
            .map(|t| (Exponent::new(t.exponent.clone()), t.coefficient)),
    )
    .map_err(|e| OutputError::Format(format!("{field}: {e}")))
}

impl CertificateFile {
    pub fn new(cert: &Certificate<f64>, problem: &ReachProblem<f64>, problem_hash: &str) -> Self {
        let (lower, upper) = problem.geometry.bounding_box();
        CertificateFile {
            format: CERTIFICATE_FORMAT.into(),
            version: CERTIFICATE_VERSION,
            problem: problem.name.clone(),
            problem_hash: problem_hash.into(),
            variables: cert.variables.clone(),
            order: 2 * cert.order,
            horizon: match cert.horizon {
                Horizon::Steps(t) => Some(t),
                Horizon::UZero => None,
            },
            u: cert.u,
            objective: cert.objective,
            v: terms(&cert.v),
            w: terms(&cert.w),
            domain: Domain { lower, upper },
            solver: cert.stats.map(|s| SolverSummary {
                status: s.status.as_str().into(),
                iterations: s.iterations,
                primal_residual: s.residuals.primal,
                dual_residual: s.residuals.dual,
                gap: s.residuals.gap,
            }),
        }
    }

    /// The certificate without Gram matrices or solver statistics.
    pub fn certificate(&self) -> Result<Certificate<f64>, OutputError> {
        if self.format != CERTIFICATE_FORMAT || self.version != CERTIFICATE_VERSION {
            return Err(OutputError::Format(format!(
                "unsupported certificate format {} v{}",
                self.format, self.version
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(OutputError::Format(format!(
                "order {} is not an even positive degree",
                self.order
            )));
        }
        let n = self.variables.len();
        if self.domain.lower.len() != n || self.domain.upper.len() != n {
            return Err(OutputError::Format(
                "domain dimension differs from the variable count".into(),
            ));
        }
        let horizon = match self.horizon {
            Some(0) => return Err(OutputError::Format("horizon must be positive".into())),
            Some(t) => Horizon::Steps(t),
            None => Horizon::UZero,
        };
        Ok(Certificate {
            variables: self.variables.clone(),
            order: self.order / 2,
            horizon,
            u: self.u,
            v: polynomial(n, &self.v, "v")?,
            w: polynomial(n, &self.w, "w")?,
            objective: self.objective,
            memberships: Vec::new(),
            stats: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, OutputError> {
        serde_json::from_str(text).map_err(|e| OutputError::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OutputError> {
        super::write_text(path, &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OutputError> {
        Self::from_json(&super::read_text(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DomainGeometry;
    use crate::semialg::{DynamicalSystem, SemialgebraicSet};

    fn problem() -> ReachProblem<f64> {
        let g = DomainGeometry::unit_ball(2);
        let x = Polynomial::variable(2, 0);
        ReachProblem::new(
            "p",
            vec!["a".into(), "b".into()],
            SemialgebraicSet::from_geometry(
                &DomainGeometry::new_ball(vec![0.0, 0.0], 0.5).unwrap(),
            ),
            SemialgebraicSet::from_geometry(&g),
            DynamicalSystem::new(vec![x.scale(0.5), Polynomial::variable(2, 1).scale(0.5)])
                .unwrap(),
            Horizon::Steps(100),
            g,
            false,
        )
        .unwrap()
    }

    fn cert() -> Certificate<f64> {
        let mut v = Polynomial::constant(2, 0.1 + 0.2);
        v.add_term(Exponent::new(vec![2, 0]), -1.0 / 3.0);
        v.add_term(Exponent::new(vec![1, 3]), std::f64::consts::PI * 1e-17);
        Certificate {
            variables: vec!["a".into(), "b".into()],
            order: 2,
            horizon: Horizon::Steps(100),
            u: 3.3e-9,
            w: &v + &Polynomial::one(2),
            v,
            objective: std::f64::consts::FRAC_PI_4,
            memberships: Vec::new(),
            stats: None,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = cert();
        let file = CertificateFile::new(&c, &problem(), "abc");
        let back = CertificateFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let c2 = back.certificate().unwrap();
        assert_eq!(c2.u.to_bits(), c.u.to_bits());
        for (p, q) in [(&c.v, &c2.v), (&c.w, &c2.w)] {
            let a: Vec<_> = p.terms().map(|(e, x)| (e.clone(), x.to_bits())).collect();
            let b: Vec<_> = q.terms().map(|(e, x)| (e.clone(), x.to_bits())).collect();
            assert_eq!(a, b);
        }
        assert_eq!(c2.order, 2);
        assert_eq!(file.order, 4);
    }

    #[test]
    fn u_zero_has_null_horizon() {
        let mut c = cert();
        c.horizon = Horizon::UZero;
        let file = CertificateFile::new(&c, &problem(), "h");
        assert!(file.to_json().contains("\"horizon\": null"));
        assert_eq!(file.certificate().unwrap().horizon, Horizon::UZero);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let mut file = CertificateFile::new(&cert(), &problem(), "h");
        file.order = 3;
        assert!(file.certificate().is_err());
        let mut file = CertificateFile::new(&cert(), &problem(), "h");
        file.v[0].exponent = vec![1];
        assert!(file.certificate().is_err());
        assert!(CertificateFile::from_json("{}").is_err());
    }
}
