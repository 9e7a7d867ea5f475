//! Problem files: TOML documents describing a reachability problem.
//!
//! ```toml
//! name = "toy"
//! variables = ["x1", "x2"]
//! dynamics = ["0.5*(x1 + 2*x1*x2)", "0.5*(x2 - 2*x1^3)"]
//!
//! [init_set]
//! inequalities = ["1/16 - (x1 - 0.5)^2 - (x2 - 0.5)^2"]
//! geometry = { kind = "ball", center = [0.5, 0.5], radius = 0.25 }
//!
//! [state_set]
//! geometry = { kind = "ball", center = [0.0, 0.0], radius = 1.0 }
//!
//! [options]
//! order = 4
//! horizon = 100
//! ```
//!
//! Every schema violation is collected before reporting.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use super::expr::{is_identifier, parse_polynomial};
use crate::moments::DomainGeometry;
use crate::poly::Polynomial;
use crate::scalar::Real;
use crate::sdp::SolverOptions;
use crate::semialg::{Archimedean, DynamicalSystem, Horizon, ReachProblem, SemialgebraicSet};

/// Horizon used when a file sets neither `horizon` nor `u_zero`.
pub const DEFAULT_HORIZON: u32 = 100;

/// One schema violation, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid TOML: {0}")]
    Syntax(String),
    #[error("{} schema violation(s): {}", .0.len(), .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaIssue>),
}

impl ProblemError {
    pub fn issues(&self) -> &[SchemaIssue] {
        match self {
            ProblemError::Schema(v) => v,
            _ => &[],
        }
    }
}

/// Run options stored alongside a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemOptions {
    /// Relaxation degree `2r`.
    pub order: Option<u32>,
    pub seed: Option<u64>,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProblem<T: Real> {
    pub problem: ReachProblem<T>,
    pub options: ProblemOptions,
    /// SHA-256 of the file contents, hex encoded.
    pub hash: String,
}

pub fn problem_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

struct Collector {
    issues: Vec<SchemaIssue>,
}

impl Collector {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(SchemaIssue {
            field: field.into(),
            message: message.into(),
        });
    }

    fn unknown_keys(&mut self, table: &Table, prefix: &str, allowed: &[&str]) {
        for k in table.keys() {
            if !allowed.contains(&k.as_str()) {
                self.push(join(prefix, k), "unknown field");
            }
        }
    }

    fn string(&mut self, table: &Table, prefix: &str, key: &str) -> Option<String> {
        match table.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(join(prefix, key), "expected a string");
                None
            }
        }
    }

    fn strings(&mut self, table: &Table, prefix: &str, key: &str) -> Option<Vec<String>> {
        match table.get(key) {
            None => None,
            Some(Value::Array(a)) => {
                let mut out = Vec::with_capacity(a.len());
                for (i, v) in a.iter().enumerate() {
                    match v {
                        Value::String(s) => out.push(s.clone()),
                        _ => self.push(format!("{}[{i}]", join(prefix, key)), "expected a string"),
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.push(join(prefix, key), "expected an array of strings");
                None
            }
        }
    }

    fn float(&mut self, v: &Value, field: &str) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.push(field, "expected a finite number");
                None
            }
        }
    }

    fn floats(&mut self, table: &Table, prefix: &str, key: &str) -> Option<Vec<f64>> {
        let field = join(prefix, key);
        match table.get(key) {
            None => {
                self.push(field, "missing");
                None
            }
            Some(Value::Array(a)) => {
                let vals: Vec<Option<f64>> = a
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.float(v, &format!("{field}[{i}]")))
                    .collect();
                vals.into_iter().collect()
            }
            Some(_) => {
                self.push(field, "expected an array of numbers");
                None
            }
        }
    }

    fn uint(&mut self, table: &Table, prefix: &str, key: &str) -> Option<u64> {
        match table.get(key) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(_) => {
                self.push(join(prefix, key), "expected a non-negative integer");
                None
            }
        }
    }

    fn boolean(&mut self, table: &Table, prefix: &str, key: &str) -> Option<bool> {
        match table.get(key) {
            None => None,
            Some(Value::Boolean(b)) => Some(*b),
            Some(_) => {
                self.push(join(prefix, key), "expected true or false");
                None
            }
        }
    }

    fn table<'a>(&mut self, table: &'a Table, prefix: &str, key: &str) -> Option<&'a Table> {
        match table.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.push(join(prefix, key), "expected a table");
                None
            }
        }
    }

    fn polynomials<T: Real>(
        &mut self,
        texts: &[String],
        vars: &[String],
        field: &str,
    ) -> Option<Vec<Polynomial<T>>> {
        let mut ok = true;
        let mut out = Vec::with_capacity(texts.len());
        for (i, t) in texts.iter().enumerate() {
            match parse_polynomial(t, vars) {
                Ok(p) => out.push(p),
                Err(e) => {
                    self.push(format!("{field}[{i}]"), e.to_string());
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn geometry<T: Real>(
        &mut self,
        table: &Table,
        prefix: &str,
        n: Option<usize>,
    ) -> Option<DomainGeometry<T>> {
        let kind = self.string(table, prefix, "kind");
        let lit = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let g = match kind.as_deref() {
            Some("box") => {
                self.unknown_keys(table, prefix, &["kind", "lower", "upper"]);
                let lo = self.floats(table, prefix, "lower");
                let hi = self.floats(table, prefix, "upper");
                DomainGeometry::new_box(lit(lo?), lit(hi?))
            }
            Some("ball") => {
                self.unknown_keys(table, prefix, &["kind", "center", "radius"]);
                let c = self.floats(table, prefix, "center");
                let r = match table.get("radius") {
                    Some(v) => self.float(v, &join(prefix, "radius")),
                    None => {
                        self.push(join(prefix, "radius"), "missing");
                        None
                    }
                };
                DomainGeometry::new_ball(lit(c?), T::lit(r?))
            }
            Some("ellipsoid") => {
                self.unknown_keys(table, prefix, &["kind", "center", "shape"]);
                let c = self.floats(table, prefix, "center");
                let shape = self.matrix(table, prefix, "shape");
                let c = c?;
                let (rows, data) = shape?;
                if rows != c.len() {
                    self.push(
                        join(prefix, "shape"),
                        "shape must be n × n for an n-dimensional center",
                    );
                    return None;
                }
                DomainGeometry::new_ellipsoid(
                    lit(c),
                    DMatrix::from_row_slice(rows, rows, &lit(data)),
                )
            }
            Some(other) => {
                self.push(
                    join(prefix, "kind"),
                    format!("unknown geometry {other:?} (box, ball or ellipsoid)"),
                );
                return None;
            }
            None => {
                if !table.contains_key("kind") {
                    self.push(join(prefix, "kind"), "missing");
                }
                return None;
            }
        };
        match g {
            Ok(g) => {
                if let Some(n) = n {
                    if g.n_vars() != n {
                        self.push(
                            prefix,
                            format!("geometry has {} dimensions for {n} variables", g.n_vars()),
                        );
                        return None;
                    }
                }
                Some(g)
            }
            Err(e) => {
                self.push(prefix, e.to_string());
                None
            }
        }
    }

    fn matrix(&mut self, table: &Table, prefix: &str, key: &str) -> Option<(usize, Vec<f64>)> {
        let field = join(prefix, key);
        let Some(Value::Array(rows)) = table.get(key) else {
            self.push(field, "expected an array of rows");
            return None;
        };
        let mut data = Vec::new();
        let mut ok = true;
        for (i, row) in rows.iter().enumerate() {
            match row {
                Value::Array(r) if r.len() == rows.len() => {
                    for (j, v) in r.iter().enumerate() {
                        match self.float(v, &format!("{field}[{i}][{j}]")) {
                            Some(x) => data.push(x),
                            None => ok = false,
                        }
                    }
                }
                _ => {
                    self.push(
                        format!("{field}[{i}]"),
                        "expected a row of the square matrix",
                    );
                    ok = false;
                }
            }
        }
        ok.then_some((rows.len(), data))
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

struct SetSpec<T: Real> {
    inequalities: Option<Vec<Polynomial<T>>>,
    geometry: Option<DomainGeometry<T>>,
}

fn read_set<T: Real>(
    c: &mut Collector,
    root: &Table,
    key: &str,
    vars: Option<&[String]>,
) -> Option<SetSpec<T>> {
    let Some(t) = c.table(root, "", key) else {
        if !root.contains_key(key) {
            c.push(key, "missing");
        }
        return None;
    };
    c.unknown_keys(t, key, &["inequalities", "geometry"]);
    let texts = c.strings(t, key, "inequalities");
    let inequalities = match (texts, vars) {
        (Some(texts), Some(vars)) => c.polynomials(&texts, vars, &join(key, "inequalities")),
        _ => None,
    };
    let geometry = c
        .table(t, key, "geometry")
        .and_then(|g| c.geometry(g, &join(key, "geometry"), vars.map(|v| v.len())));
    Some(SetSpec {
        inequalities,
        geometry,
    })
}

/// Parses and validates a problem document.
pub fn parse_problem<T: Real>(text: &str) -> Result<LoadedProblem<T>, ProblemError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ProblemError::Syntax(e.to_string()))?;
    let mut c = Collector { issues: Vec::new() };
    c.unknown_keys(
        &root,
        "",
        &[
            "name",
            "variables",
            "dynamics",
            "init_set",
            "state_set",
            "options",
        ],
    );
    let name = c
        .string(&root, "", "name")
        .unwrap_or_else(|| "problem".into());

    let vars = match c.strings(&root, "", "variables") {
        Some(v) => {
            let mut ok = !v.is_empty();
            if v.is_empty() {
                c.push("variables", "at least one variable is required");
            }
            for (i, name) in v.iter().enumerate() {
                if !is_identifier(name) {
                    c.push(
                        format!("variables[{i}]"),
                        format!("{name:?} is not an identifier"),
                    );
                    ok = false;
                } else if v[..i].contains(name) {
                    c.push(
                        format!("variables[{i}]"),
                        format!("duplicate variable {name:?}"),
                    );
                    ok = false;
                }
            }
            ok.then_some(v)
        }
        None => {
            if !root.contains_key("variables") {
                c.push("variables", "missing");
            }
            None
        }
    };

    let dynamics = match (c.strings(&root, "", "dynamics"), &vars) {
        (Some(texts), Some(v)) => {
            if texts.len() != v.len() {
                c.push(
                    "dynamics",
                    format!("{} components for {} variables", texts.len(), v.len()),
                );
            }
            c.polynomials::<T>(&texts, v, "dynamics")
                .filter(|d| d.len() == v.len())
        }
        (None, _) => {
            if !root.contains_key("dynamics") {
                c.push("dynamics", "missing");
            }
            None
        }
        _ => None,
    };

    let init = read_set::<T>(&mut c, &root, "init_set", vars.as_deref());
    let state = read_set::<T>(&mut c, &root, "state_set", vars.as_deref());
    if let Some(s) = &state {
        if s.geometry.is_none()
            && matches!(root.get("state_set"), Some(Value::Table(t)) if !t.contains_key("geometry"))
        {
            c.push(
                "state_set.geometry",
                "missing (the state set needs a box, ball or ellipsoid)",
            );
        }
    }
    if let Some(s) = &init {
        let empty = s.inequalities.as_ref().is_some_and(|v| v.is_empty());
        let absent = matches!(root.get("init_set"), Some(Value::Table(t)) if !t.contains_key("inequalities"));
        if (empty || absent)
            && s.geometry.is_none()
            && matches!(root.get("init_set"), Some(Value::Table(t)) if !t.contains_key("geometry"))
        {
            c.push("init_set", "needs inequalities or a geometry");
        }
    }

    let mut options = ProblemOptions {
        order: None,
        seed: None,
        solver: SolverOptions::default(),
    };
    let mut horizon = Horizon::Steps(DEFAULT_HORIZON);
    let mut volume_closure = false;
    if let Some(t) = c.table(&root, "", "options") {
        c.unknown_keys(
            t,
            "options",
            &[
                "order",
                "horizon",
                "u_zero",
                "feas_tol",
                "gap_tol",
                "max_iter",
                "seed",
                "volume_closure",
            ],
        );
        if let Some(o) = c.uint(t, "options", "order") {
            if o < 2 || o % 2 != 0 || o > u32::MAX as u64 {
                c.push(
                    "options.order",
                    "the relaxation degree 2r must be an even integer ≥ 2",
                );
            } else {
                options.order = Some(o as u32);
            }
        }
        let steps = c.uint(t, "options", "horizon");
        let u_zero = c.boolean(t, "options", "u_zero").unwrap_or(false);
        match (steps, u_zero) {
            (Some(_), true) => c.push("options", "horizon and u_zero are mutually exclusive"),
            (Some(s), false) => match u32::try_from(s).ok().and_then(|s| Horizon::steps(s).ok()) {
                Some(h) => horizon = h,
                None => c.push("options.horizon", "must be a positive 32-bit integer"),
            },
            (None, true) => horizon = Horizon::UZero,
            (None, false) => {}
        }
        for key in ["feas_tol", "gap_tol"] {
            if let Some(v) = t.get(key) {
                let field = join("options", key);
                match c.float(v, &field) {
                    Some(x) if x > 0.0 => {
                        if key == "feas_tol" {
                            options.solver.feas_tol = x;
                        } else {
                            options.solver.gap_tol = x;
                        }
                    }
                    Some(_) => c.push(field, "must be positive"),
                    None => {}
                }
            }
        }
        if let Some(m) = c.uint(t, "options", "max_iter") {
            options.solver.max_iter = m as usize;
        }
        options.seed = c.uint(t, "options", "seed");
        volume_closure = c.boolean(t, "options", "volume_closure").unwrap_or(false);
    }

    if !c.issues.is_empty() {
        return Err(ProblemError::Schema(c.issues));
    }
    let (vars, dynamics, init, state) = match (vars, dynamics, init, state) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => unreachable!("missing pieces are reported as issues"),
    };
    let n = vars.len();
    let state_geometry = state.geometry.expect("checked above");
    let state_ineqs = match state.inequalities {
        Some(v) if !v.is_empty() => v,
        _ => state_geometry.constraints(),
    };
    let init_ineqs = match (init.inequalities, &init.geometry) {
        (Some(v), _) if !v.is_empty() => v,
        (_, Some(g)) => g.constraints(),
        _ => unreachable!("checked above"),
    };
    let schema = |field: &str, e: &dyn fmt::Display| {
        ProblemError::Schema(vec![SchemaIssue {
            field: field.into(),
            message: e.to_string(),
        }])
    };
    let init_set = SemialgebraicSet::new(n, init_ineqs).map_err(|e| schema("init_set", &e))?;
    let state_set = SemialgebraicSet::new(n, state_ineqs).map_err(|e| schema("state_set", &e))?;
    let system = DynamicalSystem::new(dynamics).map_err(|e| schema("dynamics", &e))?;
    let mut problem = ReachProblem::new(
        name,
        vars,
        init_set,
        state_set,
        system,
        horizon,
        state_geometry,
        volume_closure,
    )
    .map_err(|e| schema("state_set", &e))?;
    if problem.archimedean == Archimedean::Augmented {
        log::info!(
            "{}: appended a ball constraint to the state set",
            problem.name
        );
    }
    if let Some(g) = init.geometry {
        problem = problem
            .with_init_geometry(g)
            .map_err(|e| schema("init_set.geometry", &e))?;
    }
    Ok(LoadedProblem {
        problem,
        options,
        hash: problem_hash(text),
    })
}

pub fn load_problem<T: Real>(path: impl AsRef<Path>) -> Result<LoadedProblem<T>, ProblemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_problem(&text)
}
