//! Problem files bundled with the crate.

use super::problem::{parse_problem, LoadedProblem, ProblemError};
use crate::scalar::Real;

/// The five benchmark systems, in the order they are usually reported.
pub const BENCHMARKS: [&str; 5] = [
    "toy",
    "cathala",
    "fitzhugh_nagumo",
    "julia",
    "phytoplankton",
];

const SOURCES: [(&str, &str); 6] = [
    ("toy", include_str!("../../fixtures/toy.toml")),
    ("cathala", include_str!("../../fixtures/cathala.toml")),
    (
        "fitzhugh_nagumo",
        include_str!("../../fixtures/fitzhugh_nagumo.toml"),
    ),
    ("julia", include_str!("../../fixtures/julia.toml")),
    (
        "phytoplankton",
        include_str!("../../fixtures/phytoplankton.toml"),
    ),
    (
        "contraction_1d",
        include_str!("../../fixtures/contraction_1d.toml"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load<T: Real>(name: &str) -> Option<Result<LoadedProblem<T>, ProblemError>> {
    source(name).map(parse_problem)
}
