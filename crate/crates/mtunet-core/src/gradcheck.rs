//! Finite-difference gradient verification.
//!
//! The tolerance constants used by the test suites live here so they are
//! defined exactly once.

use crate::param::{NamedParams, Parameter};
use crate::rng::RngState;
use crate::tensor::no_grad;

/// Central-difference step (on `f64` values).
pub const FD_STEP: f64 = 1e-3;
/// Relative tolerance for single ops and small blocks.
pub const REL_TOL_OP: f64 = 1e-4;
/// Relative tolerance for end-to-end model gradients.
pub const REL_TOL_MODEL: f64 = 1e-3;
/// Absolute tolerance when comparing against reference (oracle) forwards.
pub const ORACLE_ABS_TOL: f64 = 1e-6;
/// Denominator floor for relative errors, so near-zero gradients compare
/// absolutely at this scale.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// One probed parameter element: analytic vs central-difference gradient.
#[derive(Debug)]
pub struct Probe {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn relative_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

/// Central difference of `loss` with respect to one parameter element.
/// `loss` is evaluated with gradient recording off; the parameter is
/// restored afterwards.
pub fn finite_difference(
    param: &Parameter<f64>,
    index: usize,
    loss: &mut dyn FnMut() -> f64,
    h: f64,
) -> f64 {
    param.nudge(index, h);
    let up = no_grad(|| loss());
    param.nudge(index, -2.0 * h);
    let down = no_grad(|| loss());
    param.nudge(index, h);
    (up - down) / (2.0 * h)
}

/// Probes `count` randomly chosen parameter elements, comparing the already
/// accumulated analytic gradients against central differences of `loss`.
pub fn probe_gradients(
    params: &NamedParams<f64>,
    loss: &mut dyn FnMut() -> f64,
    count: usize,
    h: f64,
    rng: &mut RngState,
) -> Vec<Probe> {
    assert!(!params.is_empty(), "no parameters to probe");
    let mut probes = Vec::with_capacity(count);
    for _ in 0..count {
        let (name, param) = &params[rng.below(params.len())];
        let index = rng.below(param.numel());
        let analytic = param.grad()[index];
        let numeric = finite_difference(param, index, loss, h);
        probes.push(Probe { name: name.clone(), index, analytic, numeric });
    }
    probes
}
