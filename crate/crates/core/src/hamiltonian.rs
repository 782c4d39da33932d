//! The quadratic Hamiltonian `½ pApᵀ` and its bounded regularization
//! `H_ε(p) = pApᵀ / (2 + ε|pApᵀ|)`, with the gradient in `p` needed by Newton.

use crate::error::{Error, Result};
use crate::grid::SymMatrix;

/// Below this value a zero `eps_min` schedule switches to the exact Hamiltonian.
pub const EXACT_SWITCH: f64 = 1e-8;

/// `H_ε(x, p)`; `eps = 0` is the exact Hamiltonian `q/2`.
pub fn h_eps(p: &[f64], a: &SymMatrix, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0);
    let q = a.quad(p);
    if eps == 0.0 {
        0.5 * q
    } else {
        q / (2.0 + eps * q.abs())
    }
}

/// `∂H_ε/∂p = 4 A p / (2 + εq)²`, written into `out`.
pub fn dh_eps_dp_into(p: &[f64], a: &SymMatrix, eps: f64, out: &mut [f64]) {
    let q = a.quad(p);
    let denom = 2.0 + eps * q.abs();
    let scale = 4.0 / (denom * denom);
    a.apply(p, out);
    for o in out.iter_mut() {
        *o *= scale;
    }
}

pub fn dh_eps_dp(p: &[f64], a: &SymMatrix, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    dh_eps_dp_into(p, a, eps, &mut out);
    out
}

/// Geometric continuation schedule `eps0 · factor^k`.
///
/// With `eps_min > 0` the schedule stops at the first value `≤ eps_min`.
/// With `eps_min = 0` it runs until the first value `≤ EXACT_SWITCH` and then
/// appends a final exact (`ε = 0`) stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub factor: f64,
    pub eps_min: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            factor: 0.25,
            eps_min: 0.0,
        }
    }
}

impl EpsSchedule {
    pub fn new(eps0: f64, factor: f64, eps_min: f64) -> Result<Self> {
        let s = Self {
            eps0,
            factor,
            eps_min,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(Error::Validation("eps0 must be positive".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Validation("factor must lie in (0,1)".into()));
        }
        if !(self.eps_min >= 0.0 && self.eps_min.is_finite()) {
            return Err(Error::Validation("eps_min must be nonnegative".into()));
        }
        Ok(())
    }

    /// Whether the final stage uses the exact Hamiltonian.
    pub fn ends_exact(&self) -> bool {
        self.eps_min == 0.0
    }

    pub fn stages(&self) -> Vec<f64> {
        let stop = if self.ends_exact() {
            EXACT_SWITCH
        } else {
            self.eps_min
        };
        let mut out = Vec::new();
        let mut eps = self.eps0;
        loop {
            out.push(eps);
            if eps <= stop {
                break;
            }
            eps *= self.factor;
        }
        if self.ends_exact() {
            out.push(0.0);
        }
        out
    }
}
