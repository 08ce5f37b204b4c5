//! Three-level schemes for the second-order (wave) problem
//! `d^2y/dt^2 + A y = f`.
//!
//! The weighted reference scheme
//!
//! ```text
//! (y_{n+1} - 2 y_n + y_{n-1}) / tau^2
//!   + A (sigma y_{n+1} + (1 - 2 sigma) y_n + sigma y_{n-1}) = phi_n
//! ```
//!
//! is unconditionally stable for `sigma >= 1/4`. The regularized
//! regionally-additive variant replaces `A` by the resolvent-damped sum
//! `sum_a (E + sigma tau^2 chi_a A)^{-1} chi_a A` and is unconditionally
//! stable for `sigma >= p/4`.

use std::sync::Arc;

use crate::decomposition::Decomposition;
use crate::grid::GridFunction;
use crate::operator::{solve_spd, DiffusionOperator, OperatorExpression};
use crate::parabolic::STEP_SOLVE_TOL;
use crate::{Error, Result};

/// Two consecutive time levels of a three-level integration.
#[derive(Debug, Clone)]
pub struct HyperbolicState {
    pub y_curr: GridFunction,
    pub y_prev: GridFunction,
    pub t: f64,
    pub n: usize,
}

impl HyperbolicState {
    /// Difference quotient `(y_n - y_{n-1}) / tau`.
    pub fn eta(&self, tau: f64) -> GridFunction {
        GridFunction::lin_comb(1.0 / tau, &self.y_curr, -1.0 / tau, &self.y_prev)
            .expect("levels share a grid")
    }

    /// Level average `(y_n + y_{n-1}) / 2`.
    pub fn zeta(&self) -> GridFunction {
        GridFunction::lin_comb(0.5, &self.y_curr, 0.5, &self.y_prev).expect("levels share a grid")
    }
}

/// Second-order initialization:
/// `y_0 = u0`, `y_1 = u0 + tau v0 + (tau^2 / 2)(phi_0 - A u0)`.
pub fn init_second_level(
    u0: &GridFunction,
    v0: &GridFunction,
    a: &Arc<DiffusionOperator>,
    tau: f64,
    phi0: &GridFunction,
) -> Result<HyperbolicState> {
    if u0.grid() != v0.grid() || u0.grid() != phi0.grid() || u0.grid() != a.grid() {
        return Err(Error::GridMismatch);
    }
    let au0 = a.apply_fn(u0)?;
    let mut y1 = u0.clone();
    y1.add_scaled(tau, v0);
    y1.add_scaled(0.5 * tau * tau, phi0);
    y1.add_scaled(-0.5 * tau * tau, &au0);
    Ok(HyperbolicState {
        y_curr: y1,
        y_prev: u0.clone(),
        t: tau,
        n: 1,
    })
}

fn advanced(state: &HyperbolicState, y_next: GridFunction, tau: f64) -> HyperbolicState {
    HyperbolicState {
        y_prev: state.y_curr.clone(),
        y_curr: y_next,
        t: state.t + tau,
        n: state.n + 1,
    }
}

/// Weighted three-level scheme:
/// `(E + sigma tau^2 A) y_{n+1} = (2E - (1 - 2 sigma) tau^2 A) y_n
/// - (E + sigma tau^2 A) y_{n-1} + tau^2 phi_n`.
pub fn step_threelevel_weighted(
    state: &HyperbolicState,
    a: &Arc<DiffusionOperator>,
    sigma: f64,
    tau: f64,
    phi: &GridFunction,
) -> Result<HyperbolicState> {
    let tau_sq = tau * tau;
    let ay = a.apply_fn(&state.y_curr)?;
    let ay_prev = a.apply_fn(&state.y_prev)?;
    let mut rhs = GridFunction::lin_comb(2.0, &state.y_curr, -1.0, &state.y_prev)?;
    rhs.add_scaled(-(1.0 - 2.0 * sigma) * tau_sq, &ay);
    rhs.add_scaled(-sigma * tau_sq, &ay_prev);
    rhs.add_scaled(tau_sq, phi);
    let y_next = solve_spd(
        &OperatorExpression::shifted(a.clone(), sigma * tau_sq),
        &rhs,
        STEP_SOLVE_TOL,
    )?;
    Ok(advanced(state, y_next, tau))
}

/// Regularized regionally-additive three-level scheme:
/// `y_{n+1} = 2 y_n - y_{n-1}
/// - tau^2 sum_a (E + sigma tau^2 chi_a A)^{-1} chi_a A y_n + tau^2 phi_n`.
pub fn step_regularized_hyperbolic(
    state: &HyperbolicState,
    a: &Arc<DiffusionOperator>,
    dec: &Decomposition,
    sigma: f64,
    tau: f64,
    phi: &GridFunction,
) -> Result<HyperbolicState> {
    let tau_sq = tau * tau;
    let mut y_next = GridFunction::lin_comb(2.0, &state.y_curr, -1.0, &state.y_prev)?;
    y_next.add_scaled(tau_sq, phi);
    for alpha in 1..=dec.p() {
        let masked_ay = dec.masked_operator(a, alpha)?.apply(&state.y_curr)?;
        let g = solve_spd(
            &OperatorExpression::shifted_masked(
                a.clone(),
                sigma * tau_sq,
                dec.mask(alpha)?.clone(),
            ),
            &masked_ay,
            STEP_SOLVE_TOL,
        )?;
        y_next.add_scaled(-tau_sq, &g);
    }
    Ok(advanced(state, y_next, tau))
}
