//! Replica-theory predictions: the ground-state energy, its saddle point and the
//! error matrices evaluated there.

mod derivs;
mod energy;
mod inputs;
mod layout;
mod observables;
mod solve;

pub use derivs::{energy_value, evaluate, gradient, hessian, Evaluation};
pub use energy::{contract, energy, h_part, linear_part, local_part};
pub use inputs::{centered_sym, precompute, precompute_with_modes, TheoryInputs, TheoryParts, THEORY_MODE_SEED};
pub use layout::{Block, Layout, OrderParams};
pub use observables::{closed_form_overlap, epsilon_theory, rho_finite_size, rho_local, rho_local_all, rho_theory};
pub use solve::{
    continuation_solve, free_coordinates, init_zero_noise, newton_solve, solve_theory, Branch, ContinuationOptions,
    Inertia, NewtonOptions, NewtonReport, PathPoint, PathRecord, Saddle, Stage, ZeroNoiseInit,
};

use crate::error::Result;
use crate::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grad_norm: f64,
    pub inertia: Inertia,
    pub branch: Branch,
    pub path: PathRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub eps: Matrix,
    pub rho: Matrix,
    /// Per-component ρ_i, when requested.
    pub rho_local: Option<Vec<Matrix>>,
    pub energy: f64,
    pub omega: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Solves for the saddle (falling back to the no-recovery branch on path failure)
/// and evaluates ε, ρ and optionally every ρ_i.
pub fn predict(inp: &TheoryInputs, opts: ContinuationOptions, with_local: bool) -> Result<TheoryPrediction> {
    let saddle = solve_theory(inp, opts)?;
    prediction_at(&saddle, inp, with_local)
}

pub fn prediction_at(saddle: &Saddle, inp: &TheoryInputs, with_local: bool) -> Result<TheoryPrediction> {
    let eps = epsilon_theory(&saddle.omega, inp)?;
    let rho = rho_theory(&saddle.omega, inp.k());
    let rho_local = if with_local { Some(rho_local_all(&saddle.omega, inp)?) } else { None };
    Ok(TheoryPrediction {
        eps,
        rho,
        rho_local,
        energy: saddle.report.energy,
        omega: saddle.omega.clone(),
        diagnostics: Diagnostics {
            grad_norm: saddle.report.grad_norm,
            inertia: saddle.report.inertia,
            branch: saddle.branch,
            path: saddle.path.clone(),
        },
    })
}
