use thiserror::Error;

use super::field::{DualValueField, Variant};
use crate::inner_solver::{self, Continuation, InnerOptions, InnerProblem, TIE_REL};
use crate::model::{Horizon, ModelError, ModelSpec};

#[derive(Debug, Clone)]
pub struct BellmanOptions {
    pub inner: InnerOptions,
    /// Slack of a feasible plan; sizes the multiplier box.
    pub slater_eps: Option<f64>,
    pub tie_rel: f64,
}

impl Default for BellmanOptions {
    fn default() -> Self {
        Self {
            inner: InnerOptions::default(),
            slater_eps: None,
            tie_rel: TIE_REL,
        }
    }
}

impl BellmanOptions {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        Self {
            slater_eps: spec.slater_eps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanOutcome {
    pub value: f64,
    /// Minimizing multiplier. For the sup-inf form, the one of the first
    /// maximizing action.
    pub lambda: Vec<f64>,
    /// Feasible actions within the tie tolerance of the optimum.
    pub argmax: Vec<usize>,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum BellmanError {
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Multiplier carried into the next period: `γ + λ` for constraints that
/// accumulate, `λ` for two-period constraints.
pub fn next_multiplier(horizons: &[Horizon], gamma: &[f64], lambda: &[f64], out: &mut [f64]) {
    for i in 0..horizons.len() {
        out[i] = match horizons[i] {
            Horizon::Infinite => gamma[i] + lambda[i],
            Horizon::Two => lambda[i],
        };
    }
}

/// `λ ↦ β·E_s field(next(γ, λ), x', s')`.
pub struct FieldContinuation<'a> {
    pub spec: &'a ModelSpec,
    pub field: &'a DualValueField,
    pub gamma: &'a [f64],
    pub s: usize,
    pub eps_fd: f64,
}

impl FieldContinuation<'_> {
    fn shifted(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; lambda.len()];
        next_multiplier(self.field.horizons(), self.gamma, lambda, &mut out);
        out
    }
}

impl Continuation for FieldContinuation<'_> {
    fn value(&self, lambda: &[f64], next_state: usize) -> f64 {
        let nm = self.shifted(lambda);
        let mut acc = 0.0;
        for s2 in 0..self.spec.num_shocks {
            let p = self.spec.prob(self.s, s2);
            if p != 0.0 {
                acc += p * self.field.evaluate(&nm, next_state, s2);
            }
        }
        self.spec.beta * acc
    }

    fn subgradient(&self, lambda: &[f64], next_state: usize, out: &mut [f64]) {
        let nm = self.shifted(lambda);
        out.fill(0.0);
        let mut tmp = vec![0.0; lambda.len()];
        for s2 in 0..self.spec.num_shocks {
            let p = self.spec.prob(self.s, s2);
            if p != 0.0 {
                self.field.subgradient_into(&nm, next_state, s2, self.eps_fd, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += self.spec.beta * p * t;
                }
            }
        }
    }

    fn slope_bound(&self, _dim: usize) -> f64 {
        self.spec.beta * self.field.lipschitz()
    }
}

/// Box bound for the inner multiplier at `(γ, x, s)`:
/// `2(D̂ + (1+Σγ)L)/ε` with `D̂` the current field value, or
/// `(1+Σγ)·10L/(1−β)` when no slack is known.
pub fn multiplier_bound(spec: &ModelSpec, field: &DualValueField, gamma: &[f64], x: usize, s: usize, eps: Option<f64>) -> f64 {
    let l = field.lipschitz();
    let mass = 1.0 + gamma.iter().sum::<f64>();
    match eps {
        Some(e) if e > 0.0 => (2.0 * (field.evaluate(gamma, x, s) + mass * l) / e).max(0.0),
        _ => mass * 10.0 * l / (1.0 - spec.beta),
    }
}

/// Forward-difference step for subgradients of the field at `γ`.
pub fn fd_step(gamma: &[f64]) -> f64 {
    1e-4 * (1.0 + gamma.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Builds the inner problem of one Bellman application. The returned action
/// list maps piece indices to action indices.
pub fn inner_problem<'a>(
    spec: &ModelSpec,
    gamma: &[f64],
    x: usize,
    s: usize,
    bound: f64,
    continuation: &'a dyn Continuation,
) -> Result<(InnerProblem<'a>, Vec<usize>), ModelError> {
    let actions = spec.feasible_actions(x, s)?;
    let dim = spec.num_constraints();
    let mut constants = Vec::with_capacity(actions.len());
    let mut slopes = Vec::with_capacity(actions.len() * dim);
    let mut next = Vec::with_capacity(actions.len());
    for &a in &actions {
        let mut c = spec.reward(x, a, s);
        for i in 0..dim {
            let g = spec.constraint(i, x, a, s);
            c += gamma[i] * g;
            slopes.push(g - spec.threshold(i, x, a, s));
        }
        constants.push(c);
        next.push(spec.next(x, a, s));
    }
    let prob = InnerProblem::new(dim, constants, slopes, next, vec![bound; dim], continuation);
    Ok((prob, actions))
}

/// One application of the Bellman operator at `(γ, x, s)`.
pub fn bellman_apply(
    spec: &ModelSpec,
    field: &DualValueField,
    gamma: &[f64],
    x: usize,
    s: usize,
    opts: &BellmanOptions,
    warm: Option<&[f64]>,
) -> Result<BellmanOutcome, BellmanError> {
    let cont = FieldContinuation {
        spec,
        field,
        gamma,
        s,
        eps_fd: fd_step(gamma),
    };
    let bound = multiplier_bound(spec, field, gamma, x, s, opts.slater_eps);
    let (prob, actions) = inner_problem(spec, gamma, x, s, bound, &cont)?;
    let prob = prob.with_tie_rel(opts.tie_rel);
    match field.variant() {
        Variant::InfSup => {
            let sol = inner_solver::minimize(&prob, &opts.inner, warm);
            let ev = prob.evaluate(&sol.lambda);
            Ok(BellmanOutcome {
                value: sol.value,
                argmax: ev.argmax.iter().map(|&k| actions[k]).collect(),
                lambda: sol.lambda,
                kkt_residual: sol.kkt_residual,
                converged: sol.converged,
            })
        }
        Variant::SupInf => Ok(sup_inf(&prob, &actions, opts)),
    }
}

/// Maximum over actions of the per-action minimum. Actions are visited in
/// decreasing order of their value at `λ = 0`, an upper bound on their
/// minimum, so the scan stops once no remaining action can reach the tie set.
fn sup_inf(prob: &InnerProblem<'_>, actions: &[usize], opts: &BellmanOptions) -> BellmanOutcome {
    let dim = prob.dim();
    let zero = vec![0.0; dim];
    let mut order: Vec<(usize, f64)> = (0..prob.num_pieces()).map(|k| (k, prob.piece(k).value(&zero))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut results: Vec<(usize, f64, Vec<f64>, f64, bool)> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (k, upper) in order {
        if upper < best - opts.tie_rel * (1.0 + best.abs()) {
            break;
        }
        let sol = inner_solver::minimize(&prob.piece(k), &opts.inner, None);
        best = best.max(sol.value);
        results.push((k, sol.value, sol.lambda, sol.kkt_residual, sol.converged));
    }
    let tie = opts.tie_rel * (1.0 + best.abs());
    let mut winners: Vec<&(usize, f64, Vec<f64>, f64, bool)> = results.iter().filter(|r| r.1 >= best - tie).collect();
    winners.sort_by_key(|r| r.0);
    BellmanOutcome {
        value: best,
        lambda: winners[0].2.clone(),
        argmax: winners.iter().map(|r| actions[r.0]).collect(),
        kkt_residual: results.iter().map(|r| r.3).fold(0.0, f64::max),
        converged: results.iter().all(|r| r.4),
    }
}
