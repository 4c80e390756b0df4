use rayon::prelude::*;
use thiserror::Error;

use super::bellman::{bellman_apply, BellmanError, BellmanOptions};
use super::field::{DualValueField, Variant};
use super::grid::{GammaGrid, GridError, GridSpec};
use crate::model::{ModelSpec, Violation};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub variant: Variant,
    pub grid: GridSpec,
    /// Stopping threshold on the weighted sup-norm of successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub bellman: BellmanOptions,
}

impl SolveOptions {
    pub fn new(spec: &ModelSpec, variant: Variant) -> Self {
        Self {
            variant,
            grid: GridSpec::default(),
            tol: 1e-8,
            max_iter: 500,
            bellman: BellmanOptions::for_spec(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub norm: f64,
    /// Largest increase of any node value over the previous iterate.
    pub max_monotonicity_violation: f64,
    pub max_kkt_residual: f64,
    pub inner_failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// All increases stayed within twice the inner tolerance.
    pub monotone: bool,
    pub max_monotonicity_violation: f64,
    pub max_kkt_residual: f64,
    pub inner_failures: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: DualValueField,
    /// Minimizing multipliers of the last sweep, indexed like field values.
    pub multipliers: Vec<Vec<f64>>,
    pub report: IterationReport,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("model is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<Violation>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Bellman(#[from] BellmanError),
}

/// Upper end of the multiplier grid: `4L/ε` with the Slater slack `ε`,
/// otherwise `10L/(1−β)`.
pub fn default_gamma_max(spec: &ModelSpec) -> f64 {
    let l = spec.lipschitz_bound();
    let g = match spec.slater_eps {
        Some(e) if e > 0.0 => 4.0 * l / e,
        _ => 10.0 * l / (1.0 - spec.beta),
    };
    if g > 0.0 {
        g
    } else {
        1.0
    }
}

/// Grid for `spec` under `grid`, resolving the default upper end.
pub fn build_grid(spec: &ModelSpec, grid: &GridSpec) -> Result<GammaGrid, GridError> {
    let gmax = grid.gamma_max.unwrap_or_else(|| default_gamma_max(spec));
    GammaGrid::build(spec.num_constraints(), gmax, grid)
}

/// The starting point `(1+Σγ)L` of the iteration.
pub fn init_affine_majorant(spec: &ModelSpec, grid: GammaGrid, variant: Variant) -> DualValueField {
    DualValueField::affine_majorant(spec, grid, variant)
}

/// Result of applying the operator at every active node.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub field: DualValueField,
    pub multipliers: Vec<Vec<f64>>,
    pub max_kkt_residual: f64,
    pub inner_failures: usize,
}

/// Applies the Bellman operator at every grid node of every `(x, s)` flagged
/// in `active`; other nodes keep their values. Nodes are independent and
/// evaluated in parallel.
pub fn sweep(
    spec: &ModelSpec,
    field: &DualValueField,
    active: &[bool],
    opts: &BellmanOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<Sweep, BellmanError> {
    let grid = field.grid();
    let n = grid.len();
    let ns = spec.num_shocks;
    let nodes: Vec<Vec<f64>> = (0..n).map(|k| grid.node(k)).collect();
    let work: Vec<usize> = (0..field.values().len()).filter(|idx| active[idx / n]).collect();
    let results: Vec<_> = work
        .par_iter()
        .map(|&idx| {
            let pair = idx / n;
            let w = warm.map(|w| w[idx].as_slice());
            bellman_apply(spec, field, &nodes[idx % n], pair / ns, pair % ns, opts, w).map(|o| (idx, o))
        })
        .collect::<Result<_, _>>()?;
    let mut next = field.clone();
    let mut multipliers = vec![vec![0.0; grid.dim()]; field.values().len()];
    let mut max_kkt: f64 = 0.0;
    let mut failures = 0;
    for (idx, out) in results {
        next.values_mut()[idx] = out.value;
        max_kkt = max_kkt.max(out.kkt_residual);
        failures += usize::from(!out.converged);
        multipliers[idx] = out.lambda;
    }
    Ok(Sweep {
        field: next,
        multipliers,
        max_kkt_residual: max_kkt,
        inner_failures: failures,
    })
}

/// Discrete analogue of the weighted norm on `(γ, x, s)`: weight
/// `2^-(s+1)·2^-(x+1)` per pair and `2^-k` per box `‖γ‖∞ ≤ k`, with the
/// boxes beyond the grid contributing the full-grid maximum.
pub fn weighted_distance(a: &DualValueField, b: &DualValueField, active: &[bool]) -> f64 {
    let grid = a.grid();
    let n = grid.len();
    let kmax = (0..grid.dim()).map(|d| grid.upper(d)).fold(0.0, f64::max).ceil().max(1.0) as usize;
    let linf: Vec<f64> = (0..n)
        .map(|k| grid.node(k).iter().fold(0.0f64, |m, v| m.max(*v)))
        .collect();
    let mut total = 0.0;
    for x in 0..a.num_states() {
        for s in 0..a.num_shocks() {
            if !active[x * a.num_shocks() + s] {
                continue;
            }
            let (va, vb) = (a.slice(x, s), b.slice(x, s));
            let mut per_box = vec![0.0f64; kmax + 1];
            for k in 0..n {
                let b = (linf[k].ceil() as usize).clamp(1, kmax);
                per_box[b] = per_box[b].max((va[k] - vb[k]).abs());
            }
            let mut running = 0.0f64;
            let mut acc = 0.0;
            for (k, m) in per_box.iter().enumerate().skip(1) {
                running = running.max(*m);
                acc += 0.5f64.powi(k as i32) * running;
            }
            acc += 0.5f64.powi(kmax as i32) * running;
            total += 0.5f64.powi(s as i32 + 1) * 0.5f64.powi(x as i32 + 1) * acc;
        }
    }
    total
}

/// `(x, s)` pairs reachable from the initial node, indexed `x·S + s`.
pub fn active_nodes(spec: &ModelSpec) -> Vec<bool> {
    spec.reachable()
}

/// Monotone iteration from the affine majorant until successive iterates
/// are within `opts.tol` in the weighted norm.
pub fn value_iterate(spec: &ModelSpec, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(SolveError::InvalidModel(violations));
    }
    let grid = build_grid(spec, &opts.grid)?;
    let start = init_affine_majorant(spec, grid, opts.variant);
    value_iterate_from(spec, start, opts)
}

/// Iteration from an arbitrary starting field.
pub fn value_iterate_from(spec: &ModelSpec, start: DualValueField, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let active = active_nodes(spec);
    let slack = 2.0 * opts.bellman.inner.tol;
    let mut report = IterationReport {
        monotone: true,
        ..Default::default()
    };
    let mut field = start;
    let mut warm: Option<Vec<Vec<f64>>> = None;
    for iter in 1..=opts.max_iter {
        let sw = sweep(spec, &field, &active, &opts.bellman, warm.as_deref())?;
        let viol = sw
            .field
            .values()
            .iter()
            .zip(field.values())
            .map(|(new, old)| new - old)
            .fold(0.0f64, f64::max);
        let norm = weighted_distance(&sw.field, &field, &active);
        report.records.push(IterationRecord {
            iter,
            norm,
            max_monotonicity_violation: viol,
            max_kkt_residual: sw.max_kkt_residual,
            inner_failures: sw.inner_failures,
        });
        report.max_monotonicity_violation = report.max_monotonicity_violation.max(viol);
        report.max_kkt_residual = report.max_kkt_residual.max(sw.max_kkt_residual);
        report.inner_failures += sw.inner_failures;
        report.monotone &= viol <= slack;
        field = sw.field;
        warm = Some(sw.multipliers);
        if norm < opts.tol {
            report.converged = true;
            break;
        }
    }
    Ok(Solution {
        field,
        multipliers: warm.unwrap_or_default(),
        report,
    })
}

/// Largest `|B(F) − F|` over active grid nodes.
pub fn fe_residual(spec: &ModelSpec, field: &DualValueField, opts: &BellmanOptions) -> Result<f64, BellmanError> {
    let active = active_nodes(spec);
    let sw = sweep(spec, field, &active, opts, None)?;
    Ok(sw
        .field
        .values()
        .iter()
        .zip(field.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
