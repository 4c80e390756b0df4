use crate::dual_value::{fd_step, multiplier_bound, DualValueField, Variant};
use crate::inner_solver::golden_section;
use crate::model::{Horizon, ModelError, ModelSpec};

/// Settings of the multiplier iteration that builds a stage lottery.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoverOptions {
    /// Number of subgradient iterations `N`.
    pub iterations: usize,
    /// Step scale: `σᵏ = σ₀/k`.
    pub sigma0: f64,
    /// Start from a minimizer of the stage objective instead of zero.
    pub warm_start: bool,
    /// Fraction of the iterations, counted from the start, left out of the
    /// lottery and promise averages.
    pub burn_in: f64,
    /// Relative forward-difference step for next-period promises,
    /// `h = fd_rel·(1+‖m‖∞)`.
    pub fd_rel: f64,
    pub tie_rel: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            sigma0: 1.0,
            warm_start: true,
            burn_in: 0.5,
            fd_rel: 1e-7,
            tie_rel: crate::inner_solver::TIE_REL,
        }
    }
}

/// Lottery over current actions plus promises for every (action, next shock).
#[derive(Debug, Clone, PartialEq)]
pub struct StageLottery {
    pub x: usize,
    pub s: usize,
    /// Promise the stage was built for.
    pub promise: Vec<f64>,
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
    /// `promised[j][s']` is `φ′(support[j], s′)`.
    pub promised: Vec<Vec<Vec<f64>>>,
    /// Final constraint multipliers, one vector per support action (all equal
    /// for the inf-sup form).
    pub lambda: Vec<Vec<f64>>,
    /// Final promise multiplier.
    pub mu: Vec<f64>,
    /// Minimizer of the stage objective used as the starting point, if any:
    /// `(λ, μ)` with `λ` per support action as above.
    pub reference: Option<(Vec<Vec<f64>>, Vec<f64>)>,
    /// Some iterate hit the multiplier box.
    pub box_exceeded: bool,
    pub iterations: usize,
}

impl StageLottery {
    /// Probability of `action`, zero outside the support.
    pub fn prob_of(&self, action: usize) -> f64 {
        self.support.iter().position(|a| *a == action).map_or(0.0, |j| self.probs[j])
    }
}

/// Per-action data of one stage.
struct StageData<'a> {
    spec: &'a ModelSpec,
    field: &'a DualValueField,
    s: usize,
    phi: &'a [f64],
    actions: Vec<usize>,
    reward: Vec<f64>,
    /// g per action, action-major.
    g: Vec<f64>,
    gbar: Vec<f64>,
    next: Vec<usize>,
    distinct_next: Vec<usize>,
    slot: Vec<usize>,
    dim: usize,
    fd_rel: f64,
}

impl<'a> StageData<'a> {
    fn new(
        spec: &'a ModelSpec,
        field: &'a DualValueField,
        phi: &'a [f64],
        x: usize,
        s: usize,
        fd_rel: f64,
    ) -> Result<Self, ModelError> {
        let actions = spec.feasible_actions(x, s)?;
        let dim = spec.num_constraints();
        let mut g = Vec::with_capacity(actions.len() * dim);
        let mut gbar = Vec::with_capacity(actions.len() * dim);
        for &a in &actions {
            for i in 0..dim {
                g.push(spec.constraint(i, x, a, s));
                gbar.push(spec.threshold(i, x, a, s));
            }
        }
        let next: Vec<usize> = actions.iter().map(|&a| spec.next(x, a, s)).collect();
        let mut distinct_next = Vec::new();
        let slot = next
            .iter()
            .map(|n| match distinct_next.iter().position(|d| d == n) {
                Some(p) => p,
                None => {
                    distinct_next.push(*n);
                    distinct_next.len() - 1
                }
            })
            .collect();
        Ok(Self {
            reward: actions.iter().map(|&a| spec.reward(x, a, s)).collect(),
            spec,
            field,
            s,
            phi,
            actions,
            g,
            gbar,
            next,
            distinct_next,
            slot,
            dim,
            fd_rel,
        })
    }

    fn ga(&self, j: usize) -> &[f64] {
        &self.g[j * self.dim..(j + 1) * self.dim]
    }

    fn gbar_a(&self, j: usize) -> &[f64] {
        &self.gbar[j * self.dim..(j + 1) * self.dim]
    }

    /// Multiplier passed to the continuation.
    fn carried(&self, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| match self.spec.horizons[i] {
                Horizon::Infinite => lambda[i] + mu[i],
                Horizon::Two => lambda[i],
            })
            .collect()
    }

    /// Continuation value `β E D(m, x', s')` and the per-shock forward
    /// difference subgradients of `D(m, x', ·)`.
    fn continuation(&self, m: &[f64], x2: usize, with_grad: bool) -> (f64, Vec<Vec<f64>>) {
        let eps = self.fd_rel * (1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let mut value = 0.0;
        let mut grads = Vec::new();
        for s2 in 0..self.spec.num_shocks {
            let p = self.spec.prob(self.s, s2);
            if p != 0.0 {
                value += p * self.field.evaluate(m, x2, s2);
            }
            if with_grad {
                grads.push(if p != 0.0 { self.field.subgradient(m, x2, s2, eps) } else { vec![0.0; self.dim] });
            }
        }
        (self.spec.beta * value, grads)
    }

    fn expected(&self, grads: &[Vec<f64>], i: usize) -> f64 {
        grads
            .iter()
            .enumerate()
            .map(|(s2, g)| self.spec.prob(self.s, s2) * g[i])
            .sum()
    }

    /// Affine part of the bracket of action `j`.
    fn affine(&self, j: usize, lambda: &[f64], mu: &[f64]) -> f64 {
        let (g, gb) = (self.ga(j), self.gbar_a(j));
        let mut v = self.reward[j];
        for i in 0..self.dim {
            v += lambda[i] * (g[i] - gb[i]) + mu[i] * (g[i] - self.phi[i]);
        }
        v
    }

    /// Subgradient rows `(λ-row, μ-row)` of action `j`.
    fn rows(&self, j: usize, grads: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (g, gb) = (self.ga(j), self.gbar_a(j));
        let beta = self.spec.beta;
        let mut lrow = vec![0.0; self.dim];
        let mut mrow = vec![0.0; self.dim];
        for i in 0..self.dim {
            let e = beta * self.expected(grads, i);
            lrow[i] = g[i] - gb[i] + e;
            mrow[i] = g[i] - self.phi[i]
                + match self.spec.horizons[i] {
                    Horizon::Infinite => e,
                    Horizon::Two => 0.0,
                };
        }
        (lrow, mrow)
    }

    /// Value of the inf-sup stage objective at `(λ, μ)`.
    fn objective(&self, lambda: &[f64], mu: &[f64]) -> f64 {
        let m = self.carried(lambda, mu);
        let cont: Vec<f64> = self.distinct_next.iter().map(|&x2| self.continuation(&m, x2, false).0).collect();
        (0..self.actions.len())
            .map(|j| self.affine(j, lambda, mu) + cont[self.slot[j]])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value of action `j`'s bracket at its own `λ` and shared `μ`.
    fn action_objective(&self, j: usize, lambda: &[f64], mu: &[f64]) -> f64 {
        let m = self.carried(lambda, mu);
        self.affine(j, lambda, mu) + self.continuation(&m, self.next[j], false).0
    }
}

/// Builds the stage lottery at `(x, s)` for promise `phi` with the
/// multiplier-free form of the subgradient iteration: at each step pick a
/// maximizing action, read next-period promises off the field by forward
/// differences, and take a projected step of size `σ₀/k` on `(λ, μ)`. The
/// lottery and promises are the step-weighted action frequencies and
/// conditional averages. The sup-inf form carries one `λ` per action.
pub fn recover_stage(
    spec: &ModelSpec,
    field: &DualValueField,
    phi: &[f64],
    x: usize,
    s: usize,
    opts: &RecoverOptions,
) -> Result<StageLottery, ModelError> {
    let data = StageData::new(spec, field, phi, x, s, opts.fd_rel)?;
    let dim = data.dim;
    let na = data.actions.len();
    let per_action = field.variant() == Variant::SupInf;
    let bound = multiplier_bound(spec, field, &vec![0.0; dim], x, s, spec.slater_eps);
    let reference = if opts.warm_start { Some(stage_minimizer(&data, per_action, bound)) } else { None };
    let (mut lambdas, mut mu) = match &reference {
        Some((l, m)) => (l.clone(), m.clone()),
        None => (vec![vec![0.0; dim]; if per_action { na } else { 1 }], vec![0.0; dim]),
    };
    let lam_index = |j: usize| if per_action { j } else { 0 };
    let mut weight = vec![0.0; na];
    let mut promised_sum = vec![vec![vec![0.0; dim]; spec.num_shocks]; na];
    let mut box_exceeded = false;
    let mut total = 0.0;
    let skip = ((opts.iterations as f64 * opts.burn_in.clamp(0.0, 1.0)) as usize).min(opts.iterations.saturating_sub(1));
    for k in 1..=opts.iterations {
        let sigma = opts.sigma0 / k as f64;
        // Bracket of every action with its continuation.
        let (values, grads_by_next): (Vec<f64>, Vec<Vec<Vec<f64>>>) = if per_action {
            let mut vals = Vec::with_capacity(na);
            for j in 0..na {
                let lam = &lambdas[j];
                let m = data.carried(lam, &mu);
                vals.push(data.affine(j, lam, &mu) + data.continuation(&m, data.next[j], false).0);
            }
            (vals, Vec::new())
        } else {
            let m = data.carried(&lambdas[0], &mu);
            let conts: Vec<(f64, Vec<Vec<f64>>)> =
                data.distinct_next.iter().map(|&x2| data.continuation(&m, x2, true)).collect();
            let vals = (0..na)
                .map(|j| data.affine(j, &lambdas[0], &mu) + conts[data.slot[j]].0)
                .collect();
            (vals, conts.into_iter().map(|c| c.1).collect())
        };
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie = opts.tie_rel * (1.0 + best.abs());
        // Among tied maximizers take the one with the shortest step.
        let mut pick: Option<(usize, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64)> = None;
        for j in (0..na).filter(|&j| values[j] >= best - tie) {
            let grads = if per_action {
                let m = data.carried(&lambdas[j], &mu);
                data.continuation(&m, data.next[j], true).1
            } else {
                grads_by_next[data.slot[j]].clone()
            };
            let (lrow, mrow) = data.rows(j, &grads);
            let norm: f64 = lrow.iter().chain(&mrow).map(|v| v * v).sum();
            if pick.as_ref().is_none_or(|p| norm < p.4) {
                pick = Some((j, grads, lrow, mrow, norm));
            }
        }
        let (j, grads, lrow, mrow, _) = pick.expect("nonempty feasible set");
        if k > skip {
            weight[j] += sigma;
            total += sigma;
            for (s2, g) in grads.iter().enumerate() {
                for i in 0..dim {
                    promised_sum[j][s2][i] += sigma * g[i];
                }
            }
        }
        let li = lam_index(j);
        for i in 0..dim {
            let l = (lambdas[li][i] - sigma * lrow[i]).max(0.0);
            let m = (mu[i] - sigma * mrow[i]).max(0.0);
            if l > bound || m > bound {
                box_exceeded = true;
            }
            lambdas[li][i] = l.min(bound);
            mu[i] = m.min(bound);
        }
    }
    let support: Vec<usize> = (0..na).filter(|&j| weight[j] > 0.0).collect();
    let promised = support
        .iter()
        .map(|&j| {
            promised_sum[j]
                .iter()
                .map(|v| v.iter().map(|t| t / weight[j]).collect())
                .collect()
        })
        .collect();
    let lambda_of = |l: &Vec<Vec<f64>>| support.iter().map(|&j| l[lam_index(j)].clone()).collect::<Vec<_>>();
    Ok(StageLottery {
        x,
        s,
        promise: phi.to_vec(),
        probs: support.iter().map(|&j| weight[j] / total).collect(),
        promised,
        lambda: lambda_of(&lambdas),
        mu,
        reference: reference.as_ref().map(|(l, m)| (lambda_of(l), m.clone())),
        support: support.iter().map(|&j| data.actions[j]).collect(),
        box_exceeded,
        iterations: opts.iterations,
    })
}

/// Minimizer of the stage objective over the multiplier box. One constraint
/// uses nested golden-section searches (outer `μ`, inner `λ`); more
/// constraints minimize over `λ` per coordinate with `μ` held at zero.
fn stage_minimizer(data: &StageData<'_>, per_action: bool, bound: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = data.dim;
    let na = data.actions.len();
    let tol = 1e-9 * (1.0 + bound);
    if dim == 1 {
        let inner_one = |j: usize, mu: f64| golden_min(|l| data.action_objective(j, &[l], &[mu]), 0.0, bound, tol);
        let inner_all = |mu: f64| golden_min(|l| data.objective(&[l], &[mu]), 0.0, bound, tol);
        let outer = |mu: f64| -> f64 {
            if per_action {
                (0..na).map(|j| inner_one(j, mu).1).fold(f64::NEG_INFINITY, f64::max)
            } else {
                inner_all(mu).1
            }
        };
        let (mu, _) = golden_min(outer, 0.0, bound, tol);
        let lambdas = if per_action {
            (0..na).map(|j| vec![inner_one(j, mu).0]).collect()
        } else {
            vec![vec![inner_all(mu).0]]
        };
        return (lambdas, vec![mu]);
    }
    let mu = vec![0.0; dim];
    let coord = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        let mut l = vec![0.0; dim];
        for _ in 0..4 {
            for i in 0..dim {
                let mut probe = l.clone();
                l[i] = golden_min(
                    |t| {
                        probe[i] = t;
                        f(&probe)
                    },
                    0.0,
                    bound,
                    tol,
                )
                .0;
            }
        }
        l
    };
    let lambdas = if per_action {
        (0..na).map(|j| coord(&|l| data.action_objective(j, l, &mu))).collect()
    } else {
        vec![coord(&|l| data.objective(l, &mu))]
    };
    (lambdas, mu)
}

fn golden_min(f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let r = golden_section(f, lo, hi, tol, 200);
    (r.x, r.fx)
}

/// Residuals of the convergence conditions for a stage lottery; all are
/// nonnegative and vanish for an exact solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageResiduals {
    /// Distance of the final multipliers from the reference minimizer.
    pub multiplier_distance: f64,
    /// Largest `ψ(a)·dist(φ′(a,s′), ∂D)` over support and next shocks.
    pub subdifferential: f64,
    /// Shortfall of delivered promise against `φ`.
    pub promise_shortfall: f64,
    /// Shortfall of the forward-looking constraint (per action, weighted by
    /// its probability, for the sup-inf form).
    pub constraint_shortfall: f64,
    /// `|⟨μ, delivered − φ⟩|`.
    pub promise_slackness: f64,
    /// `|⟨λ, delivered − ḡ⟩|`.
    pub constraint_slackness: f64,
}

impl StageResiduals {
    pub fn max(&self) -> f64 {
        [
            self.multiplier_distance,
            self.subdifferential,
            self.promise_shortfall,
            self.constraint_shortfall,
            self.promise_slackness,
            self.constraint_slackness,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.multiplier_distance,
            self.subdifferential,
            self.promise_shortfall,
            self.constraint_shortfall,
            self.promise_slackness,
            self.constraint_slackness,
        ]
    }
}

/// Evaluates the six convergence conditions for `lot`. The subdifferential
/// of the field at the carried multiplier is taken as the box between the
/// left slope at `m − δ` and the right slope at `m + δ` per coordinate.
pub fn check_stage(spec: &ModelSpec, field: &DualValueField, lot: &StageLottery, delta: f64) -> StageResiduals {
    let dim = spec.num_constraints();
    let (x, s) = (lot.x, lot.s);
    let beta = spec.beta;
    let mut r = StageResiduals::default();
    if let Some((lref, mref)) = &lot.reference {
        let mut d: f64 = 0.0;
        for (a, b) in lot.lambda.iter().flatten().zip(lref.iter().flatten()) {
            d = d.max((a - b).abs());
        }
        for (a, b) in lot.mu.iter().zip(mref) {
            d = d.max((a - b).abs());
        }
        r.multiplier_distance = d;
    }
    let per_action = field.variant() == Variant::SupInf;
    // Delivered value g + β E φ′ per support action (μ-form and λ-form).
    let mut delivered_mu = vec![0.0; dim];
    let mut delivered_lambda = vec![0.0; dim];
    let mut lambda_slack_sum = 0.0;
    let mut lambda_short: f64 = 0.0;
    for (j, &a) in lot.support.iter().enumerate() {
        let p = lot.probs[j];
        let x2 = spec.next(x, a, s);
        let carried: Vec<f64> = (0..dim)
            .map(|i| match spec.horizons[i] {
                Horizon::Infinite => lot.lambda[j][i] + lot.mu[i],
                Horizon::Two => lot.lambda[j][i],
            })
            .collect();
        let mut own = vec![0.0; dim];
        for i in 0..dim {
            let g = spec.constraint(i, x, a, s);
            let e: f64 = (0..spec.num_shocks).map(|s2| spec.prob(s, s2) * lot.promised[j][s2][i]).sum();
            delivered_mu[i] += p
                * (g + match spec.horizons[i] {
                    Horizon::Infinite => beta * e,
                    Horizon::Two => 0.0,
                });
            let v = g + beta * e - spec.threshold(i, x, a, s);
            delivered_lambda[i] += p * v;
            own[i] = v;
        }
        if per_action {
            for i in 0..dim {
                lambda_short = lambda_short.max(p * (-own[i]).max(0.0));
                lambda_slack_sum += p * (lot.lambda[j][i] * own[i]).abs();
            }
        }
        for s2 in 0..spec.num_shocks {
            if spec.prob(s, s2) == 0.0 {
                continue;
            }
            let mut dist: f64 = 0.0;
            for i in 0..dim {
                let mut lo_pt = carried.clone();
                lo_pt[i] = (carried[i] - delta).max(0.0);
                let mut hi_pt = carried.clone();
                hi_pt[i] = carried[i] + delta;
                let eps = fd_step(&carried);
                let right = field.subgradient(&hi_pt, x2, s2, eps)[i];
                let left = field.left_slope(&lo_pt, x2, s2, i, eps);
                let phi = lot.promised[j][s2][i];
                let d = if phi > right {
                    phi - right
                } else if phi < left {
                    left - phi
                } else {
                    0.0
                };
                dist = dist.max(d);
            }
            r.subdifferential = r.subdifferential.max(p * dist);
        }
    }
    for i in 0..dim {
        let dm = delivered_mu[i] - lot.promise[i];
        r.promise_shortfall = r.promise_shortfall.max((-dm).max(0.0));
        r.promise_slackness += (lot.mu[i] * dm).abs();
        if !per_action {
            r.constraint_shortfall = r.constraint_shortfall.max((-delivered_lambda[i]).max(0.0));
            r.constraint_slackness += (lot.lambda[0][i] * delivered_lambda[i]).abs();
        }
    }
    if per_action {
        r.constraint_shortfall = lambda_short;
        r.constraint_slackness = lambda_slack_sum;
    }
    r
}
