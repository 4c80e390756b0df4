use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use thiserror::Error;

use crate::model::{Horizon, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum LotteryOracleError {
    #[error("instance too large for the brute-force oracle ({0})")]
    TooLarge(String),
    #[error("constraints cannot be met even with lotteries")]
    Infeasible,
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("deterministic oracle supports two-period constraints only")]
    Unsupported,
}

/// History tree rooted at the initial node: every node is a history
/// `(s₀, a₀, …, sₜ)` and carries its physical state.
struct Tree {
    /// (depth, x, s) per node.
    nodes: Vec<(usize, usize, usize)>,
    /// children[node][a] lists (child node, shock) pairs.
    children: Vec<Vec<Vec<(usize, usize)>>>,
    actions: Vec<Vec<usize>>,
}

fn build_tree(spec: &ModelSpec, depth: usize) -> Tree {
    let mut t = Tree {
        nodes: vec![(0, spec.initial_state, spec.initial_shock)],
        children: Vec::new(),
        actions: Vec::new(),
    };
    let mut k = 0;
    while k < t.nodes.len() {
        let (d, x, s) = t.nodes[k];
        let acts = spec.feasible_actions(x, s).unwrap_or_default();
        let mut per_action = Vec::with_capacity(acts.len());
        for &a in &acts {
            let mut kids = Vec::new();
            if d < depth {
                let x2 = spec.next(x, a, s);
                for s2 in 0..spec.num_shocks {
                    if spec.prob(s, s2) > 0.0 {
                        kids.push((t.nodes.len(), s2));
                        t.nodes.push((d + 1, x2, s2));
                    }
                }
            }
            per_action.push(kids);
        }
        t.children.push(per_action);
        t.actions.push(acts);
        k += 1;
    }
    t
}

fn check_size(spec: &ModelSpec, horizon: usize) -> Result<(), LotteryOracleError> {
    if spec.num_actions > 4 || spec.num_shocks > 2 || horizon > 4 {
        return Err(LotteryOracleError::TooLarge(format!(
            "{} actions, {} shocks, horizon {horizon}; limits are 4, 2, 4",
            spec.num_actions, spec.num_shocks
        )));
    }
    Ok(())
}

/// Optimal value of the ex-ante statewise lottery problem truncated after
/// `horizon` periods, solved as a linear program over the history tree.
///
/// Variable `y(h, a)` is the probability of reaching history `h` and drawing
/// action `a` there. Decisions are made at dates `0..=horizon`; the
/// objective counts rewards at dates before `horizon`. Constraints are
/// imposed at every history before `horizon`: two-period constraints
/// exactly, infinite-horizon constraints on the discounted sum up to
/// `horizon`.
pub fn brute_force_lottery_value(spec: &ModelSpec, horizon: usize) -> Result<f64, LotteryOracleError> {
    check_size(spec, horizon)?;
    let tree = build_tree(spec, horizon);
    let beta = spec.beta;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let mut var = Vec::with_capacity(tree.nodes.len());
    for (k, &(d, x, s)) in tree.nodes.iter().enumerate() {
        let row: Vec<_> = tree.actions[k]
            .iter()
            .map(|&a| {
                let obj = if d < horizon { beta.powi(d as i32) * spec.reward(x, a, s) } else { 0.0 };
                lp.add_var(obj, (0.0, f64::INFINITY))
            })
            .collect();
        var.push(row);
    }
    // Probability flow.
    lp.add_constraint(var[0].iter().map(|v| (*v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for k in 0..tree.nodes.len() {
        let s = tree.nodes[k].2;
        for (j, kids) in tree.children[k].iter().enumerate() {
            for &(child, s2) in kids {
                let mut e = LinearExpr::empty();
                for v in &var[child] {
                    e.add(*v, 1.0);
                }
                e.add(var[k][j], -spec.prob(s, s2));
                lp.add_constraint(e, ComparisonOp::Eq, 0.0);
            }
        }
    }
    // Forward-looking constraints, scaled by the probability of the history.
    for i in 0..spec.num_constraints() {
        let reach = match spec.horizons[i] {
            Horizon::Two => 1,
            Horizon::Infinite => horizon,
        };
        for k in 0..tree.nodes.len() {
            let (d, x, s) = tree.nodes[k];
            if d >= horizon {
                continue;
            }
            let mut e = LinearExpr::empty();
            for (j, &a) in tree.actions[k].iter().enumerate() {
                e.add(var[k][j], spec.constraint(i, x, a, s) - spec.threshold(i, x, a, s));
            }
            // Descendants up to `reach` periods ahead.
            let mut frontier: Vec<usize> = tree.children[k].iter().flatten().map(|c| c.0).collect();
            let mut lag = 1;
            while lag <= reach && !frontier.is_empty() {
                let mut next = Vec::new();
                for &c in &frontier {
                    let (_, xc, sc) = tree.nodes[c];
                    for (j, &a) in tree.actions[c].iter().enumerate() {
                        e.add(var[c][j], beta.powi(lag as i32) * spec.constraint(i, xc, a, sc));
                    }
                    next.extend(tree.children[c].iter().flatten().map(|p| p.0));
                }
                frontier = next;
                lag += 1;
            }
            lp.add_constraint(e, ComparisonOp::Ge, 0.0);
        }
    }
    match lp.solve() {
        Ok(out) => match out.into_solution() {
            Ok(sol) => Ok(sol.objective()),
            Err(e) => Err(LotteryOracleError::Solver(format!("{e:?}"))),
        },
        Err(microlp::Error::Infeasible) => Err(LotteryOracleError::Infeasible),
        Err(e) => Err(LotteryOracleError::Solver(e.to_string())),
    }
}

/// Best lottery-free value of the same truncated problem, by dynamic
/// programming over the history tree. Requires two-period constraints.
pub fn best_deterministic_value(spec: &ModelSpec, horizon: usize) -> Result<f64, LotteryOracleError> {
    check_size(spec, horizon)?;
    if spec.horizons.iter().any(|h| *h != Horizon::Two) {
        return Err(LotteryOracleError::Unsupported);
    }
    let tree = build_tree(spec, horizon);
    let beta = spec.beta;
    // best[k][j]: value of the subtree at k when action j is taken there
    // (constraint at k included), NEG_INFINITY if impossible.
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
    for k in (0..tree.nodes.len()).rev() {
        let (d, x, s) = tree.nodes[k];
        best[k] = tree.actions[k]
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let own = if d < horizon { spec.reward(x, a, s) } else { 0.0 };
                let kids = &tree.children[k][j];
                if kids.is_empty() {
                    return own;
                }
                // Enumerate joint child actions; each child has at most 4.
                let sizes: Vec<usize> = kids.iter().map(|(c, _)| tree.actions[*c].len()).collect();
                let total: usize = sizes.iter().product();
                let mut top = f64::NEG_INFINITY;
                for code in 0..total {
                    let mut rem = code;
                    let pick: Vec<usize> = sizes
                        .iter()
                        .map(|n| {
                            let p = rem % n;
                            rem /= n;
                            p
                        })
                        .collect();
                    let ok = (0..spec.num_constraints()).all(|i| {
                        let nxt: f64 = kids
                            .iter()
                            .zip(&pick)
                            .map(|((c, s2), &p)| {
                                let (_, xc, sc) = tree.nodes[*c];
                                spec.prob(s, *s2) * spec.constraint(i, xc, tree.actions[*c][p], sc)
                            })
                            .sum();
                        d >= horizon
                            || spec.constraint(i, x, a, s) + beta * nxt >= spec.threshold(i, x, a, s) - 1e-12
                    });
                    if !ok {
                        continue;
                    }
                    let cont: f64 = kids
                        .iter()
                        .zip(&pick)
                        .map(|((c, s2), &p)| spec.prob(s, *s2) * best[*c][p])
                        .sum();
                    top = top.max(own + beta * cont);
                }
                top
            })
            .collect();
    }
    let v = best[0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LotteryOracleError::Infeasible)
    }
}
