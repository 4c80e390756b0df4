use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::field::FeasiblePayoff;
use crate::model::{Horizon, ModelSpec};

/// Default number of stationary policies examined for minorants.
pub const POLICY_BUDGET: usize = 1_000_000;

const FEAS_TOL: f64 = 1e-10;

/// Payoff vectors of feasible stationary deterministic policies, one per
/// start node reachable from the initial node. All policies are enumerated
/// when there are at most `budget` of them; otherwise `budget` policies are
/// drawn with a seeded generator.
pub fn feasible_stationary_payoffs(spec: &ModelSpec, budget: usize, seed: u64) -> Vec<FeasiblePayoff> {
    let ns = spec.num_shocks;
    let reach = spec.reachable();
    let nodes: Vec<usize> = (0..reach.len()).filter(|&n| reach[n]).collect();
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
    for &n in &nodes {
        match spec.feasible_actions(n / ns, n % ns) {
            Ok(a) => choices.push(a),
            Err(_) => return Vec::new(),
        }
    }
    let total = choices
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
        .filter(|t| *t <= budget);
    let count = total.unwrap_or(budget);
    let mut found: Vec<FeasiblePayoff> = (0..count)
        .into_par_iter()
        .flat_map_iter(|k| {
            let policy: Vec<usize> = match total {
                Some(_) => decode(k, &choices),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(k as u64);
                    choices.iter().map(|c| c[rng.random_range(0..c.len())]).collect()
                }
            };
            evaluate_policy(spec, &nodes, &policy)
        })
        .collect();
    found.sort_by(|a, b| {
        (a.x, a.s)
            .cmp(&(b.x, b.s))
            .then(a.v0.total_cmp(&b.v0))
            .then_with(|| a.v.iter().zip(&b.v).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });
    found.dedup();
    found
}

fn decode(mut k: usize, choices: &[Vec<usize>]) -> Vec<usize> {
    choices
        .iter()
        .map(|c| {
            let a = c[k % c.len()];
            k /= c.len();
            a
        })
        .collect()
}

/// Values of reward and constraints under the policy, then the feasible roots.
fn evaluate_policy(spec: &ModelSpec, nodes: &[usize], policy: &[usize]) -> Vec<FeasiblePayoff> {
    let ns = spec.num_shocks;
    let dim = spec.num_constraints();
    let slot = |n: usize| nodes.binary_search(&n).expect("reachable set is closed");
    let succ: Vec<usize> = nodes.iter().zip(policy).map(|(&n, &a)| spec.next(n / ns, a, n % ns)).collect();
    let next_slot = |j: usize, s2: usize| slot(succ[j] * ns + s2);
    let solve = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut v = vec![0.0; nodes.len()];
        let sweeps = ((1e-15f64).ln() / spec.beta.max(1e-300).ln()).ceil().clamp(1.0, 20_000.0) as usize;
        for _ in 0..sweeps {
            let mut delta: f64 = 0.0;
            let nv: Vec<f64> = (0..nodes.len())
                .map(|j| {
                    let s = nodes[j] % ns;
                    let cont: f64 = (0..ns)
                        .filter(|&s2| spec.prob(s, s2) != 0.0)
                        .map(|s2| spec.prob(s, s2) * v[next_slot(j, s2)])
                        .sum();
                    f(j) + spec.beta * cont
                })
                .collect();
            for (a, b) in nv.iter().zip(&v) {
                delta = delta.max((a - b).abs());
            }
            v = nv;
            if delta == 0.0 {
                break;
            }
        }
        v
    };
    let at = |j: usize| (nodes[j] / ns, policy[j], nodes[j] % ns);
    let vr = solve(&|j| {
        let (x, a, s) = at(j);
        spec.reward(x, a, s)
    });
    let vg: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            solve(&|j| {
                let (x, a, s) = at(j);
                spec.constraint(i, x, a, s)
            })
        })
        .collect();
    // Constraint satisfaction at each node under the policy.
    let ok: Vec<bool> = (0..nodes.len())
        .map(|j| {
            let (x, a, s) = at(j);
            (0..dim).all(|i| {
                let lhs = match spec.horizons[i] {
                    Horizon::Infinite => vg[i][j],
                    Horizon::Two => {
                        let nxt: f64 = (0..ns)
                            .map(|s2| {
                                let p = spec.prob(s, s2);
                                if p == 0.0 {
                                    return 0.0;
                                }
                                let k = next_slot(j, s2);
                                let (x2, a2, s2) = at(k);
                                p * spec.constraint(i, x2, a2, s2)
                            })
                            .sum();
                        spec.constraint(i, x, a, s) + spec.beta * nxt
                    }
                };
                lhs >= spec.threshold(i, x, a, s) - FEAS_TOL
            })
        })
        .collect();
    let mut out = Vec::new();
    for root in 0..nodes.len() {
        // Every node reachable from root under the policy must be satisfied.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut feasible = true;
        while let Some(j) = stack.pop() {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if !ok[j] {
                feasible = false;
                break;
            }
            let s = nodes[j] % ns;
            for s2 in 0..ns {
                if spec.prob(s, s2) != 0.0 {
                    stack.push(next_slot(j, s2));
                }
            }
        }
        if feasible {
            let (x, a, s) = at(root);
            out.push(FeasiblePayoff {
                x,
                s,
                v0: vr[root],
                v: (0..dim)
                    .map(|i| match spec.horizons[i] {
                        Horizon::Infinite => vg[i][root],
                        Horizon::Two => spec.constraint(i, x, a, s),
                    })
                    .collect(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    #[test]
    fn single_action_payoff_is_geometric() {
        let spec = ModelBuilder::new(1, 1, 1, 0.5)
            .reward_fn(|_, _, _| 1.0)
            .constraint_fn(0, |_, _, _| 1.0)
            .threshold_fn(0, |_, _, _| 0.0)
            .build();
        let p = feasible_stationary_payoffs(&spec, 10, 0);
        assert_eq!(p.len(), 1);
        assert!((p[0].v0 - 2.0).abs() < 1e-12);
        assert!((p[0].v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_policies_are_dropped() {
        // a=1 violates g ≥ 1 forever; only a=0 survives.
        let spec = ModelBuilder::new(1, 2, 1, 0.5)
            .reward_fn(|_, a, _| a as f64)
            .constraint_fn(0, |_, a, _| 1.0 - a as f64)
            .threshold_fn(0, |_, _, _| 1.0)
            .build();
        let p = feasible_stationary_payoffs(&spec, 10, 0);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].v0, 0.0);
    }

    #[test]
    fn sampling_is_seeded() {
        let spec = ModelBuilder::new(2, 3, 2, 0.5)
            .reward_fn(|x, a, s| (x + a + s) as f64 * 0.1)
            .constraint_fn(0, |_, a, _| a as f64)
            .threshold_fn(0, |_, _, _| 0.0)
            .next_fn(|_, a, _| a % 2)
            .build();
        let a = feasible_stationary_payoffs(&spec, 7, 3);
        let b = feasible_stationary_payoffs(&spec, 7, 3);
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }
}
