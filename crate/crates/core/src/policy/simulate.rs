use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stage::{recover_stage, RecoverOptions, StageLottery};
use crate::dual_value::{DualValueField, Variant};
use crate::model::{Horizon, ModelError, ModelSpec};

/// Where simulated paths begin.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// Initial state and shock of the model with a slack promise.
    Initial,
    /// Given node and promise.
    At { x: usize, s: usize, promise: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub recover: RecoverOptions,
    /// Promises are rounded to multiples of this before stage recovery, and
    /// stages are cached per rounded promise.
    pub quantum: f64,
    /// Histories reached by fewer paths are not checked.
    pub min_group: usize,
    /// Absolute slack added to the statistical tolerance of group checks.
    pub abs_tol: f64,
    pub record_paths: bool,
    pub start: Start,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            horizon: 40,
            paths: 100_000,
            seed: 0,
            recover: RecoverOptions::default(),
            quantum: 1e-6,
            min_group: 100,
            abs_tol: 1e-2,
            record_paths: false,
            start: Start::Initial,
        }
    }
}

/// One period of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub path: usize,
    pub t: usize,
    pub x: usize,
    pub s: usize,
    pub action: usize,
    pub reward: f64,
    pub g: Vec<f64>,
    pub promise: Vec<f64>,
    /// `Σ_{n≤t} βⁿ rₙ` along the path.
    pub discounted_objective: f64,
}

impl PathRow {
    pub fn csv_header(dim: usize) -> String {
        let mut h = String::from("path_id,t,state,shock,action,reward");
        for i in 0..dim {
            h.push_str(&format!(",g{i}"));
        }
        for i in 0..dim {
            h.push_str(&format!(",promise{i}"));
        }
        h.push_str(",discounted_objective");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut line = format!("{},{},{},{},{},{}", self.path, self.t, self.x, self.s, self.action, self.reward);
        for v in self.g.iter().chain(&self.promise) {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{}", self.discounted_objective));
        line
    }
}

/// Sample check of one forward-looking constraint conditional on a history.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub t: usize,
    pub key: u64,
    pub constraint: usize,
    pub count: usize,
    /// Mean of realized constraint value minus threshold.
    pub mean_slack: f64,
    pub stderr: f64,
    pub tolerance: f64,
}

impl GroupCheck {
    pub fn passed(&self) -> bool {
        self.mean_slack >= -self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub paths: usize,
    pub horizon: usize,
    /// Mean of `Σ_{t<T} βᵗ r`.
    pub mean_objective: f64,
    pub stderr: f64,
    /// `D(0, x₀, s₀)` when starting from the initial node.
    pub field_value: Option<f64>,
    /// `βᵀ·L`, the effect of truncating after `T` periods.
    pub truncation_bound: f64,
    /// Mean and standard error of `Σ_{t<T} βᵗ gⁱ` per constraint.
    pub mean_discounted_g: Vec<f64>,
    pub stderr_discounted_g: Vec<f64>,
    pub groups: Vec<GroupCheck>,
    /// Number of (date, history) groups below the sample-size threshold.
    pub excluded_groups: usize,
    /// Distinct stages recovered.
    pub stages: usize,
    /// Stages whose multiplier iteration hit the box.
    pub boxed_stages: usize,
    pub rows: Vec<PathRow>,
}

impl SimulationReport {
    pub fn constraints_hold(&self) -> bool {
        self.groups.iter().all(GroupCheck::passed)
    }

    pub fn worst_group(&self) -> Option<&GroupCheck> {
        self.groups
            .iter()
            .min_by(|a, b| (a.mean_slack + a.tolerance).total_cmp(&(b.mean_slack + b.tolerance)))
    }
}

type StageKey = (usize, usize, Vec<i64>);

struct StageCache<'a> {
    spec: &'a ModelSpec,
    field: &'a DualValueField,
    opts: &'a SimulateOptions,
    map: RwLock<HashMap<StageKey, Arc<StageLottery>>>,
}

impl StageCache<'_> {
    fn get(&self, x: usize, s: usize, promise: &[f64]) -> Result<Arc<StageLottery>, ModelError> {
        let q = self.opts.quantum;
        let key: StageKey = (x, s, promise.iter().map(|p| (p / q).round() as i64).collect());
        if let Some(l) = self.map.read().expect("cache lock").get(&key) {
            return Ok(l.clone());
        }
        let rounded: Vec<f64> = key.2.iter().map(|k| *k as f64 * q).collect();
        let lot = Arc::new(recover_stage(self.spec, self.field, &rounded, x, s, &self.opts.recover)?);
        self.map.write().expect("cache lock").entry(key).or_insert_with(|| lot.clone());
        Ok(lot)
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

#[derive(Default)]
struct Acc {
    n: usize,
    sum: f64,
    sq: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = ((self.sq - self.n as f64 * m * m) / (self.n - 1) as f64).max(0.0);
        (var / self.n as f64).sqrt()
    }
}

struct PathOut {
    objective: f64,
    discounted_g: Vec<f64>,
    /// (t, key, constraint, slack)
    checks: Vec<(usize, u64, usize, f64)>,
    rows: Vec<PathRow>,
}

/// Simulates the chained lottery policy: each period draws an action from
/// the stage lottery at the current promise, then a shock, and carries the
/// promise attached to the realized pair. Constraints are checked
/// conditional on the history: before the current action for the inf-sup
/// form (ex ante) and including it for the sup-inf form (ex post).
pub fn simulate(spec: &ModelSpec, field: &DualValueField, opts: &SimulateOptions) -> Result<SimulationReport, ModelError> {
    let dim = spec.num_constraints();
    let horizon = opts.horizon;
    let beta = spec.beta;
    let (x0, s0, phi0) = match &opts.start {
        Start::Initial => (spec.initial_state, spec.initial_shock, super::initial_promise(spec)),
        Start::At { x, s, promise } => (*x, *s, promise.clone()),
    };
    let cache = StageCache {
        spec,
        field,
        opts,
        map: RwLock::new(HashMap::new()),
    };
    let ex_post = field.variant() == Variant::SupInf;
    let run_path = |path: usize| -> Result<PathOut, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(path as u64);
        let (mut x, mut s, mut phi) = (x0, s0, phi0.clone());
        let mut hist = DefaultHasher::new();
        let mut steps = Vec::with_capacity(horizon);
        let mut rows = Vec::new();
        let mut running = 0.0;
        for t in 0..horizon {
            s.hash(&mut hist);
            let before = hist.finish();
            let lot = cache.get(x, s, &phi)?;
            let j = draw(&mut rng, lot.probs.iter().copied());
            let a = lot.support[j];
            a.hash(&mut hist);
            let after = hist.finish();
            let g: Vec<f64> = (0..dim).map(|i| spec.constraint(i, x, a, s)).collect();
            let gbar: Vec<f64> = (0..dim).map(|i| spec.threshold(i, x, a, s)).collect();
            let r = spec.reward(x, a, s);
            running += beta.powi(t as i32) * r;
            if opts.record_paths {
                rows.push(PathRow {
                    path,
                    t,
                    x,
                    s,
                    action: a,
                    reward: r,
                    g: g.clone(),
                    promise: phi.clone(),
                    discounted_objective: running,
                });
            }
            steps.push((if ex_post { after } else { before }, r, g, gbar));
            let s2 = draw(&mut rng, (0..spec.num_shocks).map(|k| spec.prob(s, k)));
            phi = lot.promised[j][s2].clone();
            x = spec.next(x, a, s);
            s = s2;
        }
        let objective = steps.iter().rev().fold(0.0, |acc, st| st.1 + beta * acc);
        let mut tails = vec![0.0; dim];
        let mut checks = Vec::new();
        for t in (0..horizon).rev() {
            let (key, _, g, gbar) = &steps[t];
            for i in 0..dim {
                tails[i] = g[i] + beta * tails[i];
                let value = match spec.horizons[i] {
                    Horizon::Infinite => tails[i],
                    Horizon::Two if t + 1 < horizon => g[i] + beta * steps[t + 1].2[i],
                    Horizon::Two => continue,
                };
                checks.push((t, *key, i, value - gbar[i]));
            }
        }
        Ok(PathOut {
            objective,
            discounted_g: tails,
            checks,
            rows,
        })
    };
    let outs: Vec<PathOut> = (0..opts.paths).into_par_iter().map(run_path).collect::<Result<_, _>>()?;

    let mut obj = Acc::default();
    let mut gacc: Vec<Acc> = (0..dim).map(|_| Acc::default()).collect();
    let mut groups: HashMap<(usize, u64, usize), Acc> = HashMap::new();
    let mut rows = Vec::new();
    for o in outs {
        obj.push(o.objective);
        for i in 0..dim {
            gacc[i].push(o.discounted_g[i]);
        }
        for (t, key, i, v) in o.checks {
            groups.entry((t, key, i)).or_default().push(v);
        }
        rows.extend(o.rows);
    }
    let gmax = (0..dim)
        .map(|i| {
            let mut m: f64 = 0.0;
            for x in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    for s in 0..spec.num_shocks {
                        m = m.max(spec.constraint(i, x, a, s).abs());
                    }
                }
            }
            m
        })
        .collect::<Vec<_>>();
    let mut checks = Vec::new();
    let mut excluded = 0;
    let mut merged: Vec<_> = groups.into_iter().collect();
    merged.sort_by_key(|(k, _)| *k);
    for ((t, key, i), acc) in merged {
        if acc.n < opts.min_group {
            excluded += 1;
            continue;
        }
        let trunc = match spec.horizons[i] {
            Horizon::Infinite => beta.powi((horizon - t) as i32) * gmax[i] / (1.0 - beta),
            Horizon::Two => 0.0,
        };
        let se = acc.stderr();
        checks.push(GroupCheck {
            t,
            key,
            constraint: i,
            count: acc.n,
            mean_slack: acc.mean(),
            stderr: se,
            tolerance: 3.0 * se + trunc + opts.abs_tol,
        });
    }
    let map = cache.map.into_inner().expect("cache lock");
    Ok(SimulationReport {
        paths: opts.paths,
        horizon,
        mean_objective: obj.mean(),
        stderr: obj.stderr(),
        field_value: match opts.start {
            Start::Initial => Some(field.evaluate(&vec![0.0; dim], x0, s0)),
            Start::At { .. } => None,
        },
        truncation_bound: beta.powi(horizon as i32) * field.lipschitz(),
        mean_discounted_g: gacc.iter().map(Acc::mean).collect(),
        stderr_discounted_g: gacc.iter().map(Acc::stderr).collect(),
        groups: checks,
        excluded_groups: excluded,
        stages: map.len(),
        boxed_stages: map.values().filter(|l| l.box_exceeded).count(),
        rows,
    })
}
