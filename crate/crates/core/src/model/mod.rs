//! Problem instances: shocks, physical states, actions, payoff and
//! constraint tables, and the checks a model must pass before it is solved.

mod format;

use std::collections::VecDeque;
use std::fmt;

pub use format::{load_model, parse_model, render_model, save_model, ParseError};

/// Forward span of a constraint.
///
/// `Two` restricts the current and the next period (`N = 1`), `Infinite`
/// restricts the full discounted future (`N = ∞`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizon {
    Two,
    Infinite,
}

impl Horizon {
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::Two => "1",
            Horizon::Infinite => "inf",
        }
    }
}

/// A point in the nonnegative orthant of multiplier space.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierVector(Vec<f64>);

impl MultiplierVector {
    /// Builds a multiplier vector, rejecting negative or non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((i, &v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ModelError::InvalidMultiplier { index: i, value: v });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("no feasible action at state {x}, shock {s}")]
    EmptyFeasibleSet { x: usize, s: usize },
    #[error("index out of range: {what} = {index} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("multiplier entry {index} is {value}; entries must be finite and nonnegative")]
    InvalidMultiplier { index: usize, value: f64 },
}

/// A full problem instance.
///
/// All per-(state, action, shock) tables are stored row-major with the shock
/// index varying fastest: entry `(x, a, s)` lives at `(x * A + a) * S + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_shocks: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub beta: f64,
    /// Row-stochastic `S × S` matrix, `transition[s * S + s']`.
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    /// One table per constraint.
    pub constraints: Vec<Vec<f64>>,
    /// One table per constraint, same layout as `constraints`.
    pub thresholds: Vec<Vec<f64>>,
    pub horizons: Vec<Horizon>,
    pub feasible: Vec<bool>,
    pub next_state: Vec<usize>,
    pub initial_state: usize,
    pub initial_shock: usize,
    /// Uniform constraint slack of some feasible lottery, when known.
    pub slater_eps: Option<f64>,
}

impl ModelSpec {
    #[inline]
    pub fn index(&self, x: usize, a: usize, s: usize) -> usize {
        (x * self.num_actions + a) * self.num_shocks + s
    }

    pub fn table_len(&self) -> usize {
        self.num_states * self.num_actions * self.num_shocks
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    #[inline]
    pub fn reward(&self, x: usize, a: usize, s: usize) -> f64 {
        self.reward[self.index(x, a, s)]
    }

    #[inline]
    pub fn constraint(&self, i: usize, x: usize, a: usize, s: usize) -> f64 {
        self.constraints[i][self.index(x, a, s)]
    }

    #[inline]
    pub fn threshold(&self, i: usize, x: usize, a: usize, s: usize) -> f64 {
        self.thresholds[i][self.index(x, a, s)]
    }

    #[inline]
    pub fn is_feasible(&self, x: usize, a: usize, s: usize) -> bool {
        self.feasible[self.index(x, a, s)]
    }

    #[inline]
    pub fn next(&self, x: usize, a: usize, s: usize) -> usize {
        self.next_state[self.index(x, a, s)]
    }

    #[inline]
    pub fn prob(&self, s: usize, s_next: usize) -> f64 {
        self.transition[s * self.num_shocks + s_next]
    }

    /// `(max|r| + Σᵢ max|gᵢ|) / (1 − β)`.
    pub fn lipschitz_bound(&self) -> f64 {
        let sup = |t: &[f64]| t.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let total = sup(&self.reward) + self.constraints.iter().map(|g| sup(g)).sum::<f64>();
        total / (1.0 - self.beta)
    }

    /// Threshold value used to switch a constraint off at a node.
    pub fn slack_threshold(&self) -> f64 {
        -10.0 * self.lipschitz_bound()
    }

    /// Actions whose feasibility flag is set at `(x, s)`.
    pub fn feasible_actions(&self, x: usize, s: usize) -> Result<Vec<usize>, ModelError> {
        if x >= self.num_states {
            return Err(ModelError::IndexOutOfRange {
                what: "state",
                index: x,
                size: self.num_states,
            });
        }
        if s >= self.num_shocks {
            return Err(ModelError::IndexOutOfRange {
                what: "shock",
                index: s,
                size: self.num_shocks,
            });
        }
        let acts: Vec<usize> = (0..self.num_actions)
            .filter(|&a| self.is_feasible(x, a, s))
            .collect();
        if acts.is_empty() {
            Err(ModelError::EmptyFeasibleSet { x, s })
        } else {
            Ok(acts)
        }
    }

    /// Nodes `(x, s)` reachable from the initial node through feasible
    /// actions, as a mask indexed by `x * S + s`.
    ///
    /// Out-of-range successor indices are ignored here; `validate` reports
    /// them separately.
    pub fn reachable(&self) -> Vec<bool> {
        let (nx, ns) = (self.num_states, self.num_shocks);
        let mut seen = vec![false; nx * ns];
        if self.initial_state >= nx || self.initial_shock >= ns {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen[self.initial_state * ns + self.initial_shock] = true;
        queue.push_back((self.initial_state, self.initial_shock));
        while let Some((x, s)) = queue.pop_front() {
            for a in 0..self.num_actions {
                if !self.is_feasible(x, a, s) {
                    continue;
                }
                let xn = self.next(x, a, s);
                if xn >= nx {
                    continue;
                }
                for sn in 0..ns {
                    if !seen[xn * ns + sn] {
                        seen[xn * ns + sn] = true;
                        queue.push_back((xn, sn));
                    }
                }
            }
        }
        seen
    }

    /// Every violated model invariant. An empty list means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (nx, na, ns) = (self.num_states, self.num_actions, self.num_shocks);
        if nx == 0 || na == 0 || ns == 0 {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                format!("empty index set: states={nx}, actions={na}, shocks={ns}"),
            ));
            return out;
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            out.push(Violation::new(
                ViolationKind::Discount,
                format!("beta = {} is not inside (0, 1)", self.beta),
            ));
        }
        if self.transition.len() != ns * ns {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                format!("transition has {} entries, expected {}", self.transition.len(), ns * ns),
            ));
        } else {
            for s in 0..ns {
                let row = &self.transition[s * ns..(s + 1) * ns];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    out.push(Violation::new(
                        ViolationKind::Transition,
                        format!("transition row {s} sums to {sum}"),
                    ));
                }
                if let Some(sn) = row.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
                    out.push(Violation::new(
                        ViolationKind::Transition,
                        format!("transition[{s}][{sn}] = {} is not strictly positive", row[sn]),
                    ));
                }
            }
        }
        let len = self.table_len();
        let ni = self.constraints.len();
        if ni == 0 {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                "at least one constraint is required".to_string(),
            ));
        }
        if self.thresholds.len() != ni || self.horizons.len() != ni {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                format!(
                    "{ni} constraints but {} thresholds and {} horizons",
                    self.thresholds.len(),
                    self.horizons.len()
                ),
            ));
        }
        let mut tables: Vec<(String, &[f64])> = vec![("reward".into(), &self.reward)];
        for (i, g) in self.constraints.iter().enumerate() {
            tables.push((format!("constraint {}", i + 1), g));
        }
        for (i, g) in self.thresholds.iter().enumerate() {
            tables.push((format!("threshold {}", i + 1), g));
        }
        for (name, t) in &tables {
            if t.len() != len {
                out.push(Violation::new(
                    ViolationKind::Dimensions,
                    format!("{name} has {} entries, expected {len}", t.len()),
                ));
            } else if let Some(k) = t.iter().position(|v| !v.is_finite()) {
                let (x, a, s) = self.unindex(k);
                out.push(Violation::new(
                    ViolationKind::NonFinite,
                    format!("{name} at (x={x}, a={a}, s={s}) is {}", t[k]),
                ));
            }
        }
        if self.feasible.len() != len || self.next_state.len() != len {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                format!(
                    "feasible/zeta tables have {}/{} entries, expected {len}",
                    self.feasible.len(),
                    self.next_state.len()
                ),
            ));
            return out;
        }
        for (k, &xn) in self.next_state.iter().enumerate() {
            if xn >= nx {
                let (x, a, s) = self.unindex(k);
                out.push(Violation::new(
                    ViolationKind::NextState,
                    format!("zeta(x={x}, a={a}, s={s}) = {xn} is outside 0..{nx}"),
                ));
            }
        }
        if self.initial_state >= nx || self.initial_shock >= ns {
            out.push(Violation::new(
                ViolationKind::Dimensions,
                format!(
                    "initial node (x={}, s={}) is out of range",
                    self.initial_state, self.initial_shock
                ),
            ));
            return out;
        }
        if let Some(eps) = self.slater_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                out.push(Violation::new(
                    ViolationKind::Dimensions,
                    format!("slater_eps = {eps} must be positive"),
                ));
            }
        }
        let reach = self.reachable();
        for x in 0..nx {
            for s in 0..ns {
                if reach[x * ns + s] && self.feasible_actions(x, s).is_err() {
                    out.push(Violation::new(
                        ViolationKind::NoFeasiblePoint,
                        format!(
                            "reachable node (x={x}, s={s}) has no feasible action, so no feasible \
                             continuation exists from the initial node"
                        ),
                    ));
                }
            }
        }
        out
    }

    fn unindex(&self, k: usize) -> (usize, usize, usize) {
        let s = k % self.num_shocks;
        let rest = k / self.num_shocks;
        (rest / self.num_actions, rest % self.num_actions, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimensions,
    Transition,
    Discount,
    NonFinite,
    NextState,
    /// A reachable node admits no feasible continuation.
    NoFeasiblePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: String) -> Self {
        Self { kind, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Builder for small hand-written models; broadcasts scalars to full tables.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    spec: ModelSpec,
}

impl ModelBuilder {
    /// All tables zero, everything feasible, every successor state 0,
    /// one constraint with infinite horizon and i.i.d. uniform shocks.
    pub fn new(num_states: usize, num_actions: usize, num_shocks: usize, beta: f64) -> Self {
        let len = num_states * num_actions * num_shocks;
        let p = 1.0 / num_shocks as f64;
        Self {
            spec: ModelSpec {
                num_shocks,
                num_states,
                num_actions,
                beta,
                transition: vec![p; num_shocks * num_shocks],
                reward: vec![0.0; len],
                constraints: vec![vec![0.0; len]],
                thresholds: vec![vec![0.0; len]],
                horizons: vec![Horizon::Infinite],
                feasible: vec![true; len],
                next_state: vec![0; len],
                initial_state: 0,
                initial_shock: 0,
                slater_eps: None,
            },
        }
    }

    pub fn constraints(mut self, count: usize) -> Self {
        let len = self.spec.table_len();
        self.spec.constraints = vec![vec![0.0; len]; count];
        self.spec.thresholds = vec![vec![0.0; len]; count];
        self.spec.horizons = vec![Horizon::Infinite; count];
        self
    }

    pub fn transition(mut self, rows: Vec<f64>) -> Self {
        self.spec.transition = rows;
        self
    }

    pub fn reward_fn(mut self, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        self.fill(|spec, k, x, a, s| spec.reward[k] = f(x, a, s));
        self
    }

    pub fn constraint_fn(mut self, i: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        self.fill(|spec, k, x, a, s| spec.constraints[i][k] = f(x, a, s));
        self
    }

    pub fn threshold_fn(mut self, i: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        self.fill(|spec, k, x, a, s| spec.thresholds[i][k] = f(x, a, s));
        self
    }

    pub fn feasible_fn(mut self, f: impl Fn(usize, usize, usize) -> bool) -> Self {
        self.fill(|spec, k, x, a, s| spec.feasible[k] = f(x, a, s));
        self
    }

    pub fn next_fn(mut self, f: impl Fn(usize, usize, usize) -> usize) -> Self {
        self.fill(|spec, k, x, a, s| spec.next_state[k] = f(x, a, s));
        self
    }

    pub fn horizon(mut self, i: usize, h: Horizon) -> Self {
        self.spec.horizons[i] = h;
        self
    }

    pub fn initial(mut self, x: usize, s: usize) -> Self {
        self.spec.initial_state = x;
        self.spec.initial_shock = s;
        self
    }

    pub fn slater_eps(mut self, eps: f64) -> Self {
        self.spec.slater_eps = Some(eps);
        self
    }

    pub fn build(self) -> ModelSpec {
        self.spec
    }

    fn fill(&mut self, mut f: impl FnMut(&mut ModelSpec, usize, usize, usize, usize)) {
        for x in 0..self.spec.num_states {
            for a in 0..self.spec.num_actions {
                for s in 0..self.spec.num_shocks {
                    let k = self.spec.index(x, a, s);
                    f(&mut self.spec, k, x, a, s);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> ModelSpec {
        ModelBuilder::new(1, 1, 1, 0.5).build()
    }

    #[test]
    fn degenerate_model_is_valid() {
        assert!(trivial().validate().is_empty());
    }

    #[test]
    fn short_transition_row_is_reported() {
        let mut m = ModelBuilder::new(1, 1, 2, 0.5).build();
        m.transition = vec![0.5, 0.4, 0.5, 0.5];
        let v = m.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::Transition);
        assert!(v[0].message.contains("row 0"));
    }

    #[test]
    fn dead_end_state_is_reported() {
        // State 1 has no feasible action and is entered from state 0.
        let m = ModelBuilder::new(2, 2, 1, 0.5)
            .feasible_fn(|x, _, _| x == 0)
            .next_fn(|_, a, _| a)
            .build();
        let v = m.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::NoFeasiblePoint);
        assert!(v[0].message.contains("x=1"));

        // Same model, but the dead end is never entered.
        let ok = ModelBuilder::new(2, 2, 1, 0.5)
            .feasible_fn(|x, _, _| x == 0)
            .build();
        assert!(ok.validate().is_empty());
        assert_eq!(ok.reachable(), vec![true, false]);
    }

    #[test]
    fn other_violations() {
        let mut m = trivial();
        m.beta = 1.0;
        m.reward[0] = f64::NAN;
        m.next_state[0] = 3;
        let kinds: Vec<_> = m.validate().into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::Discount));
        assert!(kinds.contains(&ViolationKind::NonFinite));
        assert!(kinds.contains(&ViolationKind::NextState));
    }

    #[test]
    fn lipschitz_bound_values() {
        let m = ModelBuilder::new(1, 1, 1, 0.5)
            .reward_fn(|_, _, _| 1.0)
            .constraint_fn(0, |_, _, _| 1.0)
            .build();
        assert_eq!(m.lipschitz_bound(), 4.0);
        let z = ModelBuilder::new(1, 1, 1, 0.9).build();
        assert_eq!(z.lipschitz_bound(), 0.0);
    }

    #[test]
    fn lipschitz_bound_on_unit_consumption_grid() {
        // r = l - c, g = sqrt(c) - sqrt(l) on c in [0, 1], l in {0, 1}.
        let cs: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let na = 2 * cs.len();
        let c_of = |a: usize| cs[a % cs.len()];
        let l_of = |a: usize| (a / cs.len()) as f64;
        let m = ModelBuilder::new(1, na, 1, 0.4)
            .reward_fn(|_, a, _| l_of(a) - c_of(a))
            .constraint_fn(0, |_, a, _| c_of(a).sqrt() - l_of(a).sqrt())
            .build();
        assert!((m.lipschitz_bound() - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn feasible_action_lists() {
        let m = ModelBuilder::new(1, 3, 1, 0.5).build();
        assert_eq!(m.feasible_actions(0, 0).unwrap(), vec![0, 1, 2]);
        let m = ModelBuilder::new(1, 3, 1, 0.5)
            .feasible_fn(|_, a, _| a != 0)
            .build();
        assert_eq!(m.feasible_actions(0, 0).unwrap(), vec![1, 2]);
        let m = ModelBuilder::new(1, 2, 1, 0.5).feasible_fn(|_, _, _| false).build();
        assert_eq!(
            m.feasible_actions(0, 0),
            Err(ModelError::EmptyFeasibleSet { x: 0, s: 0 })
        );
        assert!(m.feasible_actions(4, 0).is_err());
    }

    #[test]
    fn multiplier_vector_rejects_negative() {
        assert!(MultiplierVector::new(vec![0.0, 1.5]).is_ok());
        assert!(MultiplierVector::new(vec![-0.1]).is_err());
        assert!(MultiplierVector::new(vec![f64::INFINITY]).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn lipschitz_bound_ignores_action_order(
            rewards in proptest::collection::vec(-5.0f64..5.0, 4),
            gs in proptest::collection::vec(-5.0f64..5.0, 4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let base = ModelBuilder::new(1, 4, 1, 0.7)
                .reward_fn(|_, a, _| rewards[a])
                .constraint_fn(0, |_, a, _| gs[a])
                .build();
            let permuted = ModelBuilder::new(1, 4, 1, 0.7)
                .reward_fn(|_, a, _| rewards[perm[a]])
                .constraint_fn(0, |_, a, _| gs[perm[a]])
                .build();
            prop_assert_eq!(base.lipschitz_bound(), permuted.lipschitz_bound());
        }
    }
}
