//! Closed-form reference values for the two introductory examples, the
//! discretized models that encode them, and brute-force oracles for tiny
//! instances.
//!
//! Nothing here calls into the iterative solver; the formulas are written out
//! independently so they can check it.

mod lottery;

pub use lottery::{best_deterministic_value, brute_force_lottery_value, LotteryOracleError};

use thiserror::Error;

use crate::model::{ModelBuilder, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("beta = {0} outside (0, 1/2)")]
    BetaRange(f64),
    #[error("no beta < 1/2 satisfies 1 - beta/2 = sigma^(sigma/(1-sigma)) for sigma = {0}")]
    NoDiscount(f64),
    #[error("sigma = {0} outside (0, 1)")]
    SigmaRange(f64),
    #[error("consumption grid is missing required point {0}")]
    MissingGridPoint(f64),
}

/// Continuation value of the first example with `σ = ½`.
pub fn example1_w(gamma: f64, beta: f64) -> f64 {
    if gamma <= 1.0 {
        (1.0 - gamma + gamma * gamma / 4.0) / (1.0 - beta)
    } else {
        gamma * gamma / (4.0 * (1.0 - beta))
    }
}

/// Lottery-free, ex-post and ex-ante values of the first example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Values {
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
}

pub fn example1_values(beta: f64) -> Result<Example1Values, OracleError> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(OracleError::BetaRange(beta));
    }
    Ok(Example1Values {
        v0: beta,
        v1: beta,
        v2: 0.25 / (1.0 - beta),
    })
}

/// Closed-form data of the second example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2Solution {
    pub sigma: f64,
    pub beta: f64,
    /// Constant consumption of the lottery solution, `σ^{1/(1−σ)}`.
    pub c_star: f64,
    pub value: f64,
    /// Multiplier of the saddle point.
    pub saddle_gamma: f64,
}

impl Example2Solution {
    /// Continuation value `W(γ)`.
    pub fn w(&self, gamma: f64) -> f64 {
        let s = self.sigma;
        let k = s.powf(s / (1.0 - s)) - self.c_star;
        let core = k * gamma.powf(1.0 / (1.0 - s));
        let lin = if gamma <= 1.0 { 1.0 - gamma } else { 0.0 };
        (core + lin) / (1.0 - self.beta)
    }

    /// Lottery-free payoff with discounted labor `X` and the cheapest
    /// constant consumption meeting the participation constraint.
    pub fn deterministic_payoff(&self, x: f64) -> f64 {
        let b = self.beta;
        x - ((1.0 - b) * x).powf(1.0 / self.sigma) / (1.0 - b)
    }

    /// Discounted labor at which the payoff bound is attained.
    pub fn critical_labor(&self) -> f64 {
        (1.0 - self.beta / 2.0) / (1.0 - self.beta)
    }
}

pub fn example2_solve(sigma: f64) -> Result<Example2Solution, OracleError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(OracleError::SigmaRange(sigma));
    }
    let beta = 2.0 * (1.0 - sigma.powf(sigma / (1.0 - sigma)));
    if !(beta > 0.0 && beta < 0.5) {
        return Err(OracleError::NoDiscount(sigma));
    }
    let c_star = sigma.powf(1.0 / (1.0 - sigma));
    Ok(Example2Solution {
        sigma,
        beta,
        c_star,
        value: (1.0 - beta / 2.0 - c_star) / (1.0 - beta),
        saddle_gamma: 1.0,
    })
}

/// Outcome of the exhaustive lottery-free scan of the second example.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicScan {
    pub length: usize,
    /// Best payoff over binary labor prefixes followed by zero labor.
    pub best_prefix_value: f64,
    /// `β^len·L` with the model's Lipschitz constant.
    pub tail_bound: f64,
    /// Best payoff over all binary sequences sharing a scanned prefix,
    /// bounded by maximizing the concave payoff over the interval of
    /// discounted labor the prefix allows.
    pub interval_bound: f64,
    pub value: f64,
}

impl DeterministicScan {
    /// `V − (best prefix + tail bound)`.
    pub fn tail_margin(&self) -> f64 {
        self.value - (self.best_prefix_value + self.tail_bound)
    }

    /// `V − interval bound`.
    pub fn interval_margin(&self) -> f64 {
        self.value - self.interval_bound
    }
}

/// Scans all binary labor sequences of length `len` for the second example.
pub fn example2_deterministic_scan(sigma: f64, len: usize, lipschitz: f64) -> Result<DeterministicScan, OracleError> {
    let sol = example2_solve(sigma)?;
    let b = sol.beta;
    let tail_mass = b.powi(len as i32) / (1.0 - b);
    let xc = sol.critical_labor();
    let mut best_prefix = f64::NEG_INFINITY;
    let mut best_interval = f64::NEG_INFINITY;
    for bits in 0u64..(1u64 << len) {
        let x: f64 = (0..len).filter(|t| bits >> t & 1 == 1).map(|t| b.powi(t as i32)).sum();
        best_prefix = best_prefix.max(sol.deterministic_payoff(x));
        // The payoff is concave in X; maximize it over [x, x + tail_mass].
        let hi = x + tail_mass;
        let top = if xc < x {
            sol.deterministic_payoff(x)
        } else if xc > hi {
            sol.deterministic_payoff(hi)
        } else {
            sol.deterministic_payoff(xc)
        };
        best_interval = best_interval.max(top);
    }
    Ok(DeterministicScan {
        length: len,
        best_prefix_value: best_prefix,
        tail_bound: b.powi(len as i32) * lipschitz,
        interval_bound: best_interval,
        value: sol.value,
    })
}

/// Default consumption grid of the first example: `√c = k/100` for
/// `k = 0..=150`, plus `(1−β)²`.
pub fn example1_c_grid(beta: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=150).map(|k| (k as f64 / 100.0).powi(2)).collect();
    g.push((1.0 - beta).powi(2));
    tidy(g)
}

/// Default consumption grid of the second example: zero plus `c*·1.05^k`
/// for `k = −80..=60`.
pub fn example2_c_grid(sigma: f64) -> Vec<f64> {
    let c_star = sigma.powf(1.0 / (1.0 - sigma));
    let mut g = vec![0.0];
    g.extend((-80..=60).map(|k| c_star * 1.05f64.powi(k)));
    tidy(g)
}

fn tidy(mut g: Vec<f64>) -> Vec<f64> {
    g.sort_by(f64::total_cmp);
    g.dedup_by(|b, a| (*b - *a).abs() <= 1e-12);
    g
}

fn require(grid: &[f64], point: f64) -> Result<(), OracleError> {
    if grid.iter().any(|c| (c - point).abs() <= 1e-12) {
        Ok(())
    } else {
        Err(OracleError::MissingGridPoint(point))
    }
}

/// Two physical states (0 = before the contract, 1 = continuing), one shock,
/// actions `(c, l)` with `l ∈ {0, 1}` encoded as `a = 2·k + l` for grid
/// index `k`. The participation constraint binds only in state 0.
fn two_state_model(beta: f64, c_grid: &[f64], utility: impl Fn(f64) -> f64) -> ModelSpec {
    let na = 2 * c_grid.len();
    let c = |a: usize| c_grid[a / 2];
    let l = |a: usize| (a % 2) as f64;
    let mut spec = ModelBuilder::new(2, na, 1, beta)
        .reward_fn(|_, a, _| l(a) - c(a))
        .constraint_fn(0, |_, a, _| utility(c(a)) - utility(l(a)))
        .next_fn(|_, _, _| 1)
        .initial(0, 0)
        .build();
    let slack = spec.slack_threshold();
    for a in 0..na {
        let k = spec.index(1, a, 0);
        spec.thresholds[0][k] = slack;
    }
    // Highest consumption with no labor keeps the constraint slack by at
    // least its per-period utility.
    let top = c_grid.iter().copied().fold(0.0, f64::max);
    spec.slater_eps = Some(utility(top).min(1.0));
    spec
}

/// Discretized first example. The grid must contain `¼` and `(1−β)²`.
pub fn build_example1(beta: f64, c_grid: &[f64]) -> Result<ModelSpec, OracleError> {
    example1_values(beta)?;
    require(c_grid, 0.25)?;
    require(c_grid, (1.0 - beta).powi(2))?;
    Ok(two_state_model(beta, c_grid, f64::sqrt))
}

/// Discretized second example. The grid must contain `σ^{1/(1−σ)}`.
pub fn build_example2(sigma: f64, c_grid: &[f64]) -> Result<ModelSpec, OracleError> {
    let sol = example2_solve(sigma)?;
    require(c_grid, sol.c_star)?;
    Ok(two_state_model(sol.beta, c_grid, move |v| v.powf(sigma)))
}

/// Consumption and labor of action `a` in an example model.
pub fn example_action(c_grid: &[f64], a: usize) -> (f64, f64) {
    (c_grid[a / 2], (a % 2) as f64)
}

/// Index of the action `(c, l)` in an example model.
pub fn example_action_index(c_grid: &[f64], c: f64, l: u8) -> Option<usize> {
    c_grid.iter().position(|v| (v - c).abs() <= 1e-12).map(|k| 2 * k + l as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w_formula_values() {
        let b = 0.4;
        assert!((example1_w(0.0, b) - 1.0 / 0.6).abs() < 1e-15);
        assert!((example1_w(1.0, b) - 0.25 / 0.6).abs() < 1e-15);
        assert!((example1_w(2.0, b) - 1.0 / 0.6).abs() < 1e-15);
        // Both branches meet at γ = 1.
        assert!((example1_w(1.0 + 1e-12, b) - example1_w(1.0, b)).abs() < 1e-11);
    }

    #[test]
    fn w_is_convex() {
        let h = 1e-3;
        for k in 1..4000 {
            let g = k as f64 * h;
            let second = example1_w(g + h, 0.4) - 2.0 * example1_w(g, 0.4) + example1_w(g - h, 0.4);
            assert!(second >= -1e-12, "{g}");
        }
    }

    #[test]
    fn example1_value_table() {
        let v = example1_values(0.4).unwrap();
        assert_eq!((v.v0, v.v1), (0.4, 0.4));
        assert!((v.v2 - 0.416_666_666_666_666_7).abs() < 1e-15);
        let v = example1_values(0.49).unwrap();
        assert!(v.v2 > v.v1 && (v.v2 - 0.490_196).abs() < 1e-6);
        let small = example1_values(1e-9).unwrap();
        assert!((small.v2 - 0.25).abs() < 1e-8 && small.v1 < 1e-8);
        assert_eq!(example1_values(0.5), Err(OracleError::BetaRange(0.5)));
    }

    #[test]
    fn example2_closed_form() {
        let s = example2_solve(0.1).unwrap();
        assert!((s.beta - 0.451_472).abs() < 1e-5, "{}", s.beta);
        assert!((s.c_star - 0.077_426_4).abs() < 1e-6);
        assert!((s.value - 1.2704).abs() < 1e-3, "{}", s.value);
        // Both branches of W meet at γ = 1, where W equals the saddle payoff.
        assert!((s.w(1.0) - s.w(1.0 + 1e-12)).abs() < 1e-9);
        assert_eq!(example2_solve(0.5), Err(OracleError::NoDiscount(0.5)));
    }

    #[test]
    fn saddle_payoff_matches_value() {
        // F(1) = (1 − c*) + (c*^σ − 1) + β W(1) equals V.
        let s = example2_solve(0.1).unwrap();
        let f = (1.0 - s.c_star) + (s.c_star.powf(s.sigma) - 1.0) + s.beta * s.w(1.0);
        assert!((f - s.value).abs() < 1e-12, "{f} vs {}", s.value);
    }

    #[test]
    fn deterministic_scan_stays_below() {
        let scan = example2_deterministic_scan(0.1, 12, 4.6).unwrap();
        assert!(scan.tail_margin() > 0.0, "{scan:?}");
        assert!(scan.interval_margin() > 0.0, "{scan:?}");
    }

    #[test]
    fn example_models_validate() {
        let g = example1_c_grid(0.4);
        let spec = build_example1(0.4, &g).unwrap();
        assert!(spec.validate().is_empty());
        assert!((spec.lipschitz_bound() - 6.25).abs() < 1e-12);
        assert_eq!(build_example1(0.4, &[0.0, 0.25]), Err(OracleError::MissingGridPoint(0.36)));
        let g2 = example2_c_grid(0.1);
        assert!(build_example2(0.1, &g2).unwrap().validate().is_empty());
        assert_eq!(example_action_index(&g, 0.36, 1), Some(2 * 60 + 1));
    }
}
