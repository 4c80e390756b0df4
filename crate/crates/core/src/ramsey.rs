//! Two-period Ramsey taxation example where lotteries over future tax rates
//! can dominate every deterministic plan.
//!
//! Preferences are `log c + √(1−ℓ)`. Government debt `b` issued at date 0
//! must be repaid in every state `s` at date 1, which pins down date-1 labor
//! through `b = f(ℓ_s; g_s)`. Each state admits two labor levels (high and
//! low tax), and the planner may randomize between them.

use thiserror::Error;

use crate::inner_solver::golden_section;

#[derive(Debug, Error, PartialEq)]
pub enum RamseyError {
    #[error("labor {0} outside [0, 1)")]
    LaborRange(f64),
    #[error("no labor level in ({0}, 1) yields a surplus")]
    NoCapacity(f64),
    #[error("debt {b} exceeds the repayment capacity {cap}")]
    AboveCapacity { b: f64, cap: f64 },
    #[error("consumption ℓ − g = {0} is not positive")]
    Consumption(f64),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// `h(ℓ) = 1 − ℓ/(2√(1−ℓ))`, the marginal value of a unit of debt
/// repaid at labor `ℓ`.
pub fn h_eval(ell: f64) -> Result<f64, RamseyError> {
    if !(0.0..1.0).contains(&ell) {
        return Err(RamseyError::LaborRange(ell));
    }
    Ok(h(ell))
}

/// Net government surplus `f(ℓ; g) = (ℓ−g)·h(ℓ)`.
pub fn f_eval(ell: f64, g: f64) -> Result<f64, RamseyError> {
    Ok((ell - g) * h_eval(ell)?)
}

fn h(ell: f64) -> f64 {
    1.0 - ell / (2.0 * (1.0 - ell).sqrt())
}

fn f(ell: f64, g: f64) -> f64 {
    (ell - g) * h(ell)
}

/// Period utility `log(ℓ−g) + √(1−ℓ)`.
pub fn welfare(ell: f64, g: f64) -> Result<f64, RamseyError> {
    if !(0.0..1.0).contains(&ell) {
        return Err(RamseyError::LaborRange(ell));
    }
    if ell <= g {
        return Err(RamseyError::Consumption(ell - g));
    }
    Ok((ell - g).ln() + (1.0 - ell).sqrt())
}

const TOP: f64 = 1.0 - 1e-15;

fn bisect(mut fun: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = fun(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = fun(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn maximize(mut fun: impl FnMut(f64) -> f64, lo: f64, hi: f64, cells: usize) -> (f64, f64) {
    let step = (hi - lo) / cells as f64;
    let best = (0..=cells)
        .map(|k| lo + k as f64 * step)
        .max_by(|a, b| fun(*a).total_cmp(&fun(*b)))
        .expect("nonempty grid");
    let r = golden_section(|l| -fun(l), (best - step).max(lo), (best + step).min(hi), 1e-10, 200);
    (r.x, -r.fx)
}

/// Repayment capacity in a state with spending `g`: the largest surplus
/// `max_ℓ f(ℓ; g)` and its maximizer. `cells` sets the search grid before
/// golden-section refinement.
pub fn max_debt(g: f64, cells: usize) -> Result<(f64, f64), RamseyError> {
    if !(0.0..1.0).contains(&g) {
        return Err(RamseyError::NoCapacity(g));
    }
    let (ell, value) = maximize(|l| f(l, g), g, TOP, cells.max(2));
    if value <= 0.0 {
        return Err(RamseyError::NoCapacity(g));
    }
    Ok((value, ell))
}

/// The two labor levels that repay debt `b` in a state with spending `g`:
/// `(ℓ_L, ℓ_H)` with `ℓ_L` the high-tax root below the surplus peak.
pub fn labor_roots(b: f64, g: f64) -> Result<(f64, f64), RamseyError> {
    let (cap, peak) = max_debt(g, 1000)?;
    if b > cap {
        return Err(RamseyError::AboveCapacity { b, cap });
    }
    if b >= cap - 1e-14 {
        return Ok((peak, peak));
    }
    let low = if b <= 0.0 { g } else { bisect(|l| f(l, g) - b, g, peak, 1e-12) };
    let high = bisect(|l| f(l, g) - b, peak, TOP, 1e-12);
    Ok((low, high))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyScenario {
    /// Probabilities of the date-1 states.
    pub probs: Vec<f64>,
    pub g0: f64,
    /// Date-1 spending per state.
    pub g: Vec<f64>,
    pub beta: f64,
    /// Initial debt `b₋₁`, the revenue to raise at date 0.
    pub b_prev: f64,
    /// Step of the debt grid on `[0, capacity]`.
    pub b_step: f64,
    /// Step of the grid of lottery weights on `[0, 1]`.
    pub pi_step: f64,
    /// Step of the date-0 labor grid used for scatter plots.
    pub ell_step: f64,
}

impl Default for RamseyScenario {
    fn default() -> Self {
        Self {
            probs: vec![0.9, 0.1],
            g0: 0.0,
            g: vec![0.0, 0.65],
            beta: 1.0,
            b_prev: 0.45,
            b_step: 1e-3,
            pi_step: 1e-3,
            ell_step: 5e-3,
        }
    }
}

impl RamseyScenario {
    pub fn validate(&self) -> Result<(), RamseyError> {
        let bad = |m: &str| Err(RamseyError::Scenario(m.to_string()));
        if self.probs.len() != self.g.len() || self.probs.is_empty() {
            return bad("one probability and one spending level per state");
        }
        if (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.probs.iter().any(|p| *p < 0.0) {
            return bad("probabilities must be nonnegative and sum to 1");
        }
        if self.g.iter().chain([&self.g0]).any(|g| !(0.0..1.0).contains(g)) {
            return bad("spending must lie in [0, 1)");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        for step in [self.b_step, self.pi_step, self.ell_step] {
            if !(step > 0.0 && step <= 1.0) {
                return bad("grid steps must lie in (0, 1]");
            }
        }
        Ok(())
    }

    /// Largest debt every state can repay.
    pub fn capacity(&self) -> Result<f64, RamseyError> {
        self.g
            .iter()
            .map(|g| max_debt(*g, 1000).map(|r| r.0))
            .try_fold(f64::INFINITY, |m, c| c.map(|c| m.min(c)))
    }

    fn b_grid(&self) -> Result<Vec<f64>, RamseyError> {
        let cap = self.capacity()?;
        let n = (cap / self.b_step).floor() as usize;
        let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * self.b_step).collect();
        if cap - grid[n] > 1e-12 {
            grid.push(cap);
        }
        Ok(grid)
    }

    fn pi_grid(&self) -> Vec<f64> {
        let n = (1.0 / self.pi_step).round() as usize;
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }
}

/// Date-1 plan: in state `s` labor is `ℓ_L` with probability `pi[s]` and
/// `ℓ_H` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub b: f64,
    pub roots: Vec<(f64, f64)>,
    pub pi: Vec<f64>,
}

impl Plan {
    /// `w′ = β Σ_s p_s Σ_i π_is h(ℓ_sⁱ)`.
    pub fn bond_price(&self, sc: &RamseyScenario) -> f64 {
        sc.beta
            * sc.probs
                .iter()
                .zip(&self.roots)
                .zip(&self.pi)
                .map(|((p, (lo, hi)), pi)| p * (pi * h(*lo) + (1.0 - pi) * h(*hi)))
                .sum::<f64>()
    }

    /// Expected date-1 welfare, `None` if a drawn branch has no consumption.
    pub fn continuation_welfare(&self, sc: &RamseyScenario) -> Option<f64> {
        let mut total = 0.0;
        for (s, ((lo, hi), pi)) in self.roots.iter().zip(&self.pi).enumerate() {
            for (ell, w) in [(*lo, *pi), (*hi, 1.0 - pi)] {
                if w > 0.0 {
                    total += sc.probs[s] * w * welfare(ell, sc.g[s]).ok()?;
                }
            }
        }
        Some(sc.beta * total)
    }
}

/// Date-0 revenue `f(ℓ₀; g₀) + (ℓ₀−g₀)·w′`.
pub fn revenue(sc: &RamseyScenario, ell0: f64, plan: &Plan) -> f64 {
    f(ell0, sc.g0) + (ell0 - sc.g0) * plan.bond_price(sc)
}

/// Total expected welfare of a plan with date-0 labor `ell0`.
pub fn total_welfare(sc: &RamseyScenario, ell0: f64, plan: &Plan) -> Option<f64> {
    Some(welfare(ell0, sc.g0).ok()? + plan.continuation_welfare(sc)?)
}

fn plans_for_b(sc: &RamseyScenario, b: f64, pis: &[Vec<f64>]) -> Result<Vec<Plan>, RamseyError> {
    let roots = sc.g.iter().map(|g| labor_roots(b, *g)).collect::<Result<Vec<_>, _>>()?;
    Ok(pis
        .iter()
        .map(|pi| Plan {
            b,
            roots: roots.clone(),
            pi: pi.clone(),
        })
        .collect())
}

/// All weight vectors with `pi[s]` drawn from `values[s]`.
fn product(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    values.iter().fold(vec![Vec::new()], |acc, vals| {
        acc.iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// Date-1 branch selection for the scatter: per state a list of weights on
/// the high-tax root.
#[derive(Debug, Clone, PartialEq)]
pub struct Branches {
    pub label: String,
    pub pi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub label: String,
    pub b: f64,
    pub ell0: f64,
    /// `(ℓ_L, ℓ_H)` per state.
    pub roots: Vec<(f64, f64)>,
    pub pi: Vec<f64>,
    pub revenue: f64,
    pub welfare: f64,
}

impl ScatterRow {
    pub fn csv_header(states: usize) -> String {
        let mut h = String::from("panel,b,ell0");
        for s in 1..=states {
            h.push_str(&format!(",ell{s}_low,ell{s}_high,pi{s}"));
        }
        h.push_str(",revenue,welfare");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut line = format!("{},{},{}", self.label, self.b, self.ell0);
        for ((lo, hi), pi) in self.roots.iter().zip(&self.pi) {
            line.push_str(&format!(",{lo},{hi},{pi}"));
        }
        line.push_str(&format!(",{},{}", self.revenue, self.welfare));
        line
    }
}

/// Revenue and welfare over the debt grid, the date-0 labor grid and the
/// given date-1 branches. Combinations without positive consumption are
/// skipped.
pub fn enumerate_scatter(sc: &RamseyScenario, branches: &Branches) -> Result<Vec<ScatterRow>, RamseyError> {
    sc.validate()?;
    if branches.pi.len() != sc.g.len() {
        return Err(RamseyError::Scenario("one weight list per state".into()));
    }
    let n = (1.0 / sc.ell_step).round() as usize;
    let ells: Vec<f64> = (1..n).map(|k| k as f64 / n as f64).filter(|l| *l > sc.g0).collect();
    let pis = product(&branches.pi);
    let mut rows = Vec::new();
    for b in sc.b_grid()? {
        for plan in plans_for_b(sc, b, &pis)? {
            for &ell0 in &ells {
                if let Some(w) = total_welfare(sc, ell0, &plan) {
                    rows.push(ScatterRow {
                        label: branches.label.clone(),
                        b,
                        ell0,
                        roots: plan.roots.clone(),
                        pi: plan.pi.clone(),
                        revenue: revenue(sc, ell0, &plan),
                        welfare: w,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Best plan found for a revenue target.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPlan {
    pub welfare: f64,
    pub ell0: f64,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dominance {
    pub best_det: Option<BestPlan>,
    pub best_lottery: Option<BestPlan>,
    /// `best_lottery − best_det` in welfare.
    pub margin: f64,
    pub dominates: bool,
}

/// Best welfare raising exactly `b_prev` at date 0 over the debt grid and
/// the given weight vectors. Date-0 labor solves the revenue equation on
/// both sides of its peak.
fn best_plan(sc: &RamseyScenario, pis: &[Vec<f64>]) -> Result<Option<BestPlan>, RamseyError> {
    let mut best: Option<BestPlan> = None;
    for b in sc.b_grid()? {
        for plan in plans_for_b(sc, b, pis)? {
            let Some(cont) = plan.continuation_welfare(sc) else { continue };
            let w = plan.bond_price(sc);
            let gap = |l: f64| revenue(sc, l, &plan) - sc.b_prev;
            let (peak, top) = maximize(|l| f(l, sc.g0) + (l - sc.g0) * w, sc.g0, TOP, 200);
            if top < sc.b_prev {
                continue;
            }
            for ell0 in [bisect(gap, sc.g0, peak, 1e-12), bisect(gap, peak, TOP, 1e-12)] {
                let Ok(w0) = welfare(ell0, sc.g0) else { continue };
                if best.as_ref().is_none_or(|bp| w0 + cont > bp.welfare) {
                    best = Some(BestPlan {
                        welfare: w0 + cont,
                        ell0,
                        plan: plan.clone(),
                    });
                }
            }
        }
    }
    Ok(best)
}

/// Compares the best deterministic plan with the best plan randomizing in
/// the first date-1 state on the weight grid (other states stay
/// deterministic). `dominates` requires the lottery to win by more than
/// `margin`.
pub fn dominance_check(sc: &RamseyScenario, margin: f64) -> Result<Dominance, RamseyError> {
    sc.validate()?;
    let states = sc.g.len();
    let det = best_plan(sc, &product(&vec![vec![0.0, 1.0]; states]))?;
    let mut weights = vec![vec![0.0, 1.0]; states];
    weights[0] = sc.pi_grid();
    let lot = best_plan(sc, &product(&weights))?;
    let gap = match (&det, &lot) {
        (Some(d), Some(l)) => l.welfare - d.welfare,
        (None, Some(_)) => f64::INFINITY,
        _ => f64::NEG_INFINITY,
    };
    Ok(Dominance {
        dominates: gap > margin,
        margin: gap,
        best_det: det,
        best_lottery: lot,
    })
}

/// Rows of `(ℓ, f(ℓ; g₁), …, f(ℓ; g_S), welfare(ℓ; g₀))` on a uniform grid
/// of `(0, 1)` with `points` interior points. Welfare is `NaN` where
/// consumption is not positive.
pub fn curves(sc: &RamseyScenario, points: usize) -> Vec<Vec<f64>> {
    (1..=points)
        .map(|k| {
            let ell = k as f64 / (points + 1) as f64;
            let mut row = vec![ell];
            row.extend(sc.g.iter().map(|g| f(ell, *g)));
            row.push(welfare(ell, sc.g0).unwrap_or(f64::NAN));
            row
        })
        .collect()
}
