use super::grid::{GammaGrid, MAX_DIM};
use crate::model::{Horizon, ModelSpec};

/// Which functional equation a field solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Multiplier chosen before the action.
    InfSup,
    /// Action chosen before the multiplier.
    SupInf,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::InfSup => "infsup",
            Variant::SupInf => "supinf",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "infsup" => Ok(Variant::InfSup),
            "supinf" => Ok(Variant::SupInf),
            other => Err(format!("unknown variant '{other}' (expected infsup or supinf)")),
        }
    }
}

/// Dual value function tabulated on a multiplier grid for every `(x, s)`,
/// extended beyond the grid with slope `L` in the ℓ¹ distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValueField {
    grid: GammaGrid,
    num_states: usize,
    num_shocks: usize,
    values: Vec<f64>,
    lipschitz: f64,
    variant: Variant,
    horizons: Vec<Horizon>,
}

/// Payoff vector `(v⁰, v)` of a feasible plan started at `(x, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePayoff {
    pub x: usize,
    pub s: usize,
    pub v0: f64,
    pub v: Vec<f64>,
}

/// Worst violations of the four membership conditions (0 when satisfied).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MembershipReport {
    pub convexity: f64,
    pub lipschitz: f64,
    pub upper: f64,
    pub lower: f64,
    pub nodes_checked: usize,
    pub payoffs_checked: usize,
}

impl MembershipReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.convexity <= tol && self.lipschitz <= tol && self.upper <= tol && self.lower <= tol
    }
}

impl DualValueField {
    pub fn new(
        grid: GammaGrid,
        num_states: usize,
        num_shocks: usize,
        values: Vec<f64>,
        lipschitz: f64,
        variant: Variant,
        horizons: Vec<Horizon>,
    ) -> Self {
        assert_eq!(values.len(), num_states * num_shocks * grid.len());
        assert_eq!(horizons.len(), grid.dim());
        Self {
            grid,
            num_states,
            num_shocks,
            values,
            lipschitz,
            variant,
            horizons,
        }
    }

    /// The majorant `(1 + Σγ)·L` at every node.
    pub fn affine_majorant(spec: &ModelSpec, grid: GammaGrid, variant: Variant) -> Self {
        let l = spec.lipschitz_bound();
        let per: Vec<f64> = (0..grid.len())
            .map(|k| (1.0 + grid.node(k).iter().sum::<f64>()) * l)
            .collect();
        let values = per.repeat(spec.num_states * spec.num_shocks);
        Self::new(grid, spec.num_states, spec.num_shocks, values, l, variant, spec.horizons.clone())
    }

    pub fn grid(&self) -> &GammaGrid {
        &self.grid
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_shocks(&self) -> usize {
        self.num_shocks
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn horizons(&self) -> &[Horizon] {
        &self.horizons
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn offset(&self, x: usize, s: usize) -> usize {
        (x * self.num_shocks + s) * self.grid.len()
    }

    /// Stored value at grid node `node`.
    pub fn node_value(&self, node: usize, x: usize, s: usize) -> f64 {
        self.values[self.offset(x, s) + node]
    }

    /// Stored values for `(x, s)` in node order.
    pub fn slice(&self, x: usize, s: usize) -> &[f64] {
        let o = self.offset(x, s);
        &self.values[o..o + self.grid.len()]
    }

    /// Multilinear interpolation inside the grid box; outside, the value at
    /// the projection onto the box plus `L` times the ℓ¹ distance to it.
    pub fn evaluate(&self, gamma: &[f64], x: usize, s: usize) -> f64 {
        let dim = self.grid.dim();
        debug_assert_eq!(gamma.len(), dim);
        let vals = self.slice(x, s);
        let mut excess = 0.0;
        if dim == 1 {
            let ax = self.grid.axis(0);
            let (j, t) = locate(ax, gamma[0], &mut excess);
            return vals[j] + t * (vals[j + 1] - vals[j]) + self.lipschitz * excess;
        }
        let mut cell = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for d in 0..dim {
            let (j, t) = locate(self.grid.axis(d), gamma[d], &mut excess);
            cell[d] = j;
            frac[d] = t;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..dim {
                let up = (corner >> d) & 1;
                w *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
                idx += (cell[d] + up) * self.grid.stride(d);
            }
            if w != 0.0 {
                acc += w * vals[idx];
            }
        }
        acc + self.lipschitz * excess
    }

    /// Forward-difference subgradient `(D(γ+εeᵢ) − D(γ))/ε`.
    pub fn subgradient(&self, gamma: &[f64], x: usize, s: usize, eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; gamma.len()];
        self.subgradient_into(gamma, x, s, eps, &mut out);
        out
    }

    pub fn subgradient_into(&self, gamma: &[f64], x: usize, s: usize, eps: f64, out: &mut [f64]) {
        let base = self.evaluate(gamma, x, s);
        let mut probe = gamma.to_vec();
        for i in 0..gamma.len() {
            probe[i] = gamma[i] + eps;
            out[i] = (self.evaluate(&probe, x, s) - base) / eps;
            probe[i] = gamma[i];
        }
    }

    /// Backward difference along axis `i`, clamped at zero.
    pub fn left_slope(&self, gamma: &[f64], x: usize, s: usize, i: usize, eps: f64) -> f64 {
        let h = eps.min(gamma[i]);
        if h <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut probe = gamma.to_vec();
        probe[i] -= h;
        (self.evaluate(gamma, x, s) - self.evaluate(&probe, x, s)) / h
    }

    /// Checks convexity and the Lipschitz bound along every grid axis, the
    /// majorant `(1+Σγ)L`, and the affine minorants of `payoffs`, over the
    /// `(x, s)` pairs flagged in `active` (indexed `x·S + s`).
    pub fn check_membership(&self, active: &[bool], payoffs: &[FeasiblePayoff]) -> MembershipReport {
        let mut rep = MembershipReport::default();
        let n = self.grid.len();
        let nodes: Vec<Vec<f64>> = (0..n).map(|k| self.grid.node(k)).collect();
        let multi: Vec<Vec<usize>> = (0..n).map(|k| self.grid.multi_index(k)).collect();
        for x in 0..self.num_states {
            for s in 0..self.num_shocks {
                if !active[x * self.num_shocks + s] {
                    continue;
                }
                let v = self.slice(x, s);
                for k in 0..n {
                    rep.nodes_checked += 1;
                    let g = &nodes[k];
                    let sum: f64 = g.iter().sum();
                    rep.upper = rep.upper.max(v[k] - (1.0 + sum) * self.lipschitz);
                    for d in 0..self.grid.dim() {
                        let pos = multi[k][d];
                        let len = self.grid.axis(d).len();
                        let st = self.grid.stride(d);
                        if pos + 1 < len {
                            let dg = nodes[k + st][d] - g[d];
                            rep.lipschitz = rep.lipschitz.max((v[k + st] - v[k]).abs() - self.lipschitz * dg);
                        }
                        if pos >= 1 && pos + 1 < len {
                            let (gl, gr) = (nodes[k - st][d], nodes[k + st][d]);
                            let w = (g[d] - gl) / (gr - gl);
                            let chord = v[k - st] + w * (v[k + st] - v[k - st]);
                            rep.convexity = rep.convexity.max(v[k] - chord);
                        }
                    }
                }
                for p in payoffs.iter().filter(|p| p.x == x && p.s == s) {
                    rep.payoffs_checked += 1;
                    for k in 0..n {
                        let lb = p.v0 + p.v.iter().zip(&nodes[k]).map(|(a, b)| a * b).sum::<f64>();
                        rep.lower = rep.lower.max(lb - v[k]);
                    }
                }
            }
        }
        rep
    }
}

/// Cell index and fractional position of `g` on `axis`, accumulating the
/// distance beyond the last knot into `excess`.
fn locate(axis: &[f64], g: f64, excess: &mut f64) -> (usize, f64) {
    let last = axis.len() - 1;
    let top = axis[last];
    if g >= top {
        *excess += g - top;
        return (last - 1, 1.0);
    }
    let g = g.max(0.0);
    let j = axis.partition_point(|k| *k <= g).saturating_sub(1).min(last - 1);
    (j, (g - axis[j]) / (axis[j + 1] - axis[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    fn one_d(knots: Vec<f64>, vals: Vec<f64>, l: f64) -> DualValueField {
        let grid = GammaGrid::from_axes(vec![knots]).unwrap();
        DualValueField::new(grid, 1, 1, vals, l, Variant::InfSup, vec![Horizon::Infinite])
    }

    #[test]
    fn majorant_values() {
        let spec = ModelBuilder::new(1, 1, 1, 0.5).reward_fn(|_, _, _| 2.0).constraint_fn(0, |_, _, _| 0.0).build();
        // L = 2/(1-0.5) = 4
        let grid = GammaGrid::from_axes(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let f = DualValueField::affine_majorant(&spec, grid, Variant::InfSup);
        assert_eq!(f.evaluate(&[0.0], 0, 0), 4.0);
        assert_eq!(f.evaluate(&[2.0], 0, 0), 12.0);
    }

    #[test]
    fn interpolation_and_extension() {
        let f = one_d(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 5.0], 4.0);
        assert_eq!(f.evaluate(&[1.0], 0, 0), 3.0);
        assert_eq!(f.evaluate(&[0.5], 0, 0), 2.0);
        assert_eq!(f.evaluate(&[3.0], 0, 0), 9.0);
    }

    #[test]
    fn kink_subgradient_in_interval() {
        let f = one_d(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 2.0], 2.0);
        let g = f.subgradient(&[1.0], 0, 0, 1e-3)[0];
        assert!((0.0..=2.0).contains(&g));
        let affine = one_d(vec![0.0, 1.0, 2.0], vec![3.0, 6.0, 9.0], 3.0);
        assert!((affine.subgradient(&[0.7], 0, 0, 1e-4)[0] - 3.0).abs() < 1e-9);
        assert!((affine.subgradient(&[5.0], 0, 0, 1e-4)[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn bilinear_and_two_d_extension() {
        let grid = GammaGrid::from_axes(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        // v = 1 + γ0 + 2γ1 at corners, node order (0,0),(0,1),(1,0),(1,1)
        let f = DualValueField::new(
            grid,
            1,
            1,
            vec![1.0, 3.0, 2.0, 4.0],
            5.0,
            Variant::InfSup,
            vec![Horizon::Infinite; 2],
        );
        assert!((f.evaluate(&[0.25, 0.5], 0, 0) - 2.25).abs() < 1e-12);
        assert!((f.evaluate(&[2.0, 1.5], 0, 0) - (4.0 + 5.0 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn membership_detects_violations() {
        let good = one_d(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 1.0], 1.0);
        let payoff = FeasiblePayoff { x: 0, s: 0, v0: 0.5, v: vec![-0.5] };
        assert!(good.check_membership(&[true], std::slice::from_ref(&payoff)).passes(1e-12));
        let bad = one_d(vec![0.0, 1.0, 2.0], vec![1.0, 2.5, 1.0], 1.0);
        let rep = bad.check_membership(&[true], &[payoff]);
        assert!(rep.convexity > 0.5);
        assert!(rep.lipschitz > 0.0);
        let low = FeasiblePayoff { x: 0, s: 0, v0: 2.0, v: vec![0.0] };
        assert!(good.check_membership(&[true], &[low]).lower > 0.5);
        assert!(good.check_membership(&[false], &[]).passes(0.0));
    }
}
