//! Minimization of the convex multiplier objective
//! `λ ↦ max_a [c_a + ⟨λ, slope_a⟩ + continuation(λ, x'_a)]` over a box in
//! the nonnegative orthant.

/// Expected discounted continuation as a function of the multiplier.
pub trait Continuation: Sync {
    /// Continuation value when the current multiplier is `lambda` and the
    /// successor physical state is `next_state`.
    fn value(&self, lambda: &[f64], next_state: usize) -> f64;

    /// A (forward-difference) subgradient of [`Continuation::value`].
    fn subgradient(&self, lambda: &[f64], next_state: usize, out: &mut [f64]);

    /// Upper bound on `|∂ value / ∂λᵢ|` over the whole orthant.
    fn slope_bound(&self, dim: usize) -> f64;
}

/// Continuation that is identically zero.
pub struct NoContinuation;

impl Continuation for NoContinuation {
    fn value(&self, _: &[f64], _: usize) -> f64 {
        0.0
    }
    fn subgradient(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn slope_bound(&self, _: usize) -> f64 {
        0.0
    }
}

/// Per-action affine data plus a shared continuation.
pub struct InnerProblem<'a> {
    dim: usize,
    constants: Vec<f64>,
    slopes: Vec<f64>,
    next: Vec<usize>,
    /// Distinct successor states and, per piece, the slot of its successor.
    distinct_next: Vec<usize>,
    slot: Vec<usize>,
    bound: Vec<f64>,
    continuation: &'a dyn Continuation,
    tie_rel: f64,
}

/// Result of evaluating the objective at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    /// Indices (into the pieces) attaining the max within the tie tolerance.
    pub argmax: Vec<usize>,
    pub subgradient: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InnerOptions {
    /// Target accuracy of the returned objective value.
    pub tol: f64,
    pub max_iter: usize,
    /// Step scale for the projected subgradient path (two or more dimensions).
    pub sigma0: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 4000,
            sigma0: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub lambda: Vec<f64>,
    pub value: f64,
    /// Largest violation of the one-sided optimality conditions, measured
    /// with directional difference quotients along each coordinate.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ScalarMin {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default tie tolerance for argmax sets, relative to `1 + |value|`.
pub const TIE_REL: f64 = 1e-9;

impl<'a> InnerProblem<'a> {
    /// `slopes` is piece-major with `dim` entries per piece.
    pub fn new(
        dim: usize,
        constants: Vec<f64>,
        slopes: Vec<f64>,
        next: Vec<usize>,
        bound: Vec<f64>,
        continuation: &'a dyn Continuation,
    ) -> Self {
        assert!(dim >= 1, "multiplier dimension must be positive");
        assert_eq!(slopes.len(), constants.len() * dim);
        assert_eq!(next.len(), constants.len());
        assert_eq!(bound.len(), dim);
        assert!(!constants.is_empty(), "inner problem without pieces");
        let mut distinct_next: Vec<usize> = Vec::new();
        let slot = next
            .iter()
            .map(|x| match distinct_next.iter().position(|y| y == x) {
                Some(p) => p,
                None => {
                    distinct_next.push(*x);
                    distinct_next.len() - 1
                }
            })
            .collect();
        Self {
            dim,
            constants,
            slopes,
            next,
            distinct_next,
            slot,
            bound,
            continuation,
            tie_rel: TIE_REL,
        }
    }

    pub fn with_tie_rel(mut self, tie_rel: f64) -> Self {
        self.tie_rel = tie_rel;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_pieces(&self) -> usize {
        self.constants.len()
    }

    pub fn bound(&self) -> &[f64] {
        &self.bound
    }

    /// Single-piece view used for per-action minimization.
    pub fn piece(&self, k: usize) -> InnerProblem<'a> {
        InnerProblem::new(
            self.dim,
            vec![self.constants[k]],
            self.slopes[k * self.dim..(k + 1) * self.dim].to_vec(),
            vec![self.next[k]],
            self.bound.clone(),
            self.continuation,
        )
        .with_tie_rel(self.tie_rel)
    }

    fn piece_values(&self, lambda: &[f64], out: &mut Vec<f64>) {
        let cont: Vec<f64> = self
            .distinct_next
            .iter()
            .map(|&x| self.continuation.value(lambda, x))
            .collect();
        out.clear();
        out.extend((0..self.constants.len()).map(|k| {
            let sl = &self.slopes[k * self.dim..(k + 1) * self.dim];
            let lin: f64 = sl.iter().zip(lambda).map(|(a, b)| a * b).sum();
            self.constants[k] + lin + cont[self.slot[k]]
        }));
    }

    /// Objective value only.
    pub fn value(&self, lambda: &[f64]) -> f64 {
        let mut vals = Vec::with_capacity(self.constants.len());
        self.piece_values(lambda, &mut vals);
        vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value, tied maximizers and a subgradient taken at the first maximizer.
    pub fn evaluate(&self, lambda: &[f64]) -> Evaluation {
        let mut vals = Vec::with_capacity(self.constants.len());
        self.piece_values(lambda, &mut vals);
        let value = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie = self.tie_rel * (1.0 + value.abs());
        let argmax: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] >= value - tie).collect();
        let subgradient = self.piece_subgradient(argmax[0], lambda);
        Evaluation {
            value,
            argmax,
            subgradient,
        }
    }

    /// Subgradient of piece `k` at `lambda`.
    pub fn piece_subgradient(&self, k: usize, lambda: &[f64]) -> Vec<f64> {
        let mut sub = vec![0.0; self.dim];
        self.continuation.subgradient(lambda, self.next[k], &mut sub);
        for (i, v) in sub.iter_mut().enumerate() {
            *v += self.slopes[k * self.dim + i];
        }
        sub
    }

    /// Lipschitz constant of the objective with respect to the sup norm.
    fn objective_lipschitz(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                let s = (0..self.constants.len())
                    .map(|k| self.slopes[k * self.dim + i].abs())
                    .fold(0.0, f64::max);
                s + self.continuation.slope_bound(i)
            })
            .sum()
    }

    /// Every piece is nondecreasing in every coordinate, so `λ = 0` is optimal.
    fn monotone_in_lambda(&self) -> bool {
        (0..self.dim).all(|i| {
            let cb = self.continuation.slope_bound(i);
            (0..self.constants.len()).all(|k| self.slopes[k * self.dim + i] >= cb)
        })
    }

    fn kkt_residual(&self, lambda: &[f64]) -> f64 {
        let f0 = self.value(lambda);
        let mut worst: f64 = 0.0;
        let mut probe = lambda.to_vec();
        for i in 0..self.dim {
            let h = 1e-7 * (1.0 + lambda[i].abs());
            if lambda[i] + h <= self.bound[i] {
                probe[i] = lambda[i] + h;
                let d_plus = (self.value(&probe) - f0) / h;
                worst = worst.max(-d_plus);
            }
            if lambda[i] >= h {
                probe[i] = lambda[i] - h;
                let d_minus = (f0 - self.value(&probe)) / h;
                worst = worst.max(d_minus);
            }
            probe[i] = lambda[i];
        }
        worst.max(0.0)
    }
}

/// Golden-section search for a unimodal function on `[lo, hi]`.
///
/// Returns the best point evaluated, including both endpoints.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> ScalarMin {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut best = (a, f(a));
    let fb = f(b);
    if fb < best.1 {
        best = (b, fb);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut it = 0;
    while b - a > tol && it < max_iter {
        it += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        for (x, fx) in [(c, fc), (d, fd)] {
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    ScalarMin {
        x: best.0,
        fx: best.1,
        iterations: it,
        converged: b - a <= tol,
    }
}

/// Minimizes the objective over the box `[0, bound]`.
///
/// One dimension uses golden-section search; more dimensions use projected
/// subgradient steps `σ₀·R/k` with best-iterate tracking, optionally from a
/// warm start.
pub fn minimize(prob: &InnerProblem<'_>, opts: &InnerOptions, warm: Option<&[f64]>) -> InnerSolution {
    let dim = prob.dim;
    if prob.monotone_in_lambda() || prob.bound.iter().all(|b| *b <= 0.0) {
        let lambda = vec![0.0; dim];
        let value = prob.value(&lambda);
        return InnerSolution {
            lambda,
            value,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let lip = prob.objective_lipschitz();
    let width_tol = opts.tol / (1.0 + lip);
    if dim == 1 {
        let hi = prob.bound[0].max(0.0);
        let m = golden_section(|l| prob.value(&[l]), 0.0, hi, width_tol, opts.max_iter);
        let lambda = vec![m.x];
        return InnerSolution {
            kkt_residual: prob.kkt_residual(&lambda),
            lambda,
            value: m.fx,
            iterations: m.iterations,
            converged: m.converged,
        };
    }
    projected_subgradient(prob, opts, warm, width_tol)
}

fn projected_subgradient(
    prob: &InnerProblem<'_>,
    opts: &InnerOptions,
    warm: Option<&[f64]>,
    width_tol: f64,
) -> InnerSolution {
    let dim = prob.dim;
    let project = |l: &mut [f64]| {
        for (v, b) in l.iter_mut().zip(&prob.bound) {
            *v = v.clamp(0.0, b.max(0.0));
        }
    };
    let mut lambda: Vec<f64> = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; dim]);
    project(&mut lambda);
    let radius = 0.25 * prob.bound.iter().copied().fold(0.0, f64::max).max(1e-12);
    let mut best = (lambda.clone(), prob.value(&lambda));
    // The origin is a cheap candidate whenever the optimum sits on the boundary.
    let origin = vec![0.0; dim];
    let f_origin = prob.value(&origin);
    if f_origin < best.1 {
        best = (origin, f_origin);
    }
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let ev = prob.evaluate(&lambda);
        if ev.value < best.1 {
            best = (lambda.clone(), ev.value);
        }
        let norm = ev.subgradient.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = opts.sigma0 * radius / it as f64;
        for (l, g) in lambda.iter_mut().zip(&ev.subgradient) {
            *l -= step * g / norm;
        }
        project(&mut lambda);
        if step < width_tol {
            break;
        }
    }
    // Coordinate refinement around the best iterate.
    let mut point = best.0.clone();
    let mut value = best.1;
    let mut window = radius * opts.sigma0 / it.max(1) as f64 * 4.0;
    for _ in 0..8 {
        for i in 0..dim {
            let lo = (point[i] - window).max(0.0);
            let hi = (point[i] + window).min(prob.bound[i]);
            let mut probe = point.clone();
            let m = golden_section(
                |t| {
                    probe[i] = t;
                    prob.value(&probe)
                },
                lo,
                hi,
                width_tol,
                200,
            );
            if m.fx < value {
                point[i] = m.x;
                value = m.fx;
            }
        }
        window *= 0.5;
    }
    let kkt = prob.kkt_residual(&point);
    InnerSolution {
        converged: kkt <= opts.tol.sqrt(),
        lambda: point,
        value,
        kkt_residual: kkt,
        iterations: it,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Continuation `slope·Σλ`, used to test subgradient bookkeeping.
    struct Affine(f64);

    impl Continuation for Affine {
        fn value(&self, lambda: &[f64], _: usize) -> f64 {
            self.0 * lambda.iter().sum::<f64>()
        }
        fn subgradient(&self, _: &[f64], _: usize, out: &mut [f64]) {
            out.fill(self.0);
        }
        fn slope_bound(&self, _: usize) -> f64 {
            self.0.abs()
        }
    }

    /// Continuation `(λ₀ − 1)² + (λ₁ − 2)²`-style bowl with a kink.
    struct Bowl;

    impl Continuation for Bowl {
        fn value(&self, l: &[f64], _: usize) -> f64 {
            (l[0] - 1.0).abs() + 2.0 * (l[1] - 0.5).abs()
        }
        fn subgradient(&self, l: &[f64], _: usize, out: &mut [f64]) {
            out[0] = if l[0] >= 1.0 { 1.0 } else { -1.0 };
            out[1] = if l[1] >= 0.5 { 2.0 } else { -2.0 };
        }
        fn slope_bound(&self, _: usize) -> f64 {
            2.0
        }
    }

    #[test]
    fn symmetric_kink() {
        let p = InnerProblem::new(1, vec![1.0, 0.0], vec![-1.0, 1.0], vec![0, 0], vec![2.0], &NoContinuation);
        let sol = minimize(&p, &InnerOptions::default(), None);
        assert!((sol.lambda[0] - 0.5).abs() < 1e-9, "{sol:?}");
        assert!((sol.value - 0.5).abs() < 1e-9);
        assert!(sol.converged);
        assert!(sol.kkt_residual < 1e-6);
    }

    #[test]
    fn increasing_objective_stays_at_zero() {
        let p = InnerProblem::new(1, vec![0.3], vec![2.0], vec![0], vec![5.0], &NoContinuation);
        let sol = minimize(&p, &InnerOptions::default(), None);
        assert_eq!(sol.lambda, vec![0.0]);
        assert_eq!(sol.value, 0.3);
    }

    #[test]
    fn boundary_minimum_with_continuation() {
        // 1 + λ·(-0.2) + 0.5·λ is increasing: minimum at the origin.
        let cont = Affine(0.5);
        let p = InnerProblem::new(1, vec![1.0], vec![-0.2], vec![0], vec![10.0], &cont);
        let sol = minimize(&p, &InnerOptions::default(), None);
        assert!(sol.lambda[0] < 1e-8);
        assert!((sol.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evaluation_subgradient_and_ties() {
        let cont = Affine(4.0 * 0.5);
        let p = InnerProblem::new(1, vec![1.0], vec![1.0], vec![0], vec![10.0], &cont);
        let ev = p.evaluate(&[0.3]);
        assert_eq!(ev.subgradient, vec![1.0 + 2.0]);
        let tie = InnerProblem::new(1, vec![1.0, 1.0], vec![0.0, 0.0], vec![0, 0], vec![1.0], &NoContinuation);
        assert_eq!(tie.evaluate(&[0.0]).argmax, vec![0, 1]);
    }

    #[test]
    fn two_dimensional_kinked_bowl() {
        // max of two affine pieces plus a separable kinked bowl; optimum (1, 0.5).
        let p = InnerProblem::new(
            2,
            vec![0.0, -10.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0, 0],
            vec![5.0, 5.0],
            &Bowl,
        );
        let sol = minimize(&p, &InnerOptions::default(), Some(&[3.0, 3.0]));
        assert!((sol.lambda[0] - 1.0).abs() < 1e-4, "{sol:?}");
        assert!((sol.lambda[1] - 0.5).abs() < 1e-4, "{sol:?}");
        assert!(sol.value < 1e-4);
    }

    #[test]
    fn golden_section_quadratic() {
        let m = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-10, 200);
        assert!((m.x - 0.3).abs() < 1e-8);
        assert!(m.converged);
    }

    use proptest::prelude::*;

    fn random_problem(cs: &[f64], ss: &[f64]) -> InnerProblem<'static> {
        static CONT: Affine = Affine(0.7);
        InnerProblem::new(1, cs.to_vec(), ss.to_vec(), vec![0; cs.len()], vec![4.0], &CONT)
    }

    proptest! {
        #[test]
        fn matches_dense_scan(
            cs in proptest::collection::vec(-2.0f64..2.0, 1..6),
            ss in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let ss = &ss[..cs.len()];
            let p = random_problem(&cs, ss);
            let sol = minimize(&p, &InnerOptions::default(), None);
            // Piecewise-linear: the minimum lies at 0, 4 or a pairwise crossing.
            let mut cands = vec![0.0, 4.0];
            for i in 0..cs.len() {
                for j in 0..cs.len() {
                    let ds = (ss[i] + 0.7) - (ss[j] + 0.7);
                    if ds.abs() > 1e-12 {
                        let l = (cs[j] - cs[i]) / ds;
                        if (0.0..=4.0).contains(&l) { cands.push(l); }
                    }
                }
            }
            let truth = cands.iter().map(|&l| p.value(&[l])).fold(f64::INFINITY, f64::min);
            prop_assert!((sol.value - truth).abs() <= 1e-9 * (1.0 + truth.abs()), "{} vs {}", sol.value, truth);
            // Warm-started call does no worse.
            let again = minimize(&p, &InnerOptions::default(), Some(&sol.lambda));
            prop_assert!(again.value <= sol.value + 1e-10);
        }

        #[test]
        fn subgradient_inequality(
            cs in proptest::collection::vec(-2.0f64..2.0, 1..6),
            ss in proptest::collection::vec(-3.0f64..3.0, 6),
            l1 in 0.0f64..4.0,
            l2 in 0.0f64..4.0,
        ) {
            let p = random_problem(&cs, &ss[..cs.len()]);
            let ev = p.evaluate(&[l1]);
            let rhs = ev.value + ev.subgradient[0] * (l2 - l1);
            prop_assert!(p.value(&[l2]) >= rhs - 1e-9);
        }
    }
}
