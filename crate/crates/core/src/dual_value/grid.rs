use thiserror::Error;

/// Construction parameters for a tensor grid on `[0, γmax]^I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Uniform knots per axis, endpoints included.
    pub n: usize,
    /// Extra geometric knots inside the first uniform cell.
    pub geometric: usize,
    /// `None` selects [`super::default_gamma_max`].
    pub gamma_max: Option<f64>,
    /// Additional knots (values above `γmax` are dropped).
    pub extra_knots: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 64,
            geometric: 6,
            gamma_max: None,
            extra_knots: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("axis {axis} needs at least two knots")]
    TooFewKnots { axis: usize },
    #[error("axis {axis} must start at 0 and be strictly increasing")]
    BadKnots { axis: usize },
    #[error("multiplier dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
}

/// Largest supported number of constraints.
pub const MAX_DIM: usize = 8;

/// Tensor product of sorted knot vectors, node index is row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGrid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    len: usize,
}

impl GammaGrid {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(GridError::Dimension(axes.len()));
        }
        for (i, ax) in axes.iter().enumerate() {
            if ax.len() < 2 {
                return Err(GridError::TooFewKnots { axis: i });
            }
            if ax[0] != 0.0 || ax.windows(2).any(|w| !(w[1] > w[0])) || !ax.iter().all(|v| v.is_finite()) {
                return Err(GridError::BadKnots { axis: i });
            }
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        let len = strides[0] * axes[0].len();
        Ok(Self { axes, strides, len })
    }

    /// Same knots on every axis: uniform on `[0, γmax]` plus geometric
    /// refinement `h·2⁻ʲ` below the first uniform step `h`, plus extras.
    pub fn build(dim: usize, gamma_max: f64, spec: &GridSpec) -> Result<Self, GridError> {
        let n = spec.n.max(2);
        let h = gamma_max / (n - 1) as f64;
        let mut knots: Vec<f64> = (0..n).map(|k| h * k as f64).collect();
        knots[n - 1] = gamma_max;
        knots.extend((1..=spec.geometric).map(|j| h * 0.5f64.powi(j as i32)));
        knots.extend(spec.extra_knots.iter().copied().filter(|k| *k > 0.0 && *k <= gamma_max));
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * (1.0 + a.abs()));
        Self::from_axes(vec![knots; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn stride(&self, d: usize) -> usize {
        self.strides[d]
    }

    pub fn upper(&self, d: usize) -> f64 {
        *self.axes[d].last().unwrap()
    }

    /// Per-axis knot positions of node `idx`.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.axes).map(|(st, ax)| (idx / st) % ax.len()).collect()
    }

    /// Coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .into_iter()
            .zip(&self.axes)
            .map(|(k, ax)| ax[k])
            .collect()
    }

    /// Index of the knot equal to `value` on axis `d`, if any.
    pub fn knot_position(&self, d: usize, value: f64) -> Option<usize> {
        self.axes[d].iter().position(|k| (k - value).abs() <= 1e-12 * (1.0 + value.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_refined_axis() {
        let spec = GridSpec { n: 5, geometric: 2, gamma_max: None, extra_knots: vec![1.2, 9.0] };
        let g = GammaGrid::build(1, 4.0, &spec).unwrap();
        assert_eq!(g.axis(0), &[0.0, 0.25, 0.5, 1.0, 1.2, 2.0, 3.0, 4.0]);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn node_indexing_is_row_major() {
        let g = GammaGrid::from_axes(vec![vec![0.0, 1.0], vec![0.0, 2.0, 3.0]]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.node(4), vec![1.0, 2.0]);
        assert_eq!(g.multi_index(5), vec![1, 2]);
    }

    #[test]
    fn rejects_bad_axes() {
        assert_eq!(GammaGrid::from_axes(vec![vec![0.0]]), Err(GridError::TooFewKnots { axis: 0 }));
        assert_eq!(GammaGrid::from_axes(vec![vec![0.5, 1.0]]), Err(GridError::BadKnots { axis: 0 }));
        assert_eq!(GammaGrid::from_axes(vec![]), Err(GridError::Dimension(0)));
    }
}
