//! Time grids, piecewise-linear signals, state vectors, boxes and trajectories.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};

const NODE_TOL: f64 = 1e-9;

/// Uniform grid `0 = t_0 < t_1 < ... < t_{N-1} = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    len: usize,
}

impl TimeGrid {
    /// Grid with the given spacing. `horizon` must be an integer multiple of `step`.
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0 && horizon.is_finite() && step.is_finite()) {
            return Err(Error::Grid(format!(
                "horizon {horizon} and step {step} must be positive and finite"
            )));
        }
        let intervals = libm::round(horizon / step);
        if libm::fabs(intervals * step - horizon) > NODE_TOL * horizon.max(1.0) {
            return Err(Error::Grid(format!(
                "horizon {horizon} is not a multiple of step {step}"
            )));
        }
        Self::with_len(horizon, intervals as usize + 1)
    }

    /// Grid with `len` equispaced nodes on `[0, horizon]`.
    pub fn with_len(horizon: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::Grid(format!("need at least 2 nodes, got {len}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon {horizon} must be positive")));
        }
        Ok(Self {
            horizon,
            step: horizon / (len - 1) as f64,
            len,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 >= self.len {
            self.horizon
        } else {
            k as f64 * self.step
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.node(k))
    }

    /// Index of the node equal to `t` (within rounding), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = libm::round(t / self.step);
        if k < 0.0 || k as usize >= self.len {
            return None;
        }
        let k = k as usize;
        (libm::fabs(self.node(k) - t) <= NODE_TOL * self.step).then_some(k)
    }

    /// Bracketing interval `[t_k, t_{k+1}]` of `t` and the fraction of the way through it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain {
                t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        let mut k = (libm::floor(t / self.step) as usize).min(self.len - 2);
        if t < self.node(k) {
            k -= 1;
        } else if t >= self.node(k + 1) && k + 2 < self.len {
            k += 1;
        }
        let (a, b) = (self.node(k), self.node(k + 1));
        Ok((k, ((t - a) / (b - a)).clamp(0.0, 1.0)))
    }

    /// Number of whole steps covered by a duration, rounding inward for the
    /// lower end of a window and outward-by-tolerance for the upper end.
    pub(crate) fn steps_ceil(&self, d: f64) -> usize {
        libm::ceil(d / self.step - NODE_TOL) as usize
    }

    pub(crate) fn steps_floor(&self, d: f64) -> usize {
        libm::floor(d / self.step + NODE_TOL) as usize
    }
}

/// Axis-aligned box `{ v : lower <= v <= upper }`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Box(format!("component {i}: [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Degenerate box containing exactly `point`.
    pub fn point(point: Vec<f64>) -> Result<Self> {
        Self::new(point.clone(), point)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// In-place saturation; the caller guarantees matching dimension.
    pub(crate) fn clamp_in_place(&self, v: &mut [f64]) {
        for (x, (l, u)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }
}

/// Componentwise saturation of `v` into `bx`.
pub fn in_box(v: &[f64], bx: &BoxSet) -> Result<Vec<f64>> {
    check_dim("in_box", bx.dim(), v.len())?;
    let mut out = v.to_vec();
    bx.clamp_in_place(&mut out);
    Ok(out)
}

/// Vector-valued signal, linear between the nodes of its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearSignal {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl PiecewiseLinearSignal {
    /// `values` holds one `dim`-vector per grid node, flattened.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("signal values", grid.len() * dim, values.len())?;
        Ok(Self { grid, dim, values })
    }

    pub fn from_nodes(grid: TimeGrid, nodes: &[Vec<f64>]) -> Result<Self> {
        check_dim("signal nodes", grid.len(), nodes.len())?;
        let dim = nodes.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(dim * nodes.len());
        for n in nodes {
            check_dim("signal node", dim, n.len())?;
            values.extend_from_slice(n);
        }
        Self::new(grid, dim, values)
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = value
            .iter()
            .copied()
            .cycle()
            .take(value.len() * grid.len())
            .collect();
        Self {
            grid,
            dim: value.len(),
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at time `t`, written into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (k, s) = self.grid.locate(t)?;
        let (a, b) = (self.node(k), self.node(k + 1));
        if s == 0.0 {
            out.copy_from_slice(a);
        } else if s == 1.0 {
            out.copy_from_slice(b);
        } else {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o = (1.0 - s) * x + s * y;
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Samples this signal onto another grid.
    pub fn resample(&self, grid: TimeGrid) -> Result<Self> {
        let mut values = alloc::vec![0.0; grid.len() * self.dim];
        for (k, t) in grid.nodes().enumerate() {
            self.eval_into(
                t.min(self.grid.horizon()),
                &mut values[k * self.dim..(k + 1) * self.dim],
            )?;
        }
        Self::new(grid, self.dim, values)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

/// Evaluates `sig` at `t`.
pub fn eval_signal(sig: &PiecewiseLinearSignal, t: f64) -> Result<Vec<f64>> {
    sig.eval(t)
}

/// Applies [`in_box`] at every node of `sig`.
pub fn saturate_signal(sig: &PiecewiseLinearSignal, bx: &BoxSet) -> Result<PiecewiseLinearSignal> {
    check_dim("saturate_signal", bx.dim(), sig.dim())?;
    let mut out = sig.clone();
    for k in 0..out.grid.len() {
        bx.clamp_in_place(out.node_mut(k));
    }
    Ok(out)
}

/// Closed-loop state `[plant, nn]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
    plant_dim: usize,
}

impl StateVector {
    pub fn new(plant: &[f64], nn: &[f64]) -> Self {
        let mut values = plant.to_vec();
        values.extend_from_slice(nn);
        Self {
            values,
            plant_dim: plant.len(),
        }
    }

    pub fn from_flat(values: Vec<f64>, plant_dim: usize) -> Self {
        assert!(plant_dim <= values.len());
        Self { values, plant_dim }
    }

    pub fn plant(&self) -> &[f64] {
        &self.values[..self.plant_dim]
    }

    pub fn nn(&self) -> &[f64] {
        &self.values[self.plant_dim..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One closed-loop state per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    plant_dim: usize,
    nn_dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, plant_dim: usize, nn_dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(
            "trajectory data",
            grid.len() * (plant_dim + nn_dim),
            data.len(),
        )?;
        Ok(Self {
            grid,
            plant_dim,
            nn_dim,
            data,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn plant_dim(&self) -> usize {
        self.plant_dim
    }

    pub fn nn_dim(&self) -> usize {
        self.nn_dim
    }

    pub fn state_dim(&self) -> usize {
        self.plant_dim + self.nn_dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let n = self.state_dim();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plant(&self, k: usize) -> &[f64] {
        &self.state(k)[..self.plant_dim]
    }

    pub fn nn(&self, k: usize) -> &[f64] {
        &self.state(k)[self.plant_dim..]
    }

    pub fn state_vector(&self, k: usize) -> StateVector {
        StateVector::from_flat(self.state(k).to_vec(), self.plant_dim)
    }

    /// Linear interpolation between the bracketing nodes.
    pub fn eval_state(&self, t: f64) -> Result<Vec<f64>> {
        let (k, s) = self.grid.locate(t)?;
        let (a, b) = (self.state(k), self.state(k + 1));
        Ok(a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn sig(grid: TimeGrid, nodes: &[Vec<f64>]) -> PiecewiseLinearSignal {
        PiecewiseLinearSignal::from_nodes(grid, nodes).unwrap()
    }

    #[test]
    fn scalar_midpoint_and_node() {
        let g = TimeGrid::with_len(1.0, 2).unwrap();
        let s = sig(g, &[vec![1.0], vec![3.0]]);
        assert_eq!(eval_signal(&s, 0.5).unwrap(), vec![2.0]);
        assert_eq!(eval_signal(&s, 1.0).unwrap(), vec![3.0]);
    }

    #[test]
    fn componentwise_interpolation() {
        let g = TimeGrid::new(1.0, 0.5).unwrap();
        let s = sig(g, &[vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert_eq!(eval_signal(&s, 0.25).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn outside_domain_is_error() {
        let g = TimeGrid::with_len(1.0, 2).unwrap();
        let s = sig(g, &[vec![1.0], vec![3.0]]);
        assert!(matches!(s.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(s.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn grid_invariants() {
        let g = TimeGrid::new(35.0, 0.01).unwrap();
        assert_eq!(g.len(), 3501);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3500), 35.0);
        assert!(g.nodes().zip(g.nodes().skip(1)).all(|(a, b)| a < b));
        assert_eq!(g.index_of(30.0), Some(3000));
        assert_eq!(g.index_of(30.005), None);
        assert!(TimeGrid::with_len(1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 0.3).is_err());
    }

    #[test]
    fn in_box_examples() {
        let b1 = BoxSet::new(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(in_box(&[1.5], &b1).unwrap(), vec![1.0]);
        assert_eq!(in_box(&[0.0], &b1).unwrap(), vec![0.0]);
        let b2 = BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(in_box(&[-2.0, 0.3], &b2).unwrap(), vec![-1.0, 0.3]);
        assert!(in_box(&[0.0], &b2).is_err());
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn saturate_examples() {
        let u = BoxSet::new(vec![3.99], vec![4.01]).unwrap();
        let g = TimeGrid::new(35.0, 0.5).unwrap();
        let s = PiecewiseLinearSignal::constant(g, &[4.02]);
        let out = saturate_signal(&s, &u).unwrap();
        assert!(out.values().iter().all(|&v| v == 4.01));
        let inside = PiecewiseLinearSignal::constant(g, &[4.0]);
        assert_eq!(saturate_signal(&inside, &u).unwrap(), inside);

        let g2 = TimeGrid::with_len(35.0, 2).unwrap();
        let s2 = sig(g2, &[vec![3.98], vec![4.00]]);
        let out2 = saturate_signal(&s2, &u).unwrap();
        assert_eq!(out2.node(0), &[3.99]);
        assert_eq!(out2.node(1), &[4.00]);
        assert!(saturate_signal(&s2, &BoxSet::point(vec![0.0, 0.0]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn in_box_idempotent(v in proptest::collection::vec(-10.0..10.0f64, 3),
                             lo in proptest::collection::vec(-5.0..0.0f64, 3),
                             w in proptest::collection::vec(0.0..5.0f64, 3)) {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            let b = BoxSet::new(lo, hi).unwrap();
            let once = in_box(&v, &b).unwrap();
            prop_assert!(b.contains(&once));
            prop_assert_eq!(in_box(&once, &b).unwrap(), once);
        }

        #[test]
        fn eval_exact_at_nodes_and_affine_between(
            vals in proptest::collection::vec(-100.0..100.0f64, 2..40),
            horizon in 0.5..50.0f64,
            s in 0.0..1.0f64,
        ) {
            let g = TimeGrid::with_len(horizon, vals.len()).unwrap();
            let sg = PiecewiseLinearSignal::new(g, 1, vals.clone()).unwrap();
            for (k, t) in g.nodes().enumerate() {
                prop_assert_eq!(sg.eval(t).unwrap()[0], vals[k]);
            }
            let k = ((vals.len() - 1) as f64 * s) as usize % (vals.len() - 1);
            let t = g.node(k) + s * (g.node(k + 1) - g.node(k));
            let expected = vals[k] + s * (vals[k + 1] - vals[k]);
            prop_assert!((sg.eval(t).unwrap()[0] - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }
    }
}
