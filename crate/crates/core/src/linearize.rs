//! Finite-difference linearization of the closed loop along a trajectory and
//! the piecewise-affine interpolation `A(t)`, `B(t)` between samples.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::signals::{PiecewiseLinearSignal, Trajectory};
use crate::sim::{rhs, ClosedLoopModel};

/// Base relative step of the central differences.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Jacobians at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: Matrix,
    pub b: Matrix,
    pub rhs_evals: usize,
}

/// `(∂f/∂x, ∂f/∂w)` at `(x, w_t)` with the default difference step.
pub fn linearize_at(model: &ClosedLoopModel, x: &[f64], w_t: &[f64]) -> Result<Linearization> {
    linearize_with_step(model, x, w_t, DEFAULT_EPSILON)
}

/// Central differences with per-coordinate step `eps0 · (1 + |v_j|)`, unless
/// the model registers analytic Jacobians.
pub fn linearize_with_step(
    model: &ClosedLoopModel,
    x: &[f64],
    w_t: &[f64],
    eps0: f64,
) -> Result<Linearization> {
    check_dim("linearization state", model.state_dim(), x.len())?;
    check_dim("linearization input", model.input_dim(), w_t.len())?;
    if let Some(j) = &model.jacobian {
        let (a, b) = j.jacobian(x, w_t);
        return Ok(Linearization { a, b, rhs_evals: 0 });
    }
    let n = x.len();
    let m = w_t.len();
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    let mut evals = 0;

    let mut xp = x.to_vec();
    for j in 0..n {
        let eps = eps0 * (1.0 + libm::fabs(x[j]));
        xp[j] = x[j] + eps;
        let fp = rhs(model, &xp, w_t);
        xp[j] = x[j] - eps;
        let fm = rhs(model, &xp, w_t);
        xp[j] = x[j];
        evals += 2;
        let (fp, fm) = match (fp, fm) {
            (Ok(p), Ok(m)) => (p, m),
            _ => return Err(Error::Linearization { wrt: "state", index: j }),
        };
        for i in 0..n {
            let d = (fp[i] - fm[i]) / (2.0 * eps);
            if !d.is_finite() {
                return Err(Error::Linearization { wrt: "state", index: j });
            }
            a[(i, j)] = d;
        }
    }
    let mut wp = w_t.to_vec();
    for j in 0..m {
        let eps = eps0 * (1.0 + libm::fabs(w_t[j]));
        wp[j] = w_t[j] + eps;
        let fp = rhs(model, x, &wp);
        wp[j] = w_t[j] - eps;
        let fm = rhs(model, x, &wp);
        wp[j] = w_t[j];
        evals += 2;
        let (fp, fm) = match (fp, fm) {
            (Ok(p), Ok(m)) => (p, m),
            _ => return Err(Error::Linearization { wrt: "input", index: j }),
        };
        for i in 0..n {
            let d = (fp[i] - fm[i]) / (2.0 * eps);
            if !d.is_finite() {
                return Err(Error::Linearization { wrt: "input", index: j });
            }
            b[(i, j)] = d;
        }
    }
    Ok(Linearization { a, b, rhs_evals: evals })
}

/// Sampled `(t_k, A_k, B_k)` on `[0, t*]`, equispaced in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationSchedule {
    times: Vec<f64>,
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    pub rhs_evals: usize,
}

impl LinearizationSchedule {
    /// Builds a schedule from explicit samples. A single sample is allowed
    /// only for the degenerate span `[0, 0]`.
    pub fn from_samples(times: Vec<f64>, a: Vec<Matrix>, b: Vec<Matrix>) -> Result<Self> {
        check_dim("schedule A samples", times.len(), a.len())?;
        check_dim("schedule B samples", times.len(), b.len())?;
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::Config("schedule must start at t = 0".into()));
        }
        if times.len() == 1 && times[0] != 0.0 {
            return Err(Error::Config("single-sample schedule must be at t = 0".into()));
        }
        if times.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config("schedule times must increase strictly".into()));
        }
        let (n, m) = (a[0].rows(), b[0].cols());
        for (ak, bk) in a.iter().zip(&b) {
            check_dim("schedule A rows", n, ak.rows())?;
            check_dim("schedule A cols", n, ak.cols())?;
            check_dim("schedule B rows", n, bk.rows())?;
            check_dim("schedule B cols", m, bk.cols())?;
        }
        Ok(Self {
            times,
            a,
            b,
            rhs_evals: 0,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn a_samples(&self) -> &[Matrix] {
        &self.a
    }

    pub fn b_samples(&self) -> &[Matrix] {
        &self.b
    }

    pub fn span(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].cols()
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let span = self.span();
        if !(0.0..=span).contains(&t) {
            return Err(Error::Domain { t, lo: 0.0, hi: span });
        }
        if self.times.len() == 1 {
            return Ok((0, 1.0));
        }
        // Sample times are not assumed uniform.
        let k = match self.times.binary_search_by(|s| s.partial_cmp(&t).expect("finite")) {
            Ok(i) => return Ok((i.min(self.times.len() - 2), if i == self.times.len() - 1 { 0.0 } else { 1.0 })),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        Ok((k, (t1 - t) / (t1 - t0)))
    }

    /// `A(t) = α_k A_k + α_{k+1} A_{k+1}` with `α_k = (t_{k+1} − t)/(t_{k+1} − t_k)`.
    pub fn interp(&self, t: f64) -> Result<(Matrix, Matrix)> {
        let (k, alpha) = self.bracket(t)?;
        if self.times.len() == 1 {
            return Ok((self.a[0].clone(), self.b[0].clone()));
        }
        Ok((
            Matrix::lincomb(alpha, &self.a[k], 1.0 - alpha, &self.a[k + 1]),
            Matrix::lincomb(alpha, &self.b[k], 1.0 - alpha, &self.b[k + 1]),
        ))
    }

    /// `A(t)ᵀ v` without materializing `A(t)`.
    pub(crate) fn a_tr_mul(&self, t: f64, v: &[f64], out: &mut [f64]) -> Result<()> {
        let (k, alpha) = self.bracket(t)?;
        self.a[k].tr_mul_vec(v, out);
        if alpha != 1.0 && self.times.len() > 1 {
            let mut other = vec![0.0; out.len()];
            self.a[k + 1].tr_mul_vec(v, &mut other);
            for (o, p) in out.iter_mut().zip(&other) {
                *o = alpha * *o + (1.0 - alpha) * p;
            }
        }
        Ok(())
    }

    /// `B(t)ᵀ v`.
    pub(crate) fn b_tr_mul(&self, t: f64, v: &[f64], out: &mut [f64]) -> Result<()> {
        let (k, alpha) = self.bracket(t)?;
        self.b[k].tr_mul_vec(v, out);
        if alpha != 1.0 && self.times.len() > 1 {
            let mut other = vec![0.0; out.len()];
            self.b[k + 1].tr_mul_vec(v, &mut other);
            for (o, p) in out.iter_mut().zip(&other) {
                *o = alpha * *o + (1.0 - alpha) * p;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`LinearizationSchedule::interp`].
pub fn interp(schedule: &LinearizationSchedule, t: f64) -> Result<(Matrix, Matrix)> {
    schedule.interp(t)
}

/// Number of linearization samples used when none is given: `min(100, nodes in [0, t*])`.
pub fn default_num_samples(nodes_in_span: usize) -> usize {
    nodes_in_span.clamp(2, 100)
}

/// Linearizes at `num_samples` equispaced times in `[0, t*]`, reading state
/// and input from `traj` and `w` (interpolated between nodes).
pub fn build_schedule(
    model: &ClosedLoopModel,
    traj: &Trajectory,
    w: &PiecewiseLinearSignal,
    t_star: f64,
    num_samples: usize,
) -> Result<LinearizationSchedule> {
    if traj.grid().index_of(t_star).is_none() {
        return Err(Error::Config(alloc::format!(
            "t* = {t_star} is not a node of the trajectory grid"
        )));
    }
    let times: Vec<f64> = if t_star == 0.0 {
        vec![0.0]
    } else {
        if num_samples < 2 {
            return Err(Error::Config("need at least 2 linearization samples".into()));
        }
        let dt = t_star / (num_samples - 1) as f64;
        (0..num_samples)
            .map(|k| if k + 1 == num_samples { t_star } else { k as f64 * dt })
            .collect()
    };
    let mut a = Vec::with_capacity(times.len());
    let mut b = Vec::with_capacity(times.len());
    let mut evals = 0;
    for (k, &t) in times.iter().enumerate() {
        let wrap = |e: Error| Error::Schedule {
            sample: k,
            source: Box::new(e),
        };
        let x = traj.eval_state(t).map_err(wrap)?;
        let wt = w.eval(t).map_err(wrap)?;
        let lin = linearize_at(model, &x, &wt).map_err(wrap)?;
        evals += lin.rhs_evals;
        a.push(lin.a);
        b.push(lin.b);
    }
    let mut s = LinearizationSchedule::from_samples(times, a, b)?;
    s.rhs_evals = evals;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{FnPlant, LinearPlant};
    use crate::signals::{BoxSet, TimeGrid};
    use crate::sim::{simulate, ClosedLoopModel};
    use crate::stl::Variables;
    use alloc::string::String;
    use alloc::sync::Arc;

    fn model_from(plant: Arc<dyn crate::sim::Plant>) -> ClosedLoopModel {
        let n = plant.dim();
        let m = plant.input_dim();
        ClosedLoopModel {
            name: "test".into(),
            plant,
            controller: None,
            input_box: BoxSet::new(vec![-10.0; m], vec![10.0; m]).unwrap(),
            init_box: BoxSet::new(vec![-10.0; n], vec![10.0; n]).unwrap(),
            horizon: 1.0,
            step: 0.01,
            spec: String::new(),
            variables: Variables::new(n),
            constants: Vec::new(),
            jacobian: None,
        }
    }

    #[test]
    fn quadratic_derivative() {
        let m = model_from(Arc::new(FnPlant::new(1, 1, |x, _w, out| out[0] = -x[0] * x[0])));
        let lin = linearize_at(&m, &[2.0], &[0.0]).unwrap();
        assert!((lin.a[(0, 0)] + 4.0).abs() < 1e-6);
        assert_eq!(lin.rhs_evals, 4);
    }

    #[test]
    fn bilinear_exact() {
        let m = model_from(Arc::new(FnPlant::new(1, 1, |x, w, out| out[0] = x[0] * w[0])));
        let lin = linearize_at(&m, &[2.0], &[3.0]).unwrap();
        assert!((lin.a[(0, 0)] - 3.0).abs() < 1e-8);
        assert!((lin.b[(0, 0)] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_quotient_names_coordinate() {
        let m = model_from(Arc::new(FnPlant::new(2, 1, |x, _w, out| {
            out[0] = x[0];
            out[1] = if x[1] > 1.0 { f64::NAN } else { x[1] };
        })));
        assert_eq!(
            linearize_at(&m, &[0.0, 1.0], &[0.0]).unwrap_err(),
            Error::Linearization { wrt: "state", index: 1 }
        );
    }

    #[test]
    fn schedule_endpoints_and_interp() {
        let a = Matrix::from_rows(&[&[-1.0, 0.5], &[0.0, -2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let m = model_from(Arc::new(LinearPlant::new(a.clone(), b.clone()).unwrap()));
        let g = m.grid().unwrap();
        let w = PiecewiseLinearSignal::constant(g, &[0.3]);
        let traj = simulate(&m, &[1.0, 1.0], &w, g).unwrap().trajectory;
        let s = build_schedule(&m, &traj, &w, 0.5, 2).unwrap();
        assert_eq!(s.times(), &[0.0, 0.5]);
        for ak in s.a_samples() {
            assert!(ak.max_abs_diff(&a) < 1e-7);
        }
        let (at, bt) = s.interp(0.37).unwrap();
        assert!(at.max_abs_diff(&a) < 1e-7 && bt.max_abs_diff(&b) < 1e-7);
        assert!(s.interp(0.6).is_err());
        assert!(build_schedule(&m, &traj, &w, 0.505, 2).is_err());
    }

    fn two_sample() -> LinearizationSchedule {
        let a0 = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let a1 = Matrix::from_rows(&[&[3.0, 0.0], &[-1.0, 8.0]]).unwrap();
        let b0 = Matrix::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let b1 = Matrix::from_rows(&[&[0.0], &[2.0]]).unwrap();
        LinearizationSchedule::from_samples(vec![0.0, 2.0], vec![a0, a1], vec![b0, b1]).unwrap()
    }

    #[test]
    fn interp_exact_at_samples_and_midpoint_average() {
        let s = two_sample();
        assert_eq!(interp(&s, 0.0).unwrap().0, s.a_samples()[0]);
        assert_eq!(interp(&s, 2.0).unwrap().0, s.a_samples()[1]);
        assert_eq!(interp(&s, 2.0).unwrap().1, s.b_samples()[1]);
        let (am, bm) = interp(&s, 1.0).unwrap();
        assert_eq!(am, Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 6.0]]).unwrap());
        assert_eq!(bm, Matrix::from_rows(&[&[0.5], &[1.0]]).unwrap());
    }

    #[test]
    fn transpose_products_agree_with_interp() {
        let s = two_sample();
        for &t in &[0.0, 0.3, 1.0, 1.7, 2.0] {
            let (a, b) = s.interp(t).unwrap();
            let v = [0.7, -1.3];
            let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
            a.tr_mul_vec(&v, &mut x);
            s.a_tr_mul(t, &v, &mut y).unwrap();
            assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
            let (mut p, mut q) = ([0.0; 1], [0.0; 1]);
            b.tr_mul_vec(&v, &mut p);
            s.b_tr_mul(t, &v, &mut q).unwrap();
            assert!((p[0] - q[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_schedule_interpolates_constant() {
        let a = Matrix::identity(2);
        let b = Matrix::zeros(2, 1);
        let s = LinearizationSchedule::from_samples(
            vec![0.0, 1.0, 2.0],
            vec![a.clone(), a.clone(), a.clone()],
            vec![b.clone(), b.clone(), b.clone()],
        )
        .unwrap();
        for t in [0.0, 0.25, 1.0, 1.5, 2.0] {
            assert_eq!(s.interp(t).unwrap().0, a);
        }
        let g = TimeGrid::new(1.0, 0.5).unwrap();
        assert_eq!(g.len(), 3);
    }
}
