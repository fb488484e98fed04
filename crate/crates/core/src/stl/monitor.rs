use alloc::vec::Vec;

use super::{Formula, Interval, Predicate};
use crate::error::{check_dim, Error, Result};
use crate::signals::{TimeGrid, Trajectory};

/// Monitor output: robustness plus the node and predicate that realize it.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCertificate {
    pub robustness: f64,
    pub critical_time: f64,
    /// Grid index of `critical_time`.
    pub critical_index: usize,
    pub critical_predicate: Predicate,
    /// Nearest point on the critical predicate's boundary (plant coordinates).
    pub critical_point: Vec<f64>,
    /// `[critical_point, x_nn(t*)]`; the network block matches the trajectory exactly.
    pub augmented_target: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    value: f64,
    node: usize,
    pred: usize,
}

const NO_PRED: usize = usize::MAX;

impl Cell {
    fn empty(value: f64, node: usize) -> Self {
        Self {
            value,
            node,
            pred: NO_PRED,
        }
    }

    /// Ties go to the earlier critical node, then to the incumbent.
    fn lower(self, other: Cell) -> Cell {
        if other.value < self.value || (other.value == self.value && other.node < self.node) {
            other
        } else {
            self
        }
    }

    fn higher(self, other: Cell) -> Cell {
        if other.value > self.value || (other.value == self.value && other.node < self.node) {
            other
        } else {
            self
        }
    }
}

struct Monitor<'a> {
    traj: &'a Trajectory,
    grid: TimeGrid,
}

impl Monitor<'_> {
    fn window(&self, iv: &Interval) -> Result<(usize, usize)> {
        let a = self.grid.steps_ceil(iv.lo);
        let b = self.grid.steps_floor(iv.hi);
        if a > b {
            return Err(Error::Config(alloc::format!(
                "interval [{}, {}] contains no multiple of the grid step {}",
                iv.lo,
                iv.hi,
                self.grid.step()
            )));
        }
        Ok((a, b))
    }

    /// Robustness table of `f` at nodes `0..=upto`.
    fn eval(&self, f: &Formula, upto: usize) -> Result<Vec<Cell>> {
        let last = self.grid.len() - 1;
        Ok(match f {
            Formula::Pred(p) => (0..=upto)
                .map(|k| Cell {
                    value: p.robustness(self.traj.plant(k)),
                    node: k,
                    pred: p.id,
                })
                .collect(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let ta = self.eval(a, upto)?;
                let tb = self.eval(b, upto)?;
                let and = matches!(f, Formula::And(..));
                ta.into_iter()
                    .zip(tb)
                    .map(|(x, y)| if and { x.lower(y) } else { x.higher(y) })
                    .collect()
            }
            Formula::Always(iv, a) | Formula::Eventually(iv, a) => {
                let (wa, wb) = self.window(iv)?;
                let child = self.eval(a, (upto + wb).min(last))?;
                let always = matches!(f, Formula::Always(..));
                (0..=upto)
                    .map(|k| {
                        let init = Cell::empty(
                            if always { f64::INFINITY } else { f64::NEG_INFINITY },
                            usize::MAX,
                        );
                        let hi = (k + wb).min(last);
                        let lo = k + wa;
                        if lo > hi {
                            return init;
                        }
                        child[lo..=hi].iter().fold(init, |acc, c| {
                            if always {
                                acc.lower(*c)
                            } else {
                                acc.higher(*c)
                            }
                        })
                    })
                    .collect()
            }
            Formula::Until(iv, a, b) | Formula::Release(iv, a, b) => {
                let (wa, wb) = self.window(iv)?;
                let reach = (upto + wb).min(last);
                let ta = self.eval(a, reach)?;
                let tb = self.eval(b, reach)?;
                let until = matches!(f, Formula::Until(..));
                let (outer_init, inner_init) = if until {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (f64::INFINITY, f64::NEG_INFINITY)
                };
                (0..=upto)
                    .map(|k| {
                        let mut acc = Cell::empty(outer_init, usize::MAX);
                        // Aggregate of the left operand over [k, j).
                        let mut prefix = Cell::empty(inner_init, usize::MAX);
                        for j in k..=(k + wb).min(last) {
                            if j >= k + wa {
                                let here = if until {
                                    tb[j].lower(prefix)
                                } else {
                                    tb[j].higher(prefix)
                                };
                                acc = if until { acc.higher(here) } else { acc.lower(here) };
                            }
                            prefix = if until {
                                prefix.lower(ta[j])
                            } else {
                                prefix.higher(ta[j])
                            };
                        }
                        acc
                    })
                    .collect()
            }
        })
    }
}

/// Discrete-time robustness of `phi` on `traj` at time 0, with certificate.
pub fn robustness(phi: &Formula, traj: &Trajectory) -> Result<RobustnessCertificate> {
    let grid = *traj.grid();
    let hz = phi.horizon();
    if hz > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::Horizon {
            formula: hz,
            trajectory: grid.horizon(),
        });
    }
    if phi.coordinate_span() > traj.plant_dim() {
        return Err(Error::Dimension {
            context: "formula coordinates",
            expected: traj.plant_dim(),
            got: phi.coordinate_span(),
        });
    }
    let root = Monitor { traj, grid }.eval(phi, 0)?[0];
    if !root.value.is_finite() || root.pred == NO_PRED {
        return Err(Error::Config(alloc::format!(
            "formula has no defined robustness on this grid (value {})",
            root.value
        )));
    }
    let pred = phi
        .predicate(root.pred)
        .expect("critical predicate id comes from the formula")
        .clone();
    let z = pred.critical_point(traj.plant(root.node));
    let mut r = z.clone();
    r.extend_from_slice(traj.nn(root.node));
    Ok(RobustnessCertificate {
        robustness: root.value,
        critical_time: grid.node(root.node),
        critical_index: root.node,
        critical_predicate: pred,
        critical_point: z,
        augmented_target: r,
    })
}

/// `½ ‖x(t*) − r*‖²` on `traj` for the certificate's critical node.
pub fn cost_from_certificate(traj: &Trajectory, cert: &RobustnessCertificate) -> Result<f64> {
    check_dim("certificate target", traj.state_dim(), cert.augmented_target.len())?;
    if cert.critical_index >= traj.len() {
        return Err(Error::Dimension {
            context: "critical index",
            expected: traj.len(),
            got: cert.critical_index,
        });
    }
    let x = traj.state(cert.critical_index);
    Ok(0.5
        * x.iter()
            .zip(&cert.augmented_target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// Euclidean distance between the plant state at `t*` and `z*`.
#[allow(dead_code)]
pub(crate) fn certificate_distance(traj: &Trajectory, cert: &RobustnessCertificate) -> f64 {
    let x = traj.plant(cert.critical_index);
    libm::sqrt(
        x.iter()
            .zip(&cert.critical_point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    )
}
