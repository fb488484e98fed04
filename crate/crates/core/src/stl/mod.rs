//! Signal Temporal Logic formulas, their discrete-time robustness, and the
//! falsification certificate `(d, t*, z*, r*)` extracted from the monitor.

mod monitor;
mod parse;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

pub use monitor::{cost_from_certificate, robustness, RobustnessCertificate};
pub use parse::{parse_formula, Variables};

use crate::linalg::{dot, norm};

/// Closed time interval `[lo, hi]` relative to the current instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (0.0 <= lo && lo <= hi && hi.is_finite()).then_some(Self { lo, hi })
    }
}

/// Atomic constraint over plant coordinates (0-based indices).
#[derive(Debug, Clone, PartialEq)]
pub enum PredicateKind {
    /// `a · x <= b`
    Halfspace { coeffs: Vec<f64>, bound: f64 },
    /// `x[index] <= bound`
    Upper { index: usize, bound: f64 },
    /// `x[index] >= bound`
    Lower { index: usize, bound: f64 },
    /// `x[index] in [lo, hi]`
    Within { index: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    /// Pre-order position among the predicates of the enclosing formula.
    pub id: usize,
    pub kind: PredicateKind,
}

impl Predicate {
    pub fn new(kind: PredicateKind) -> Self {
        Self { id: 0, kind }
    }

    /// Largest plant coordinate referenced, plus one.
    pub fn coordinate_span(&self) -> usize {
        match &self.kind {
            PredicateKind::Halfspace { coeffs, .. } => coeffs.len(),
            PredicateKind::Upper { index, .. }
            | PredicateKind::Lower { index, .. }
            | PredicateKind::Within { index, .. } => index + 1,
        }
    }

    /// Signed distance from `x` to the set where the predicate is false.
    pub fn robustness(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PredicateKind::Halfspace { coeffs, bound } => {
                (bound - dot(coeffs, x)) / norm(coeffs)
            }
            PredicateKind::Upper { index, bound } => bound - x[*index],
            PredicateKind::Lower { index, bound } => x[*index] - bound,
            PredicateKind::Within { index, lo, hi } => (x[*index] - lo).min(hi - x[*index]),
        }
    }

    /// Nearest point to `x` on the boundary that realizes [`Self::robustness`].
    pub fn critical_point(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        match &self.kind {
            PredicateKind::Halfspace { coeffs, bound } => {
                let s = (bound - dot(coeffs, x)) / dot(coeffs, coeffs);
                for (zi, ai) in z.iter_mut().zip(coeffs) {
                    *zi += s * ai;
                }
            }
            PredicateKind::Upper { index, bound } | PredicateKind::Lower { index, bound } => {
                z[*index] = *bound;
            }
            PredicateKind::Within { index, lo, hi } => {
                let xi = x[*index];
                z[*index] = if xi - lo <= hi - xi { *lo } else { *hi };
            }
        }
        z
    }

    /// Negated predicate, expressed as a formula in negation normal form.
    fn negated(&self) -> Formula {
        let pred = |kind| Formula::Pred(Predicate::new(kind));
        match &self.kind {
            PredicateKind::Halfspace { coeffs, bound } => pred(PredicateKind::Halfspace {
                coeffs: coeffs.iter().map(|a| -a).collect(),
                bound: -bound,
            }),
            PredicateKind::Upper { index, bound } => pred(PredicateKind::Lower {
                index: *index,
                bound: *bound,
            }),
            PredicateKind::Lower { index, bound } => pred(PredicateKind::Upper {
                index: *index,
                bound: *bound,
            }),
            PredicateKind::Within { index, lo, hi } => Formula::Or(
                Box::new(pred(PredicateKind::Upper {
                    index: *index,
                    bound: *lo,
                })),
                Box::new(pred(PredicateKind::Lower {
                    index: *index,
                    bound: *hi,
                })),
            ),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PredicateKind::Halfspace { coeffs, bound } => {
                let mut first = true;
                for (i, a) in coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                    if !first {
                        write!(f, " + ")?;
                    }
                    write!(f, "{a:?}*x{}", i + 1)?;
                    first = false;
                }
                write!(f, " <= {bound:?}")
            }
            PredicateKind::Upper { index, bound } => write!(f, "x{} <= {bound:?}", index + 1),
            PredicateKind::Lower { index, bound } => write!(f, "x{} >= {bound:?}", index + 1),
            PredicateKind::Within { index, lo, hi } => {
                write!(f, "x{} in [{lo:?}, {hi:?}]", index + 1)
            }
        }
    }
}

/// STL formula in negation normal form.
///
/// Negation is pushed onto predicates at construction, so the monitor only
/// ever combines predicate values with `min` and `max`. `Release` is the dual
/// of `Until` and appears only as the result of negating one.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred(Predicate),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Release(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(kind: PredicateKind) -> Self {
        Formula::Pred(Predicate::new(kind)).numbered()
    }

    pub fn and(self, rhs: Formula) -> Self {
        Formula::And(Box::new(self), Box::new(rhs)).numbered()
    }

    pub fn or(self, rhs: Formula) -> Self {
        Formula::Or(Box::new(self), Box::new(rhs)).numbered()
    }

    pub fn implies(self, rhs: Formula) -> Self {
        self.negate().or(rhs)
    }

    pub fn always(iv: Interval, f: Formula) -> Self {
        Formula::Always(iv, Box::new(f)).numbered()
    }

    pub fn eventually(iv: Interval, f: Formula) -> Self {
        Formula::Eventually(iv, Box::new(f)).numbered()
    }

    pub fn until(iv: Interval, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(iv, Box::new(lhs), Box::new(rhs)).numbered()
    }

    /// Logical negation, kept in negation normal form.
    pub fn negate(&self) -> Self {
        self.negate_raw().numbered()
    }

    fn negate_raw(&self) -> Self {
        use Formula::*;
        match self {
            Pred(p) => p.negated(),
            And(a, b) => Or(Box::new(a.negate_raw()), Box::new(b.negate_raw())),
            Or(a, b) => And(Box::new(a.negate_raw()), Box::new(b.negate_raw())),
            Always(iv, a) => Eventually(*iv, Box::new(a.negate_raw())),
            Eventually(iv, a) => Always(*iv, Box::new(a.negate_raw())),
            Until(iv, a, b) => Release(*iv, Box::new(a.negate_raw()), Box::new(b.negate_raw())),
            Release(iv, a, b) => Until(*iv, Box::new(a.negate_raw()), Box::new(b.negate_raw())),
        }
    }

    /// Renumbers predicate ids in pre-order.
    fn numbered(mut self) -> Self {
        let mut next = 0;
        self.renumber(&mut next);
        self
    }

    fn renumber(&mut self, next: &mut usize) {
        match self {
            Formula::Pred(p) => {
                p.id = *next;
                *next += 1;
            }
            Formula::Always(_, a) | Formula::Eventually(_, a) => a.renumber(next),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Until(_, a, b)
            | Formula::Release(_, a, b) => {
                a.renumber(next);
                b.renumber(next);
            }
        }
    }

    /// Time span into the future the formula looks at when evaluated at `t`.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::Pred(_) => 0.0,
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Always(iv, a) | Formula::Eventually(iv, a) => iv.hi + a.horizon(),
            Formula::Until(iv, a, b) | Formula::Release(iv, a, b) => {
                iv.hi + a.horizon().max(b.horizon())
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Always(_, a) | Formula::Eventually(_, a) => 1 + a.depth(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Until(_, a, b)
            | Formula::Release(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        match self {
            Formula::Pred(p) => out.push(p),
            Formula::Always(_, a) | Formula::Eventually(_, a) => a.collect_predicates(out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Until(_, a, b)
            | Formula::Release(_, a, b) => {
                a.collect_predicates(out);
                b.collect_predicates(out);
            }
        }
    }

    pub fn predicate(&self, id: usize) -> Option<&Predicate> {
        self.predicates().into_iter().find(|p| p.id == id)
    }

    /// Number of plant coordinates the formula needs.
    pub fn coordinate_span(&self) -> usize {
        self.predicates()
            .iter()
            .map(|p| p.coordinate_span())
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Pred(p) => write!(f, "({p})"),
            Formula::And(a, b) => write!(f, "({a} and {b})"),
            Formula::Or(a, b) => write!(f, "({a} or {b})"),
            Formula::Always(iv, a) => write!(f, "always[{:?},{:?}] {a}", iv.lo, iv.hi),
            Formula::Eventually(iv, a) => write!(f, "eventually[{:?},{:?}] {a}", iv.lo, iv.hi),
            Formula::Until(iv, a, b) => write!(f, "({a} until[{:?},{:?}] {b})", iv.lo, iv.hi),
            Formula::Release(iv, a, b) => {
                // a R b == not (not a U not b)
                write!(
                    f,
                    "(not ({} until[{:?},{:?}] {}))",
                    a.negate(),
                    iv.lo,
                    iv.hi,
                    b.negate()
                )
            }
        }
    }
}
