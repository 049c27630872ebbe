//! Deterministic full-batch L-BFGS and finite-difference gradient checks.
//!
//! The minimizer uses the two-loop recursion with initial inverse-Hessian
//! scaling `sᵀy / yᵀy` and a strong-Wolfe line search (bracketing followed
//! by safeguarded cubic zoom). Objective callbacks write the gradient into a
//! caller-provided buffer and return the value; returning a non-finite value
//! marks the point as inadmissible and the line search backs off.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    /// Number of stored `(s, y)` correction pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `|f_prev − f| ≤ tolerance · max(|f_prev|, |f|)`.
    pub tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
    /// Stop when the gradient's max-norm drops below this.
    pub gradient_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 400,
            tolerance: 1e-7,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            gradient_tolerance: 1e-12,
        }
    }
}

impl LbfgsOptions {
    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidArgument("L-BFGS memory must be at least 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "line search constants must satisfy 0 < c1 < c2 < 1 (got c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        if self.max_line_search == 0 {
            return Err(Error::InvalidArgument("max_line_search must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Relative objective change fell below the tolerance.
    Converged,
    GradientVanished,
    MaxIterations,
    /// No acceptable step was found; the result is the best point seen.
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub f: f64,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start point (iteration 0) and after every accepted step.
    pub trace: Vec<TracePoint>,
    pub termination: Termination,
}

impl Minimum {
    /// Set when the run ended without meeting a convergence criterion
    /// because the line search gave up.
    pub fn warning(&self) -> bool {
        self.termination == Termination::LineSearchFailed
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    fg: &'a mut F,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
    /// Lowest-valued admissible trial that satisfies sufficient decrease.
    best: Option<Point>,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn eval(&mut self, alpha: f64) -> Option<Point> {
        self.evaluations += 1;
        let x: Vec<f64> = self.x0.iter().zip(self.dir).map(|(a, d)| a + alpha * d).collect();
        let mut g = vec![0.0; x.len()];
        let f = (self.fg)(&x, &mut g);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let slope = dot(&g, self.dir);
        let p = Point { alpha, x, f, g, slope };
        if self.armijo(&p) && self.best.as_ref().is_none_or(|b| p.f < b.f) {
            self.best = Some(Point {
                alpha: p.alpha,
                x: p.x.clone(),
                f: p.f,
                g: p.g.clone(),
                slope: p.slope,
            });
        }
        Some(p)
    }

    fn armijo(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    fn search(mut self, alpha_init: f64) -> (Option<Point>, usize) {
        let mut prev = Point {
            alpha: 0.0,
            x: self.x0.to_vec(),
            f: self.f0,
            g: Vec::new(),
            slope: self.slope0,
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while !self.exhausted() {
            let Some(p) = self.eval(alpha) else {
                // Inadmissible point: pull back toward the last good one.
                alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
                continue;
            };
            if !self.armijo(&p) || (!first && p.f >= prev.f) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return (Some(p), self.evaluations);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            alpha = p.alpha * 2.0;
            prev = p;
        }
        let best = self.best.take();
        (best, self.evaluations)
    }

    fn zoom(mut self, mut lo: Point, mut hi: Point) -> (Option<Point>, usize) {
        while !self.exhausted() {
            let width = hi.alpha - lo.alpha;
            if width.abs() <= 1e-14 * lo.alpha.abs().max(1e-10) {
                break;
            }
            let alpha = interpolate(&lo, &hi);
            let Some(p) = self.eval(alpha) else {
                hi = Point {
                    alpha,
                    x: Vec::new(),
                    f: f64::INFINITY,
                    g: Vec::new(),
                    slope: f64::NAN,
                };
                continue;
            };
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return (Some(p), self.evaluations);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        let best = self.best.take();
        (best, self.evaluations)
    }
}

/// Minimizer of the cubic through `(lo, hi)` using values and slopes, kept
/// inside the middle 80% of the bracket. Falls back to bisection when the
/// cubic is unusable.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let low = a.min(b) + 0.1 * width.abs();
    let high = a.max(b) - 0.1 * width.abs();
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let t = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if t.is_finite() {
        t.clamp(low, high)
    } else {
        mid
    }
}

/// Minimizes `f` starting at `x0`. `fg(x, grad)` must return `f(x)` and
/// write `∇f(x)` into `grad`.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &LbfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    opts.validate()?;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut f = fg(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            reason: format!("non-finite objective or gradient at the start point (f = {f})"),
            last_x: x,
            last_f: f,
        });
    }

    let mut trace = vec![TracePoint { iteration: 0, f }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut dir = vec![0.0; dim];

    let termination = loop {
        if max_abs(&g) <= opts.gradient_tolerance {
            break Termination::GradientVanished;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }

        two_loop(&g, &history, &mut dir);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction: drop curvature memory, use steepest descent.
            history.clear();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi;
            }
            slope = dot(&g, &dir);
        }
        let alpha_init = if history.is_empty() {
            (1.0 / max_abs(&g).max(1e-300)).min(1.0)
        } else {
            1.0
        };

        let ls = LineSearch {
            fg: &mut fg,
            x0: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            c1: opts.c1,
            c2: opts.c2,
            budget: opts.max_line_search,
            evaluations: 0,
            best: None,
        };
        let (accepted, used) = ls.search(alpha_init);
        evaluations += used;
        let Some(p) = accepted.filter(|p| p.f <= f) else {
            break Termination::LineSearchFailed;
        };

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let f_prev = f;
        x = p.x;
        g = p.g;
        f = p.f;
        iterations += 1;
        trace.push(TracePoint { iteration: iterations, f });

        if (f_prev - f).abs() <= opts.tolerance * f_prev.abs().max(f.abs()) {
            break Termination::Converged;
        }
    };

    Ok(Minimum {
        x,
        f,
        iterations,
        evaluations,
        trace,
        termination,
    })
}

/// `dir = −H·g` via the two-loop recursion over the stored pairs.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, dir: &mut [f64]) {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[i] - b) * si;
        }
    }
    for (d, qi) in dir.iter_mut().zip(q) {
        *d = -qi;
    }
}

/// Central differences `(f(x+εe_i) − f(x−εe_i)) / 2ε` for every coordinate.
pub fn finite_diff<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Per-coordinate `|a_i − b_i| / max(1, |a_i| + |b_i|)`.
pub fn relative_errors(analytic: &[f64], numeric: &[f64]) -> Vec<f64> {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / (a.abs() + b.abs()).max(1.0))
        .collect()
}

/// Largest symmetric relative error between `grad` and central differences
/// of `f` at `x` (step `1e-5`).
pub fn check_gradient<F>(f: F, grad: &[f64], x: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let fd = finite_diff(f, x, 1e-5);
    relative_errors(grad, &fd).into_iter().fold(0.0, f64::max)
}
