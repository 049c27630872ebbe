//! RBF-kernel C-SVM, one-vs-rest over classes.
//!
//! Each binary problem is the standard dual
//! `min ½ αᵀQα − Σα` with `Q_ij = y_i y_j K_ij`, `Σ y_i α_i = 0`,
//! `0 ≤ α_i ≤ C`, solved by SMO with the maximal-violating-pair working set.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::sq_distances;
use crate::ae::FeatureMatrix;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c_box: f64,
    /// `K(u, v) = exp(−g ‖u − v‖²)`.
    pub g_rbf: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Per binary problem; `None` means `max(10⁷, 100 n)`.
    pub max_iterations: Option<usize>,
}

impl SvmParams {
    pub fn new(c_box: f64, g_rbf: f64) -> Self {
        Self { c_box, g_rbf, tolerance: 1e-3, max_iterations: None }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_box", self.c_box), ("g_rbf", self.g_rbf), ("tolerance", self.tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain("SvmParams", format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn rbf_kernel(sq_dist: ArrayView2<'_, f64>, g: f64) -> Array2<f64> {
    sq_dist.mapv(|d| (-g * d).exp())
}

/// Solves one binary problem on a precomputed `n × n` kernel; `y` is ±1.
pub fn smo(k: ArrayView2<'_, f64>, y: &[f64], c: f64, tol: f64, max_iterations: Option<usize>) -> Result<BinarySolution> {
    let n = y.len();
    if k.dim() != (n, n) {
        return Err(Error::shape("kernel matrix", n * n, k.len()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::domain("smo", "labels must be +1 or -1"));
    }
    let k = k.as_standard_layout();
    let row = |i: usize| &k.as_slice().unwrap()[i * n..(i + 1) * n];
    let max_iter = max_iterations.unwrap_or_else(|| (100 * n).max(10_000_000));

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                (i, gmax) = (t, v);
            }
            if low(alpha[t], y[t]) && v < gmin {
                (j, gmin) = (t, v);
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ki, kj) = (row(i), row(j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (ki[i] + kj[j] + 2.0 * ki[j] * y[i] * y[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (ki[i] + kj[j] - 2.0 * ki[j] * y[i] * y[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = ((alpha[i] - old_i) * y[i], (alpha[j] - old_j) * y[j]);
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance {tol}");
    }

    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(BinarySolution { alpha, bias: -rho, iterations, converged })
}

/// Largest KKT violation measured on `y f(x)` at the training points.
pub fn kkt_violation(k: ArrayView2<'_, f64>, y: &[f64], sol: &BinarySolution, c: f64) -> f64 {
    let coef: Array1<f64> = sol.alpha.iter().zip(y).map(|(a, yy)| a * yy).collect();
    let f = k.dot(&coef) + sol.bias;
    let mut worst: f64 = 0.0;
    for t in 0..y.len() {
        let m = y[t] * f[t] - 1.0;
        let v = if sol.alpha[t] <= 0.0 {
            (-m).max(0.0)
        } else if sol.alpha[t] >= c {
            m.max(0.0)
        } else {
            m.abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// One-vs-rest machines expressed over a shared training kernel.
pub(crate) struct OvrSolution {
    pub classes: Vec<usize>,
    /// `classes × n`, entries `α_i y_i`.
    pub coef: Array2<f64>,
    pub bias: Vec<f64>,
}

impl OvrSolution {
    /// Decision values given `K(x, train)` rows.
    pub fn decision(&self, k_cross: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut d = k_cross.dot(&self.coef.t());
        for mut r in d.outer_iter_mut() {
            r += &Array1::from(self.bias.clone());
        }
        d
    }
}

pub(crate) fn classes_of(y: &[usize]) -> Vec<usize> {
    let mut c = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

pub(crate) fn train_ovr(k: ArrayView2<'_, f64>, y: &[usize], p: &SvmParams) -> Result<OvrSolution> {
    let classes = classes_of(y);
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {}", classes.len())));
    }
    let mut coef = Array2::zeros((classes.len(), y.len()));
    let mut bias = Vec::with_capacity(classes.len());
    for (ci, &c) in classes.iter().enumerate() {
        let yb: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let sol = smo(k, &yb, p.c_box, p.tolerance, p.max_iterations)?;
        for (t, a) in sol.alpha.iter().enumerate() {
            coef[[ci, t]] = a * yb[t];
        }
        bias.push(sol.bias);
    }
    Ok(OvrSolution { classes, coef, bias })
}

/// Label of the largest decision value in each row, ties to the lowest class.
pub(crate) fn argmax_labels(decision: ArrayView2<'_, f64>, classes: &[usize]) -> Vec<usize> {
    decision
        .outer_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            classes[best]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<usize>,
    /// Rows used by at least one machine.
    pub support: FeatureMatrix,
    /// `classes × support`, signed dual coefficients `α y`.
    pub coef: Array2<f64>,
    pub bias: Vec<f64>,
    pub g_rbf: f64,
    pub c_box: f64,
}

impl SvmModel {
    pub fn num_support(&self) -> usize {
        self.support.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coef.dim() != (self.classes.len(), self.support.nrows()) || self.bias.len() != self.classes.len() {
            return Err(Error::shape("svm coefficients", self.classes.len() * self.support.nrows(), self.coef.len()));
        }
        if let Some(a) = self.coef.iter().find(|a| a.abs() > self.c_box * (1.0 + 1e-12)) {
            return Err(Error::domain("SvmModel", format!("|alpha| = {} exceeds C = {}", a.abs(), self.c_box)));
        }
        Ok(())
    }

    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.support.ncols() {
            return Err(Error::shape("svm feature dim", self.support.ncols(), x.ncols()));
        }
        let k = rbf_kernel(sq_distances(x, self.support.view())?.view(), self.g_rbf);
        let sol = OvrSolution { classes: vec![], coef: self.coef.clone(), bias: self.bias.clone() };
        Ok(sol.decision(k.view()))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(argmax_labels(self.decision_values(x)?.view(), &self.classes))
    }
}

fn check_training(x: ArrayView2<'_, f64>, y: &[usize]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::shape("svm labels", x.nrows(), y.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("svm_train", "non-finite feature"));
    }
    Ok(())
}

pub fn svm_train(x: ArrayView2<'_, f64>, y: &[usize], p: &SvmParams) -> Result<SvmModel> {
    check_training(x, y)?;
    svm_train_with_distances(x, y, sq_distances(x, x)?.view(), p)
}

/// As [`svm_train`] with the `n × n` squared distances of `x` supplied.
pub fn svm_train_with_distances(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    sq_dist: ArrayView2<'_, f64>,
    p: &SvmParams,
) -> Result<SvmModel> {
    p.validate()?;
    check_training(x, y)?;
    if sq_dist.dim() != (y.len(), y.len()) {
        return Err(Error::shape("svm distance matrix", y.len() * y.len(), sq_dist.len()));
    }
    let sol = train_ovr(rbf_kernel(sq_dist, p.g_rbf).view(), y, p)?;
    let keep: Vec<usize> = (0..y.len()).filter(|&t| sol.coef.column(t).iter().any(|&a| a != 0.0)).collect();
    Ok(SvmModel {
        classes: sol.classes,
        support: x.select(Axis(0), &keep),
        coef: sol.coef.select(Axis(1), &keep),
        bias: sol.bias,
        g_rbf: p.g_rbf,
        c_box: p.c_box,
    })
}

pub fn svm_predict(m: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    m.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn clusters() -> (Array2<f64>, Vec<usize>) {
        let x = array![[0.18], [0.2], [0.22], [0.19], [0.78], [0.8], [0.82], [0.81]];
        (x, vec![0, 0, 0, 0, 1, 1, 1, 1])
    }

    #[test]
    fn separable_clusters() {
        let (x, y) = clusters();
        let m = svm_train(x.view(), &y, &SvmParams::new(10.0, 5.0)).unwrap();
        m.validate().unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y);
        let held = array![[0.0], [0.3], [0.45], [0.55], [0.7], [1.0]];
        assert_eq!(m.predict(held.view()).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        let sv_labels = m.predict(m.support.view()).unwrap();
        for (row, l) in m.support.outer_iter().zip(sv_labels) {
            assert_eq!(l, usize::from(row[0] > 0.5));
        }
    }

    #[test]
    fn xor_needs_the_kernel() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = vec![0, 0, 1, 1];
        let m = svm_train(x.view(), &y, &SvmParams::new(100.0, 2.0)).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn symmetric_tie_goes_to_lowest_class() {
        let x = array![[-1.0], [1.0]];
        let m = svm_train(x.view(), &[3, 7], &SvmParams::new(1.0, 1.0)).unwrap();
        assert_eq!(m.predict(array![[0.0]].view()).unwrap(), vec![3]);
        assert_eq!(m.predict(array![[0.9]].view()).unwrap(), vec![7]);
    }

    #[test]
    fn duplication_invariance() {
        let (x, y) = clusters();
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let p = SvmParams { tolerance: 1e-10, ..SvmParams::new(1e3, 5.0) };
        let a = svm_train(x.view(), &y, &p).unwrap();
        let b = svm_train(x2.view(), &y2, &p).unwrap();
        let probe = Array2::from_shape_fn((21, 1), |(i, _)| i as f64 / 20.0);
        let (da, db) = (a.decision_values(probe.view()).unwrap(), b.decision_values(probe.view()).unwrap());
        for (u, v) in da.iter().zip(&db) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn kkt_holds_after_training() {
        let x = array![[0.1, 0.3], [0.4, 0.1], [0.5, 0.6], [0.9, 0.2], [0.3, 0.9], [0.7, 0.8], [0.2, 0.2]];
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0];
        let k = rbf_kernel(sq_distances(x.view(), x.view()).unwrap().view(), 3.0);
        for c in [0.1, 1.0, 100.0] {
            let sol = smo(k.view(), &y, c, 1e-3, None).unwrap();
            assert!(sol.converged);
            assert!(kkt_violation(k.view(), &y, &sol, c) <= 1e-3 + 1e-12);
            let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!(balance.abs() < 1e-12);
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        }
    }

    #[test]
    fn errors() {
        let (x, y) = clusters();
        assert!(svm_train(x.view(), &[0; 8], &SvmParams::new(1.0, 1.0)).is_err());
        assert!(svm_train(x.view(), &y[..7], &SvmParams::new(1.0, 1.0)).is_err());
        assert!(svm_train(x.view(), &y, &SvmParams::new(0.0, 1.0)).is_err());
        let m = svm_train(x.view(), &y, &SvmParams::new(1.0, 1.0)).unwrap();
        assert!(m.predict(array![[0.0, 1.0]].view()).is_err());
    }
}
