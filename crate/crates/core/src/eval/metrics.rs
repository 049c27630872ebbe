use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean of per-class F1 over every label seen in either vector.
    #[default]
    Macro,
    /// F1 of pooled counts; equals accuracy for single-label data.
    Micro,
}

/// `2PR / (P + R)` from raw counts, 0 when `P + R = 0`.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1_score(predicted: &[usize], actual: &[usize], avg: Averaging) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::shape("f1 labels", actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::Empty("f1 labels"));
    }
    let k = predicted.iter().chain(actual).max().unwrap() + 1;
    let (mut tp, mut fp, mut fn_) = (vec![0; k], vec![0; k], vec![0; k]);
    let mut present = vec![false; k];
    for (&p, &a) in predicted.iter().zip(actual) {
        present[p] = true;
        present[a] = true;
        if p == a {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[a] += 1;
        }
    }
    Ok(match avg {
        Averaging::Micro => f1_from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
        Averaging::Macro => {
            let classes: Vec<usize> = (0..k).filter(|&c| present[c]).collect();
            classes.iter().map(|&c| f1_from_counts(tp[c], fp[c], fn_[c])).sum::<f64>() / classes.len() as f64
        }
    })
}

pub fn accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::shape("accuracy labels", actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::Empty("accuracy labels"));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// Similarity scores (higher is more alike) for genuine and impostor pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPairs {
    pub scores: Vec<f64>,
    pub genuine: Vec<bool>,
}

impl ScoredPairs {
    pub fn new(scores: Vec<f64>, genuine: Vec<bool>) -> Result<Self> {
        let sp = Self { scores, genuine };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.len() != self.genuine.len() {
            return Err(Error::shape("scored pairs", self.scores.len(), self.genuine.len()));
        }
        if self.scores.iter().any(|s| s.is_nan()) {
            return Err(Error::domain("ScoredPairs", "NaN score"));
        }
        let g = self.genuine.iter().filter(|&&g| g).count();
        if g == 0 || g == self.genuine.len() {
            return Err(Error::domain("ScoredPairs", "need at least one genuine and one impostor pair"));
        }
        Ok(())
    }

    /// Every (query, gallery) pair scored by negated Euclidean distance;
    /// `(q, mates[q])` is genuine.
    pub fn from_distances(dist: ArrayView2<'_, f64>, mates: &[usize]) -> Result<Self> {
        if dist.nrows() != mates.len() {
            return Err(Error::shape("mates", dist.nrows(), mates.len()));
        }
        let mut scores = Vec::with_capacity(dist.len());
        let mut genuine = Vec::with_capacity(dist.len());
        for (q, row) in dist.outer_iter().enumerate() {
            for (g, &d) in row.iter().enumerate() {
                scores.push(-d);
                genuine.push(mates[q] == g);
            }
        }
        Self::new(scores, genuine)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

/// ROC curve from `(0, 0)` (threshold `+inf`) to `(1, 1)`, one point per
/// distinct score, plus the trapezoidal area under it.
pub fn roc_and_auc(sp: &ScoredPairs) -> Result<(Vec<RocPoint>, f64)> {
    sp.validate()?;
    let mut order: Vec<usize> = (0..sp.scores.len()).collect();
    order.sort_by(|&a, &b| sp.scores[b].total_cmp(&sp.scores[a]));
    let n_gen = sp.genuine.iter().filter(|&&g| g).count() as f64;
    let n_imp = sp.genuine.len() as f64 - n_gen;

    let mut curve = vec![RocPoint { threshold: f64::INFINITY, far: 0.0, vr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = sp.scores[order[i]];
        while i < order.len() && sp.scores[order[i]] == t {
            if sp.genuine[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint { threshold: t, far: fp as f64 / n_imp, vr: tp as f64 / n_gen });
    }
    let auc = curve.windows(2).map(|w| (w[1].far - w[0].far) * (w[1].vr + w[0].vr) / 2.0).sum();
    Ok((curve, auc))
}

/// Verification rate at the lowest threshold whose false acceptance rate
/// does not exceed `far`.
pub fn vr_at_far(sp: &ScoredPairs, far: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&far) {
        return Err(Error::domain("vr_at_far", format!("far = {far}")));
    }
    let (curve, _) = roc_and_auc(sp)?;
    Ok(curve.iter().filter(|p| p.far <= far).map(|p| p.vr).fold(0.0, f64::max))
}

/// `‖a_i − b_j‖²` for every row pair, clamped at 0.
pub fn sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape("distance feature dim", a.ncols(), b.ncols()));
    }
    let na = a.map_axis(Axis(1), |r| r.dot(&r));
    let nb = b.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = a.dot(&b.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
    }
    Ok(d)
}

pub fn distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(sq_distances(a, b)?.mapv_into(f64::sqrt))
}

/// Index of the nearest gallery row for every query; ties go to the lower index.
pub fn nearest(queries: ArrayView2<'_, f64>, gallery: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if gallery.nrows() == 0 {
        return Err(Error::Empty("gallery"));
    }
    if queries.ncols() != gallery.ncols() {
        return Err(Error::shape("nearest feature dim", gallery.ncols(), queries.ncols()));
    }
    Ok(queries
        .outer_iter()
        .map(|q| {
            let mut best = (0, f64::INFINITY);
            for (j, g) in gallery.outer_iter().enumerate() {
                let d: f64 = q.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect())
}

/// Fraction of queries whose nearest gallery item is `mates[q]`.
pub fn rank1(queries: ArrayView2<'_, f64>, gallery: ArrayView2<'_, f64>, mates: &[usize]) -> Result<f64> {
    if queries.nrows() != mates.len() {
        return Err(Error::shape("rank1 mates", queries.nrows(), mates.len()));
    }
    if queries.nrows() == 0 {
        return Err(Error::Empty("queries"));
    }
    if let Some(&m) = mates.iter().find(|&&m| m >= gallery.nrows()) {
        return Err(Error::InvalidArgument(format!("mate {m} outside a gallery of {}", gallery.nrows())));
    }
    let hits = nearest(queries, gallery)?.iter().zip(mates).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / mates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn f1_hand_cases() {
        assert_eq!(f1_from_counts(2, 1, 1), 2.0 / 3.0);
        assert_eq!(f1_from_counts(0, 3, 0), 0.0);
        let y = [0, 1, 2, 1, 0];
        assert_eq!(f1_score(&y, &y, Averaging::Macro).unwrap(), 1.0);
        assert_eq!(f1_score(&[1, 0, 0], &[0, 1, 1], Averaging::Macro).unwrap(), 0.0);
        // class 1 as positive: TP=2 FP=1 FN=1; class 0: TP=1 FP=1 FN=1
        let pred = [1, 1, 1, 0, 0];
        let act = [1, 1, 0, 1, 0];
        let macro_f1 = f1_score(&pred, &act, Averaging::Macro).unwrap();
        assert!((macro_f1 - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert_eq!(f1_score(&pred, &act, Averaging::Micro).unwrap(), 0.6);
        assert!(f1_score(&[], &[], Averaging::Macro).is_err());
        assert!(f1_score(&[0], &[0, 1], Averaging::Macro).is_err());
    }

    #[test]
    fn roc_hand_case() {
        let sp = ScoredPairs::new(vec![0.9, 0.4, 0.6, 0.1], vec![true, true, false, false]).unwrap();
        let (curve, auc) = roc_and_auc(&sp).unwrap();
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.far, p.vr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn roc_degenerate_cases() {
        let sep = ScoredPairs::new(vec![3.0, 2.0, 1.0, 0.0], vec![true, true, false, false]).unwrap();
        assert_eq!(roc_and_auc(&sep).unwrap().1, 1.0);
        assert_eq!(vr_at_far(&sep, 0.0).unwrap(), 1.0);
        let flat = ScoredPairs::new(vec![0.5; 4], vec![true, false, true, false]).unwrap();
        let (curve, auc) = roc_and_auc(&flat).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(auc, 0.5);
        assert_eq!(vr_at_far(&flat, 0.001).unwrap(), 0.0);
        assert!(ScoredPairs::new(vec![1.0, 2.0], vec![true, true]).is_err());
    }

    #[test]
    fn vr_boundary_is_inclusive() {
        // genuines: 5 at 0.9, 5 at 0.3; one impostor at 0.7 between them
        let mut scores = vec![0.9; 5];
        scores.extend([0.3; 5]);
        scores.push(0.7);
        let mut genuine = vec![true; 10];
        genuine.push(false);
        let with_rest = |s: f64| {
            let mut sc = scores.clone();
            sc.extend(std::iter::repeat_n(s, 999));
            let mut g = genuine.clone();
            g.extend(std::iter::repeat_n(false, 999));
            ScoredPairs::new(sc, g).unwrap()
        };
        // remaining impostors also outrank the lower half
        let blocked = with_rest(0.5);
        assert_eq!(vr_at_far(&blocked, 0.001).unwrap(), 0.5);
        assert_eq!(vr_at_far(&blocked, 0.0009).unwrap(), 0.5);
        // remaining impostors below every genuine: FAR stays at exactly 0.001
        let open = with_rest(0.1);
        assert_eq!(vr_at_far(&open, 0.001).unwrap(), 1.0);
        assert_eq!(vr_at_far(&open, 0.0009).unwrap(), 0.5);
    }

    #[test]
    fn pairs_from_distances() {
        let d = array![[0.0, 2.0], [1.0, 3.0]];
        let sp = ScoredPairs::from_distances(d.view(), &[0, 1]).unwrap();
        assert_eq!(sp.scores, vec![-0.0, -2.0, -1.0, -3.0]);
        assert_eq!(sp.genuine, vec![true, false, false, true]);
    }

    #[test]
    fn rank1_cases() {
        let q = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(rank1(q.view(), q.view(), &[0, 1, 2]).unwrap(), 1.0);
        // gallery rows permuted [2, 0, 1]; only the first mate map entry is right
        let g = array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let r = rank1(q.view(), g.view(), &[1, 0, 1]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        let tie = array![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]];
        assert_eq!(nearest(array![[0.0, 0.0]].view(), tie.slice(ndarray::s![1.., ..])).unwrap(), vec![0]);
        assert!(rank1(q.view(), Array2::<f64>::zeros((0, 3)).view(), &[0, 0, 0]).is_err());
    }
}
