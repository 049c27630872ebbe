use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{f1_score, sq_distances, Averaging};
use super::svm::{argmax_labels, classes_of, rbf_kernel, train_ovr, SvmParams};
use crate::error::{Error, Result};

/// Fold index for every sample. Within each class the members are shuffled
/// and dealt round-robin, so fold sizes per class differ by at most one.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; y.len()];
    for c in classes_of(y) {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if members.len() < folds {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

/// `c ∈ {0.1, 1, 10, 100}`, `g ∈ {0.01, 0.1, 1, 10} / dim`.
pub fn default_grids(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let d = dim.max(1) as f64;
    (vec![0.1, 1.0, 10.0, 100.0], vec![0.01 / d, 0.1 / d, 1.0 / d, 10.0 / d])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c_box: f64,
    pub g_rbf: f64,
    pub mean_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub c_box: f64,
    pub g_rbf: f64,
    pub mean_f1: f64,
    pub table: Vec<CvCell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub averaging: Averaging,
    pub tolerance: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { folds: 5, seed: 0, averaging: Averaging::Macro, tolerance: 1e-3 }
    }
}

/// Grid search by stratified k-fold mean F1. Ties favour the smaller `c_box`,
/// then the smaller `g_rbf`.
pub fn cross_validate(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    c_grid: &[f64],
    g_grid: &[f64],
    opts: &CvOptions,
) -> Result<CvOutcome> {
    if c_grid.is_empty() || g_grid.is_empty() {
        return Err(Error::Empty("cross-validation grid"));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape("cv labels", x.nrows(), y.len()));
    }
    let mut cs = c_grid.to_vec();
    let mut gs = g_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    gs.sort_by(f64::total_cmp);
    for &v in cs.iter().chain(&gs) {
        SvmParams::new(v, v).validate()?;
    }

    let assign = stratified_folds(y, opts.folds, opts.seed)?;
    let d = sq_distances(x, x)?;
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.folds)
        .map(|f| ((0..y.len()).filter(|&i| assign[i] != f).collect(), (0..y.len()).filter(|&i| assign[i] == f).collect()))
        .collect();

    let mut scores = vec![vec![0.0; gs.len()]; cs.len()];
    for (gi, &g) in gs.iter().enumerate() {
        let k = rbf_kernel(d.view(), g);
        for (train, val) in &split {
            let k_tr = k.select(Axis(0), train).select(Axis(1), train);
            let k_va = k.select(Axis(0), val).select(Axis(1), train);
            let y_tr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let y_va: Vec<usize> = val.iter().map(|&i| y[i]).collect();
            for (ci, &c) in cs.iter().enumerate() {
                let p = SvmParams { tolerance: opts.tolerance, ..SvmParams::new(c, g) };
                let sol = train_ovr(k_tr.view(), &y_tr, &p)?;
                let pred = argmax_labels(sol.decision(k_va.view()).view(), &sol.classes);
                scores[ci][gi] += f1_score(&pred, &y_va, opts.averaging)? / opts.folds as f64;
            }
        }
    }

    let mut table = Vec::with_capacity(cs.len() * gs.len());
    let mut best: Option<CvCell> = None;
    for (ci, &c) in cs.iter().enumerate() {
        for (gi, &g) in gs.iter().enumerate() {
            let cell = CvCell { c_box: c, g_rbf: g, mean_f1: scores[ci][gi] };
            if best.is_none_or(|b| cell.mean_f1 > b.mean_f1) {
                best = Some(cell);
            }
            table.push(cell);
        }
    }
    let b = best.unwrap();
    Ok(CvOutcome { c_box: b.c_box, g_rbf: b.g_rbf, mean_f1: b.mean_f1, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, m) in centres.iter().enumerate() {
            for _ in 0..10 {
                rows.push(m[0] + rng.random_range(-0.05..0.05));
                rows.push(m[1] + rng.random_range(-0.05..0.05));
                y.push(c);
            }
        }
        (Array2::from_shape_vec((30, 2), rows).unwrap(), y)
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let y: Vec<usize> = (0..23).map(|i| i % 3).collect();
        let f = stratified_folds(&y, 4, 7).unwrap();
        for c in 0..3 {
            let mut counts = [0; 4];
            for i in (0..23).filter(|&i| y[i] == c) {
                counts[f[i]] += 1;
            }
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
        assert_eq!(f, stratified_folds(&y, 4, 7).unwrap());
        assert!(stratified_folds(&[0, 0, 1], 2, 0).is_err());
        assert!(stratified_folds(&y, 1, 0).is_err());
    }

    #[test]
    fn single_point_grid() {
        let (x, y) = blobs(1);
        let r = cross_validate(x.view(), &y, &[3.0], &[2.0], &CvOptions::default()).unwrap();
        assert_eq!((r.c_box, r.g_rbf), (3.0, 2.0));
        assert_eq!(r.table.len(), 1);
    }

    #[test]
    fn picks_the_only_working_point() {
        let (x, y) = blobs(2);
        // a huge bandwidth turns the kernel into the identity, so held-out
        // decision values are the biases alone
        let r = cross_validate(x.view(), &y, &[10.0], &[1e5, 5.0], &CvOptions::default()).unwrap();
        assert_eq!(r.g_rbf, 5.0);
        assert_eq!(r.mean_f1, 1.0);
        assert!(r.table[1].mean_f1 < 0.5);
        let again = cross_validate(x.view(), &y, &[10.0], &[1e5, 5.0], &CvOptions::default()).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn ties_prefer_small_parameters() {
        let (x, y) = blobs(3);
        let r = cross_validate(x.view(), &y, &[100.0, 10.0], &[10.0, 5.0], &CvOptions::default()).unwrap();
        assert_eq!(r.mean_f1, 1.0);
        assert_eq!((r.c_box, r.g_rbf), (10.0, 5.0));
    }
}
