use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::shape::{Point, ShapeModel};
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;

/// Normal distribution over stacked control-point coordinates
/// `[x_0, y_0, x_1, y_1, …]`, with the shared edge topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDistribution {
    pub mu: Vec<f64>,
    pub sigma: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
}

impl ShapeDistribution {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn sigma_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.sigma[[i, j]])
    }

    /// Symmetric and numerically positive semidefinite.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.sigma.dim() != (d, d) {
            return Err(Error::shape("covariance size", d * d, self.sigma.len()));
        }
        for i in 0..d {
            for j in 0..i {
                if self.sigma[[i, j]] != self.sigma[[j, i]] {
                    return Err(Error::domain("ShapeDistribution", format!("sigma not symmetric at ({i}, {j})")));
                }
            }
        }
        let eig = SymmetricEigen::new(self.sigma_matrix());
        if let Some(l) = eig.eigenvalues.iter().find(|&&l| l < -1e-10) {
            return Err(Error::domain("ShapeDistribution", format!("sigma has eigenvalue {l}")));
        }
        Ok(())
    }
}

/// Sample mean and covariance (denominator `n − 1`) of the stacked
/// coordinates, symmetrized, plus a small ridge on the diagonal.
pub fn fit_mvn(shapes: &[ShapeModel]) -> Result<ShapeDistribution> {
    if shapes.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 shapes, got {}", shapes.len())));
    }
    let first = &shapes[0];
    for (i, s) in shapes.iter().enumerate() {
        if s.len() != first.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {i} has {} points, shape 0 has {}",
                s.len(),
                first.len()
            )));
        }
        if s.edges != first.edges {
            return Err(Error::InvalidArgument(format!("shape {i} has a different edge topology")));
        }
    }
    let d = 2 * first.len();
    let n = shapes.len() as f64;
    let rows: Vec<Vec<f64>> = shapes.iter().map(ShapeModel::to_vector).collect();
    let mut mu = vec![0.0; d];
    for r in &rows {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut sigma = Array2::zeros((d, d));
    for r in &rows {
        for i in 0..d {
            let di = r[i] - mu[i];
            for j in 0..=i {
                sigma[[i, j]] += di * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = sigma[[i, j]] / (n - 1.0);
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
        sigma[[i, i]] += RIDGE;
    }
    Ok(ShapeDistribution {
        mu,
        sigma,
        edges: first.edges.clone(),
    })
}

/// `n` independent draws `μ + L z` with `Σ = L Lᵀ`.
pub fn sample_shapes(dist: &ShapeDistribution, n: usize, seed: u64) -> Result<Vec<ShapeModel>> {
    let d = dist.dim();
    if d % 2 != 0 {
        return Err(Error::InvalidArgument(format!("odd coordinate count {d}")));
    }
    let chol = dist
        .sigma_matrix()
        .cholesky()
        .ok_or_else(|| Error::Numerical("shape covariance is not positive definite".into()))?;
    let l = chol.l();
    let mu = DVector::from_column_slice(&dist.mu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let x = &mu + &l * z;
        let points = x.as_slice().chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        out.push(ShapeModel {
            points,
            edges: dist.edges.clone(),
            converged: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tri(offset: f64) -> ShapeModel {
        let pts = vec![Point::new(offset, 0.0), Point::new(4.0 + offset, 0.0), Point::new(offset, 4.0)];
        ShapeModel::from_contours(&[pts]).unwrap()
    }

    #[test]
    fn identical_shapes_give_ridge() {
        let d = fit_mvn(&[tri(1.0), tri(1.0), tri(1.0)]).unwrap();
        assert_eq!(d.mu, tri(1.0).to_vector());
        for ((i, j), &v) in d.sigma.indexed_iter() {
            assert_eq!(v, if i == j { RIDGE } else { 0.0 });
        }
        d.validate().unwrap();
        let samples = sample_shapes(&d, 5, 0).unwrap();
        for s in samples {
            assert!(s.max_displacement(&tri(1.0)) < 1e-3);
        }
    }

    #[test]
    fn two_shapes_midpoint() {
        let d = fit_mvn(&[tri(0.0), tri(2.0)]).unwrap();
        assert_eq!(d.mu, tri(1.0).to_vector());
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        let quad = ShapeModel::from_contours(&[vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]])
        .unwrap();
        assert!(fit_mvn(&[tri(0.0), quad]).is_err());
        assert!(fit_mvn(&[tri(0.0)]).is_err());
    }

    #[test]
    fn round_trip_recovers_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth: Vec<f64> = (0..6).map(|_| rng.random_range(2.0..20.0)).collect();
        let scales = [0.5, 1.0, 1.5, 0.8, 2.0, 0.3];
        let shapes: Vec<ShapeModel> = (0..100)
            .map(|_| {
                let v: Vec<f64> = truth
                    .iter()
                    .zip(scales)
                    .map(|(m, s)| m + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect();
                tri(0.0).with_points(v.chunks(2).map(|c| Point::new(c[0], c[1])).collect()).unwrap()
            })
            .collect();
        let d = fit_mvn(&shapes).unwrap();
        for i in 0..6 {
            let se = scales[i] / 10.0;
            assert!((d.mu[i] - truth[i]).abs() < 3.0 * se, "coord {i}");
        }

        let draws = sample_shapes(&d, 10_000, 9).unwrap();
        for i in 0..6 {
            let mean = draws.iter().map(|s| s.to_vector()[i]).sum::<f64>() / 10_000.0;
            let se = d.sigma[[i, i]].sqrt() / 100.0;
            assert!((mean - d.mu[i]).abs() < 3.0 * se, "coord {i}");
        }
        assert_eq!(sample_shapes(&d, 3, 4).unwrap(), sample_shapes(&d, 3, 4).unwrap());
    }
}
