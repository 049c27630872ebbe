//! Classification and verification metrics, nearest-neighbour retrieval and
//! an RBF-kernel SVM with grid-search cross-validation.

mod cv;
mod metrics;
mod svm;

pub use cv::{cross_validate, default_grids, stratified_folds, CvCell, CvOptions, CvOutcome};
pub use metrics::{
    accuracy, distances, f1_from_counts, f1_score, nearest, rank1, roc_and_auc, sq_distances, vr_at_far, Averaging,
    RocPoint, ScoredPairs,
};
pub use svm::{
    kkt_violation, rbf_kernel, smo, svm_predict, svm_train, svm_train_with_distances, BinarySolution, SvmModel,
    SvmParams,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Named scalar results, kept in key order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.values.insert(key.into(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// `key = value` lines.
impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_text_and_json() {
        let mut r = MetricReport::new();
        r.insert("rank1", 0.5).insert("auc", 0.875);
        assert_eq!(r.to_string(), "auc = 0.875\nrank1 = 0.5\n");
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
