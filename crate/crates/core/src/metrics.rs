//! Pixel-level evaluation: confusion counts, accuracy, Cohen's kappa and the
//! binary FP / FN / OE rates (fractions of all pixels, class 1 = changed).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ClassMap;

/// `K×K` pixel counts; entry `[a][p]` counts pixels of true class `a`
/// predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        assert!(classes > 0, "confusion matrix needs at least one class");
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }

    /// Adds one count per pixel. Maps must share shape and hold classes
    /// below `K`.
    pub fn accumulate(&mut self, predicted: &ClassMap, truth: &ClassMap) -> Result<()> {
        if predicted.shape() != truth.shape() {
            return Err(Error::shape("accumulate_confusion", &predicted.shape(), &truth.shape()));
        }
        predicted.check_range(self.classes)?;
        truth.check_range(self.classes)?;
        for (&p, &a) in predicted.classes.iter().zip(&truth.classes) {
            self.counts[a as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise sum of two partial matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::shape("confusion merge", &[self.classes], &[other.classes]));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<MetricsReport> {
        compute_report(self)
    }
}

/// Accumulates one prediction/truth pair into `cm` and returns it.
pub fn accumulate_confusion(predicted: &ClassMap, truth: &ClassMap, mut cm: ConfusionMatrix) -> Result<ConfusionMatrix> {
    cm.accumulate(predicted, truth)?;
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub kappa: f64,
    pub fp: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_: Option<f64>,
    pub oe: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
}

/// Accuracy and kappa for any `K`; FP/FN/OE for `K = 2`.
///
/// When chance agreement is total (`p_e = 1`) kappa is defined as 1 if the
/// observed agreement is perfect and 0 otherwise.
pub fn compute_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics of an empty confusion matrix".into()));
    }
    let k = cm.classes;
    let trace: u64 = (0..k).map(|i| cm.get(i, i)).sum();
    let chance: u128 = (0..k)
        .map(|i| {
            let row: u64 = (0..k).map(|j| cm.get(i, j)).sum();
            let col: u64 = (0..k).map(|j| cm.get(j, i)).sum();
            row as u128 * col as u128
        })
        .sum();
    let t = total as u128;
    // kappa = (p_o − p_e) / (1 − p_e) = (t·trace − Σ row·col) / (t² − Σ row·col)
    let denom = t * t - chance;
    let kappa = if denom == 0 {
        if trace == total {
            1.0
        } else {
            0.0
        }
    } else {
        (t as f64 * trace as f64 - chance as f64) / denom as f64
    };
    let (fp, fn_, oe) = if k == 2 {
        let fp = cm.get(0, 1) as f64 / total as f64;
        let fn_ = cm.get(1, 0) as f64 / total as f64;
        (Some(fp), Some(fn_), Some(fp + fn_))
    } else {
        (None, None, None)
    };
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        kappa,
        fp,
        fn_,
        oe,
        confusion: cm.rows(),
    })
}

impl MetricsReport {
    /// Two-column rendering in the row order Accuracy, Kappa, FP, FN, OE.
    pub fn table(&self, label: &str) -> String {
        let mut s = format!("{:<10}{label}\n", "Method");
        s += &format!("{:<10}{:.2}%\n", "Accuracy", self.accuracy * 100.0);
        s += &format!("{:<10}{:.4}\n", "Kappa", self.kappa);
        for (name, v) in [("FP", self.fp), ("FN", self.fn_), ("OE", self.oe)] {
            if let Some(v) = v {
                s += &format!("{name:<10}{v:.4}\n");
            }
        }
        s
    }
}
