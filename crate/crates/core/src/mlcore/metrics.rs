//! Classification metrics on 0/1 labels; class 1 is positive.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn new(predictions: &[u8], labels: &[u8]) -> Self {
        assert_eq!(predictions.len(), labels.len(), "prediction/label length mismatch");
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p == 1, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// `2PR / (P + R)`, i.e. `2TP / (2TP + FP + FN)`; 0 when undefined.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || den == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }

    /// `(TPR + TNR) / 2` over a single division so exact ratios stay exact.
    pub fn balanced_accuracy(&self) -> Result<f64> {
        let (p, n) = (self.tp + self.fn_, self.tn + self.fp);
        if p == 0 || n == 0 {
            return Err(Error::invalid("balanced accuracy needs both classes in the labels"));
        }
        let num = self.tp as u128 * n as u128 + self.tn as u128 * p as u128;
        Ok(num as f64 / (2 * p as u128 * n as u128) as f64)
    }
}

pub fn f1_score(predictions: &[u8], labels: &[u8]) -> f64 {
    Confusion::new(predictions, labels).f1()
}

pub fn balanced_accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Confusion::new(predictions, labels).balanced_accuracy()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_cases() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]), 1.0);
        // TP=2, FP=1, FN=1.
        assert_eq!(f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]), 2.0 / 3.0);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 0, 1]), 0.0);
    }

    #[test]
    fn balanced_accuracy_cases() {
        // TPR = 1/2, TNR = 9/10.
        let labels = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let preds = [1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        assert_eq!(balanced_accuracy(&preds, &labels).unwrap(), 0.7);
        assert_eq!(balanced_accuracy(&[1; 12], &labels).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&labels, &labels).unwrap(), 1.0);
        assert!(balanced_accuracy(&[1, 0], &[1, 1]).is_err());
    }
}
