use crate::kernels::loss::sigmoid;
use crate::tensor::{Real, Tensor};

/// Row argmax; ties go to the lowest class index.
pub fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of `rows` whose argmax equals the label. Empty `rows` gives 0.
pub fn accuracy(logits: &Tensor, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows.iter().filter(|&&r| argmax(logits.row(r)) == labels[r]).count();
    hits as f64 / rows.len() as f64
}

/// Pooled true/false positive counts for micro-averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Correct label decisions, positive or negative.
    pub correct: u64,
    pub total: u64,
}

impl F1Counts {
    /// Counts over `rows × L` with predictions `sigmoid(logit) >= threshold`.
    pub fn count(logits: &Tensor, targets: &Tensor, rows: &[usize], threshold: Real) -> F1Counts {
        let mut c = F1Counts::default();
        for &r in rows {
            for (&x, &y) in logits.row(r).iter().zip(targets.row(r)) {
                // exact for the default threshold, where sigmoid rounding could flip ties
                let pred = if threshold == 0.5 { x >= 0.0 } else { sigmoid(x) >= threshold };
                let truth = y == 1.0;
                match (pred, truth) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => {}
                }
                c.correct += (pred == truth) as u64;
                c.total += 1;
            }
        }
        c
    }

    pub fn merge(self, o: F1Counts) -> F1Counts {
        F1Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            correct: self.correct + o.correct,
            total: self.total + o.total,
        }
    }

    /// `2TP / (2TP + FP + FN)`, with 0/0 taken as 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// Fraction of individual label decisions that are correct.
    pub fn label_accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

pub fn micro_f1(logits: &Tensor, targets: &Tensor, rows: &[usize], threshold: Real) -> f64 {
    F1Counts::count(logits, targets, rows, threshold).f1()
}
