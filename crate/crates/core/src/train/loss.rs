use crate::error::{GsanError, Result};
use crate::model::{GsanParams, ParamKind};
use crate::tape::{Tape, Unary, Var};
use crate::tensor::{Real, Tensor};

/// Mean `-log softmax(logits)[label]` over the nodes in `mask`.
pub fn masked_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
    tape.cross_entropy(logits, labels, mask)
}

/// Mean sigmoid cross-entropy over `rows × L`.
pub fn multilabel_bce(tape: &mut Tape, logits: Var, targets: &Tensor, rows: &[usize]) -> Result<Var> {
    tape.binary_cross_entropy(logits, targets, rows)
}

/// Regularization coefficients; all apply to weight matrices only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PenaltyCoefs {
    pub l1: Real,
    pub l2: Real,
    pub smooth_l1: Real,
}

impl PenaltyCoefs {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("smooth_l1", self.smooth_l1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GsanError::Invalid(format!("{} coefficient {} must be >= 0", name, v)));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.l1 == 0.0 && self.l2 == 0.0 && self.smooth_l1 == 0.0
    }
}

/// `l1·Σ|w| + l2·Σw² + smooth_l1·Σhuber(w, 1)` on the tape, or `None` when
/// every coefficient is zero.
pub fn penalty(tape: &mut Tape, params: &GsanParams<Var>, coefs: &PenaltyCoefs) -> Result<Option<Var>> {
    coefs.check()?;
    if coefs.is_zero() {
        return Ok(None);
    }
    let mut total: Option<Var> = None;
    for (_, kind, &w) in params.entries() {
        if kind != ParamKind::Weight {
            continue;
        }
        for (coef, op) in [
            (coefs.l1, Unary::Abs),
            (coefs.l2, Unary::Square),
            (coefs.smooth_l1, Unary::Huber(1.0)),
        ] {
            if coef == 0.0 {
                continue;
            }
            let t = tape.unary(w, op)?;
            let s = tape.sum(t)?;
            let s = tape.scale(s, coef)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });
        }
    }
    Ok(total)
}

/// The same penalty evaluated directly on tensors.
pub fn penalty_value(params: &GsanParams<Tensor>, coefs: &PenaltyCoefs) -> Real {
    let mut total = 0.0;
    for (_, kind, w) in params.entries() {
        if kind != ParamKind::Weight {
            continue;
        }
        for &x in w.data() {
            let a = x.abs();
            let huber = if a <= 1.0 { 0.5 * x * x } else { a - 0.5 };
            total += coefs.l1 * a + coefs.l2 * x * x + coefs.smooth_l1 * huber;
        }
    }
    total
}
