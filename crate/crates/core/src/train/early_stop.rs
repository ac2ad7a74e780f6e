use crate::model::GsanParams;
use crate::tensor::Tensor;

/// Tracks the best validation state. A new metric maximum wins; an equal
/// metric wins only with a strictly lower validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStop {
    pub patience: usize,
    pub best_metric: f64,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    pub best_params: Option<GsanParams<Tensor>>,
    since_best: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            best_epoch: None,
            best_params: None,
            since_best: 0,
        }
    }

    /// Records one epoch; returns true when it became the new best.
    pub fn observe(&mut self, epoch: usize, metric: f64, loss: f64, params: &GsanParams<Tensor>) -> bool {
        let better = metric > self.best_metric || (metric == self.best_metric && loss < self.best_loss);
        if better {
            self.best_metric = metric;
            self.best_loss = loss;
            self.best_epoch = Some(epoch);
            self.best_params = Some(params.clone());
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        better
    }

    pub fn epochs_since_best(&self) -> usize {
        self.since_best
    }

    pub fn should_stop(&self) -> bool {
        self.since_best > self.patience
    }
}
