/// One-shot learning-rate reduction after `patience` consecutive epochs
/// without a new best validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    best: f64,
    stale_epochs: usize,
    patience: usize,
    lr: f64,
    reduced_lr: f64,
}

impl PlateauSchedule {
    /// `initial_loss` is the validation loss before the first epoch.
    pub fn new(lr: f64, reduced_lr: f64, patience: usize, initial_loss: f64) -> Self {
        Self {
            best: initial_loss,
            stale_epochs: 0,
            patience,
            lr,
            reduced_lr,
        }
    }

    /// Rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records the validation loss of a finished epoch.
    pub fn observe(&mut self, val_loss: f64) {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.patience {
                self.lr = self.reduced_lr;
            }
        }
    }
}
