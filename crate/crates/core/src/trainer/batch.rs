use crate::dataset::SampleBatch;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// A [`SampleBatch`] laid out as row-aligned tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchTensors {
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_states: Tensor,
    /// `1 - terminal`, as a column.
    pub not_done: Tensor,
    /// Preference features seen by the networks: `[task_part ‖ bc_weight]`
    /// when augmented, the plain preference otherwise.
    pub features: Tensor,
    /// Scalarization weights for the critic values.
    pub task: Tensor,
    pub bc_weight: Tensor,
}

impl BatchTensors {
    pub fn new(batch: &SampleBatch, augmented: bool) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let tr = &batch.transitions;
        let rows = |f: &dyn Fn(usize) -> Vec<f64>| Tensor::from_rows(&(0..tr.len()).map(f).collect::<Vec<_>>());
        let column = |f: &dyn Fn(usize) -> f64| Tensor::new(tr.len(), 1, (0..tr.len()).map(f).collect());
        let prefs = &batch.aug_prefs;
        Ok(Self {
            states: rows(&|i| tr[i].state.clone())?,
            actions: rows(&|i| tr[i].action.clone())?,
            rewards: rows(&|i| tr[i].reward.0.clone())?,
            next_states: rows(&|i| tr[i].next_state.clone())?,
            not_done: column(&|i| if tr[i].terminal { 0.0 } else { 1.0 })?,
            features: if augmented {
                rows(&|i| prefs[i].features())?
            } else {
                rows(&|i| prefs[i].base().weights().to_vec())?
            },
            task: if augmented {
                rows(&|i| prefs[i].task_part())?
            } else {
                rows(&|i| prefs[i].base().weights().to_vec())?
            },
            bc_weight: column(&|i| prefs[i].bc_weight())?,
        })
    }

    pub fn len(&self) -> usize {
        self.states.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
