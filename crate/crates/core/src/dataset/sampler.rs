use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use super::{uniform_simplex, OfflineDataset, FILTER_TOL};
use crate::error::{Error, Result};
use crate::momdp::{augment, cosine_distance, AugmentedPreference, Preference, Transition};

/// Rejection budget for the cosine-cap sampler with three or more objectives.
const CAP_REJECTION_BUDGET: usize = 10_000;

/// A mini-batch of transitions with their sampled augmented preferences.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub transitions: Vec<Transition>,
    pub aug_prefs: Vec<AugmentedPreference>,
    /// Source trajectory of each transition.
    pub traj_indices: Vec<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Preference uniformly drawn from the simplex points within cosine
/// distance `2θ` of `center`.
///
/// With two objectives the admissible set is an arc of angles around the
/// center; it is mapped back to an interval of `ω1` and sampled uniformly
/// there, which is uniform on the simplex segment.
pub fn sample_cap_preference<R: Rng + ?Sized>(center: &Preference, theta: f64, rng: &mut R) -> Preference {
    if theta <= 0.0 {
        return center.clone();
    }
    let radius = 2.0 * theta;
    if center.dim() == 2 {
        let phi0 = center[1].atan2(center[0]);
        let delta = if radius >= 1.0 { FRAC_PI_2 } else { (1.0 - radius).acos() };
        let phi_lo = (phi0 - delta).max(0.0);
        let phi_hi = (phi0 + delta).min(FRAC_PI_2);
        let w_of = |phi: f64| {
            let (s, c) = phi.sin_cos();
            c / (c + s)
        };
        let (w_max, w_min) = (w_of(phi_lo), w_of(phi_hi));
        let w = if phi_lo <= 0.0 && phi_hi >= FRAC_PI_2 {
            rng.random::<f64>()
        } else {
            w_min + rng.random::<f64>() * (w_max - w_min)
        };
        let w = w.clamp(0.0, 1.0);
        return Preference::new(vec![w, 1.0 - w]).unwrap_or_else(|_| center.clone());
    }
    for _ in 0..CAP_REJECTION_BUDGET {
        let p = uniform_simplex(center.dim(), rng);
        if cosine_distance(center, &p).is_ok_and(|d| d <= radius + FILTER_TOL) {
            return p;
        }
    }
    center.clone()
}

/// Transition-uniform batch sampler over a fixed dataset.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    /// `offsets[i]` is the number of transitions before trajectory `i`.
    offsets: Vec<usize>,
    total: usize,
    pub theta: f64,
    pub wbc_min: f64,
}

impl BatchSampler {
    pub fn new(ds: &OfflineDataset, theta: f64, wbc_min: f64) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::invalid("cannot sample from an empty dataset"));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        if !(wbc_min > 0.0 && wbc_min <= 1.0) {
            return Err(Error::invalid(format!("wbc_min must lie in (0, 1], got {wbc_min}")));
        }
        let mut offsets = Vec::with_capacity(ds.len());
        let mut total = 0;
        for t in &ds.trajectories {
            offsets.push(total);
            total += t.len();
        }
        Ok(Self {
            offsets,
            total,
            theta,
            wbc_min,
        })
    }

    fn locate(&self, k: usize) -> (usize, usize) {
        let i = self.offsets.partition_point(|&o| o <= k) - 1;
        (i, k - self.offsets[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, ds: &OfflineDataset, batch_size: usize, rng: &mut R) -> Result<SampleBatch> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let mut batch = SampleBatch {
            transitions: Vec::with_capacity(batch_size),
            aug_prefs: Vec::with_capacity(batch_size),
            traj_indices: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let (i, j) = self.locate(rng.random_range(0..self.total));
            let pref = sample_cap_preference(&ds.approx_prefs[i], self.theta, rng);
            let w_bc = rng.random_range(self.wbc_min..=1.0);
            batch.transitions.push(ds.trajectories[i].transitions[j].clone());
            batch.aug_prefs.push(augment(&pref, w_bc)?);
            batch.traj_indices.push(i);
        }
        Ok(batch)
    }
}

/// One-shot form of [`BatchSampler::sample`].
pub fn sample_batch<R: Rng + ?Sized>(
    ds: &OfflineDataset,
    batch_size: usize,
    theta: f64,
    wbc_min: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    BatchSampler::new(ds, theta, wbc_min)?.sample(ds, batch_size, rng)
}
