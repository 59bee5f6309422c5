//! Value types for multi-objective MDPs with linear preferences, plus the
//! small amount of vector math every other module shares.

use std::fmt;
use std::ops::{Add, AddAssign, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ ω = 1` for simplex points.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Tolerance between a trajectory's stored return and the sum of its rewards.
pub const RETURN_TOL: f64 = 1e-6;

/// A point on the probability simplex weighting `n >= 2` objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Preference(Vec<f64>);

impl Preference {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid(format!(
                "preference needs at least 2 objectives, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "preference weights must be finite and non-negative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "preference weights must sum to 1 (got {sum})"
            )));
        }
        Ok(Self(weights))
    }

    /// The equal-weight preference `[1/n, ..., 1/n]`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("preference needs at least 2 objectives"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    /// Two-objective preference `[w, 1 - w]`.
    pub fn pair(w: f64) -> Result<Self> {
        Self::new(vec![w, 1.0 - w])
    }

    /// The `i`-th corner of the simplex.
    pub fn corner(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::invalid(format!("corner {i} out of range for n={n}")));
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Preference {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Preference::new(v)
    }
}

impl From<Preference> for Vec<f64> {
    fn from(p: Preference) -> Vec<f64> {
        p.0
    }
}

impl Index<usize> for Preference {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w:.4}")?;
        }
        write!(f, "]")
    }
}

/// A task preference extended with the behavior-cloning weight:
/// `((1 - w_bc) * ω, w_bc)`.
///
/// The base preference is kept so that `ω` stays recoverable even at
/// `w_bc = 1`, where the task part collapses to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPreference {
    base: Preference,
    bc_weight: f64,
}

impl AugmentedPreference {
    pub fn base(&self) -> &Preference {
        &self.base
    }

    pub fn bc_weight(&self) -> f64 {
        self.bc_weight
    }

    pub fn task_part(&self) -> Vec<f64> {
        self.base
            .weights()
            .iter()
            .map(|w| (1.0 - self.bc_weight) * w)
            .collect()
    }

    /// Conditioning features in the fixed order `[task_part.., bc_weight]`.
    pub fn features(&self) -> Vec<f64> {
        let mut f = self.task_part();
        f.push(self.bc_weight);
        f
    }

    /// Number of conditioning features (`n + 1`).
    pub fn feature_dim(&self) -> usize {
        self.base.dim() + 1
    }
}

/// Builds the augmented preference for a behavior-cloning weight in `(0, 1]`.
pub fn augment(pref: &Preference, w_bc: f64) -> Result<AugmentedPreference> {
    if !(w_bc > 0.0 && w_bc <= 1.0) {
        return Err(Error::invalid(format!(
            "behavior-cloning weight must lie in (0, 1], got {w_bc}"
        )));
    }
    Ok(AugmentedPreference {
        base: pref.clone(),
        bc_weight: w_bc,
    })
}

/// Like [`augment`] but also enforces the configured lower bound.
pub fn augment_bounded(pref: &Preference, w_bc: f64, wbc_min: f64) -> Result<AugmentedPreference> {
    if w_bc < wbc_min {
        return Err(Error::invalid(format!(
            "behavior-cloning weight {w_bc} is below the minimum {wbc_min}"
        )));
    }
    augment(pref, w_bc)
}

/// Per-objective (cumulative or one-step) reward vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorReturn(pub Vec<f64>);

impl VectorReturn {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }
}

impl Index<usize> for VectorReturn {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add<&VectorReturn> for &VectorReturn {
    type Output = VectorReturn;

    fn add(self, rhs: &VectorReturn) -> VectorReturn {
        debug_assert_eq!(self.dim(), rhs.dim());
        VectorReturn(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl AddAssign<&VectorReturn> for VectorReturn {
    fn add_assign(&mut self, rhs: &VectorReturn) {
        debug_assert_eq!(self.dim(), rhs.dim());
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

/// One step of offline experience.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "s")]
    pub state: Vec<f64>,
    #[serde(rename = "a")]
    pub action: Vec<f64>,
    #[serde(rename = "r")]
    pub reward: VectorReturn,
    #[serde(rename = "s2")]
    pub next_state: Vec<f64>,
    #[serde(rename = "done")]
    pub terminal: bool,
}

/// An ordered episode with its undiscounted vector return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episode_return: VectorReturn,
}

impl Trajectory {
    /// Builds a trajectory, summing rewards into the episode return.
    pub fn from_transitions(transitions: Vec<Transition>) -> Result<Self> {
        let n = transitions
            .first()
            .map(|t| t.reward.dim())
            .ok_or_else(|| Error::invalid("trajectory must contain at least one transition"))?;
        let mut ret = VectorReturn::zeros(n);
        for t in &transitions {
            if t.reward.dim() != n {
                return Err(Error::invalid("inconsistent reward dimensions in trajectory"));
            }
            ret += &t.reward;
        }
        let traj = Self {
            transitions,
            episode_return: ret,
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Checks the return/reward consistency and the terminal-position invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.episode_return.dim();
        if self.transitions.is_empty() {
            return Err(Error::Integrity("empty trajectory".into()));
        }
        let last = self.transitions.len() - 1;
        let mut sum = vec![0.0; n];
        for (i, t) in self.transitions.iter().enumerate() {
            if t.reward.dim() != n {
                return Err(Error::Integrity(format!(
                    "transition {i} has reward dimension {} (expected {n})",
                    t.reward.dim()
                )));
            }
            if t.terminal && i != last {
                return Err(Error::Integrity(format!(
                    "transition {i} is terminal but not final"
                )));
            }
            for (s, r) in sum.iter_mut().zip(t.reward.values()) {
                *s += r;
            }
        }
        for (j, (s, r)) in sum.iter().zip(self.episode_return.values()).enumerate() {
            if (s - r).abs() > RETURN_TOL {
                return Err(Error::Integrity(format!(
                    "episode return component {j} is {r}, rewards sum to {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

fn check_dims(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "{what}: dimension mismatch ({a} vs {b})"
        )));
    }
    Ok(())
}

/// Linear scalarization `ω · v`.
pub fn scalarize(pref: &Preference, v: &VectorReturn) -> Result<f64> {
    check_dims(pref.dim(), v.dim(), "scalarize")?;
    Ok(dot(pref.weights(), v.values()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)` between two non-zero vectors.
pub fn cosine_distance_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len(), "cosine_distance")?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine distance of a zero-norm vector"));
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Cosine distance between two preferences; lies in `[0, 1]` on the simplex.
pub fn cosine_distance(a: &Preference, b: &Preference) -> Result<f64> {
    cosine_distance_raw(a.weights(), b.weights())
}

/// `v / ‖v‖₁` for a non-negative, not-all-zero vector.
pub fn l1_normalize(v: &VectorReturn) -> Result<Preference> {
    let vals = v.values();
    if vals.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateReturn(vals.to_vec()));
    }
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateReturn(vals.to_vec()));
    }
    let mut w: Vec<f64> = vals.iter().map(|x| x / total).collect();
    // Push the rounding residue onto the largest component so Σw is exact to 1e-15.
    let resid = 1.0 - w.iter().sum::<f64>();
    if resid != 0.0 {
        let (imax, _) = w
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
        w[imax] = (w[imax] + resid).max(0.0);
    }
    Preference::new(w)
}

/// Pareto dominance: `a >= b` everywhere and `a > b` somewhere.
pub fn dominates(a: &VectorReturn, b: &VectorReturn) -> Result<bool> {
    check_dims(a.dim(), b.dim(), "dominates")?;
    Ok(dominates_slice(a.values(), b.values()))
}

pub(crate) fn dominates_slice(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Equidistant preference grid. For two objectives this is
/// `[k/(m-1), 1 - k/(m-1)]` for `k = 0..m`; for more objectives it is the
/// simplex lattice with `m - 1` divisions.
pub fn preference_grid(n_objectives: usize, m: usize) -> Result<Vec<Preference>> {
    if m < 2 {
        return Err(Error::invalid("a preference grid needs at least 2 points"));
    }
    if n_objectives == 2 {
        let d = (m - 1) as f64;
        return (0..m)
            .map(|k| {
                let w = k as f64 / d;
                Preference::new(vec![w, 1.0 - w])
            })
            .collect();
    }
    let divisions = m - 1;
    let mut out = Vec::new();
    let mut current = vec![0usize; n_objectives];
    lattice(0, divisions, &mut current, &mut out);
    out.into_iter()
        .map(|c| {
            Preference::new(
                c.iter()
                    .map(|&k| k as f64 / divisions as f64)
                    .collect(),
            )
        })
        .collect()
}

fn lattice(pos: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == current.len() - 1 {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for k in 0..=left {
        current[pos] = k;
        lattice(pos + 1, left - k, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vr(v: &[f64]) -> VectorReturn {
        VectorReturn::new(v.to_vec())
    }

    #[test]
    fn preference_validation() {
        assert!(Preference::new(vec![0.5, 0.5]).is_ok());
        assert!(Preference::new(vec![1.0]).is_err());
        assert!(Preference::new(vec![0.6, 0.6]).is_err());
        assert!(Preference::new(vec![1.5, -0.5]).is_err());
        assert!(Preference::new(vec![0.3, 0.7 + 5e-10]).is_ok());
    }

    #[test]
    fn scalarize_examples() {
        let p = Preference::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(scalarize(&p, &vr(&[3.0, 5.0])).unwrap(), 3.0);
        let p = Preference::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(scalarize(&p, &vr(&[2.0, 4.0])).unwrap(), 3.0);
        let p = Preference::new(vec![0.25, 0.75]).unwrap();
        let v = vr(&[4.0, 0.0]);
        let mut looped = 0.0;
        for i in 0..2 {
            looped += p[i] * v[i];
        }
        assert_eq!(scalarize(&p, &v).unwrap(), looped);
        assert_eq!(looped, 1.0);
        assert!(scalarize(&p, &vr(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn cosine_distance_examples() {
        let e1 = Preference::corner(2, 0).unwrap();
        let e2 = Preference::corner(2, 1).unwrap();
        let mid = Preference::pair(0.5).unwrap();
        assert_eq!(cosine_distance(&e1, &e1).unwrap(), 0.0);
        assert!((cosine_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let expected = 1.0 - 1.0 / 2f64.sqrt();
        assert!((cosine_distance(&mid, &e1).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.29289).abs() < 1e-5);
        assert!(cosine_distance_raw(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn l1_normalize_examples() {
        assert_eq!(l1_normalize(&vr(&[3.0, 1.0])).unwrap().weights(), &[0.75, 0.25]);
        assert_eq!(l1_normalize(&vr(&[5.0, 0.0])).unwrap().weights(), &[1.0, 0.0]);
        assert_eq!(
            l1_normalize(&vr(&[2.0, 2.0, 4.0])).unwrap().weights(),
            &[0.25, 0.25, 0.5]
        );
        assert!(matches!(
            l1_normalize(&vr(&[0.0, 0.0])),
            Err(Error::DegenerateReturn(_))
        ));
        assert!(matches!(
            l1_normalize(&vr(&[-1.0, 3.0])),
            Err(Error::DegenerateReturn(_))
        ));
    }

    #[test]
    fn augment_examples() {
        let a = augment(&Preference::pair(0.6).unwrap(), 0.5).unwrap();
        assert!((a.task_part()[0] - 0.3).abs() < 1e-15);
        assert!((a.task_part()[1] - 0.2).abs() < 1e-15);
        assert_eq!(a.bc_weight(), 0.5);

        let a = augment(&Preference::corner(2, 0).unwrap(), 1.0).unwrap();
        assert_eq!(a.task_part(), vec![0.0, 0.0]);
        assert_eq!(a.features(), vec![0.0, 0.0, 1.0]);

        let a = augment(&Preference::pair(0.2).unwrap(), 0.25).unwrap();
        assert!((a.task_part()[0] - 0.15).abs() < 1e-15);
        assert!((a.task_part()[1] - 0.6).abs() < 1e-15);

        let p = Preference::pair(0.5).unwrap();
        assert!(augment(&p, 0.0).is_err());
        assert!(augment(&p, 1.2).is_err());
        assert!(augment_bounded(&p, 0.1, 0.2).is_err());
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&vr(&[2.0, 2.0]), &vr(&[1.0, 1.0])).unwrap());
        assert!(!dominates(&vr(&[2.0, 1.0]), &vr(&[1.0, 2.0])).unwrap());
        assert!(!dominates(&vr(&[1.0, 1.0]), &vr(&[1.0, 1.0])).unwrap());
        assert!(dominates(&vr(&[1.0]), &vr(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let t = |r: [f64; 2], done: bool| Transition {
            state: vec![0.0],
            action: vec![0.0],
            reward: vr(&r),
            next_state: vec![0.0],
            terminal: done,
        };
        let traj = Trajectory::from_transitions(vec![t([1.0, 0.0], false), t([0.5, 2.0], true)]).unwrap();
        assert_eq!(traj.episode_return.values(), &[1.5, 2.0]);
        assert!(Trajectory::from_transitions(vec![t([1.0, 0.0], true), t([0.5, 2.0], false)]).is_err());
        let mut bad = traj.clone();
        bad.episode_return = vr(&[1.5, 2.1]);
        assert!(matches!(bad.validate(), Err(Error::Integrity(_))));
    }

    #[test]
    fn grid_shapes() {
        let g = preference_grid(2, 101).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0].weights(), &[0.0, 1.0]);
        assert_eq!(g[100].weights(), &[1.0, 0.0]);
        assert_eq!(preference_grid(3, 3).unwrap().len(), 6);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Preference> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            Preference::new(v.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap_or_else(|_| {
                l1_normalize(&VectorReturn::new(v)).unwrap()
            })
        })
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn scalarize_is_linear(p in simplex(3), u in vec3(), v in vec3(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let comb = VectorReturn::new(u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect());
            let lhs = scalarize(&p, &comb).unwrap();
            let rhs = a * scalarize(&p, &VectorReturn::new(u.clone())).unwrap()
                + b * scalarize(&p, &VectorReturn::new(v.clone())).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn cosine_distance_symmetric_and_scale_invariant(p in simplex(3), q in simplex(3), c in 0.1f64..10.0) {
            let d1 = cosine_distance(&p, &q).unwrap();
            let d2 = cosine_distance(&q, &p).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-15);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d1));
            let scaled: Vec<f64> = p.weights().iter().map(|x| x * c).collect();
            prop_assert!(cosine_distance_raw(&scaled, p.weights()).unwrap().abs() < 1e-12);
        }

        #[test]
        fn l1_normalize_scale_invariant(v in prop::collection::vec(0.0f64..50.0, 2..5), c in 0.01f64..100.0) {
            prop_assume!(v.iter().sum::<f64>() > 1e-6);
            let a = l1_normalize(&VectorReturn::new(v.clone())).unwrap();
            let b = l1_normalize(&VectorReturn::new(v.iter().map(|x| x * c).collect())).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn augment_round_trips(p in simplex(2), w in 0.2f64..0.999) {
            let a = augment(&p, w).unwrap();
            let sum: f64 = a.features().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for (t, orig) in a.task_part().iter().zip(p.weights()) {
                prop_assert!((t / (1.0 - a.bc_weight()) - orig).abs() < 1e-9);
            }
        }

        #[test]
        fn dominance_is_strict_partial_order(
            a in prop::collection::vec(0i32..4, 2),
            b in prop::collection::vec(0i32..4, 2),
            c in prop::collection::vec(0i32..4, 2),
        ) {
            let f = |v: &Vec<i32>| VectorReturn::new(v.iter().map(|&x| x as f64).collect());
            let (a, b, c) = (f(&a), f(&b), f(&c));
            prop_assert!(!dominates(&a, &a).unwrap());
            if dominates(&a, &b).unwrap() {
                prop_assert!(!dominates(&b, &a).unwrap());
                if dominates(&b, &c).unwrap() {
                    prop_assert!(dominates(&a, &c).unwrap());
                }
            }
        }
    }
}
