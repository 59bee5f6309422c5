//! Pareto-front quality metrics: dominance filtering, hypervolume, sparsity
//! and expected utility.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momdp::{dominates_slice, scalarize, Preference, VectorReturn};

/// Non-dominated subset of `points`, duplicates collapsed to their first
/// occurrence, survivors in input order.
pub fn pareto_filter(points: &[VectorReturn]) -> Vec<VectorReturn> {
    if points.is_empty() {
        return Vec::new();
    }
    let keep = if points[0].dim() == 2 {
        sweep_2d(points)
    } else {
        pairwise(points)
    };
    keep.into_iter().map(|i| points[i].clone()).collect()
}

fn sweep_2d(points: &[VectorReturn]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b][0]
            .total_cmp(&points[a][0])
            .then(points[b][1].total_cmp(&points[a][1]))
            .then(a.cmp(&b))
    });
    let mut best_y = f64::NEG_INFINITY;
    let mut keep = Vec::new();
    for i in order {
        if points[i][1] > best_y {
            best_y = points[i][1];
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

fn pairwise(points: &[VectorReturn]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let p = points[i].values();
            points.iter().enumerate().all(|(j, q)| {
                let q = q.values();
                !(dominates_slice(q, p) || (j < i && q == p))
            })
        })
        .collect()
}

/// A dominance-filtered point set with its hypervolume reference point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    points: Vec<VectorReturn>,
    pub reference_point: VectorReturn,
}

impl ParetoFront {
    pub fn new(points: &[VectorReturn], reference_point: VectorReturn) -> Result<Self> {
        if points.iter().any(|p| p.dim() != reference_point.dim()) {
            return Err(Error::invalid("front points and reference point differ in dimension"));
        }
        Ok(Self {
            points: pareto_filter(points),
            reference_point,
        })
    }

    /// Front with the origin as reference point.
    pub fn with_origin(points: &[VectorReturn], n_objectives: usize) -> Result<Self> {
        Self::new(points, VectorReturn::zeros(n_objectives))
    }

    pub fn points(&self) -> &[VectorReturn] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Exact hypervolume for 2 or 3 objectives.
pub fn hypervolume(front: &ParetoFront) -> Result<f64> {
    let r0 = front.reference_point.values();
    // Points not strictly above the reference point add no volume.
    let pts: Vec<Vec<f64>> = front
        .points
        .iter()
        .filter(|p| p.values().iter().zip(r0).all(|(x, r)| x > r))
        .map(|p| p.values().iter().zip(r0).map(|(x, r)| x - r).collect())
        .collect();
    match r0.len() {
        2 => Ok(area_2d(pts.iter().map(|p| (p[0], p[1])).collect())),
        3 => Ok(volume_3d(&pts)),
        n => Err(Error::Unsupported(format!(
            "exact hypervolume for {n} objectives; use the Monte-Carlo estimator"
        ))),
    }
}

/// Area dominated by points (relative to the origin, all coordinates positive).
fn area_2d(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut area = 0.0;
    let mut prev_y = 0.0;
    for (x, y) in pts {
        if y > prev_y {
            area += x * (y - prev_y);
            prev_y = y;
        }
    }
    area
}

fn volume_3d(pts: &[Vec<f64>]) -> f64 {
    let mut order: Vec<&Vec<f64>> = pts.iter().collect();
    order.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut volume = 0.0;
    for k in 0..order.len() {
        let z_hi = order[k][2];
        let z_lo = order.get(k + 1).map_or(0.0, |p| p[2]);
        if z_hi > z_lo {
            let slice: Vec<(f64, f64)> = order[..=k].iter().map(|p| (p[0], p[1])).collect();
            volume += area_2d(slice) * (z_hi - z_lo);
        }
    }
    volume
}

/// Monte-Carlo hypervolume estimate for any number of objectives.
/// Returns `(estimate, standard_error)`.
pub fn hypervolume_monte_carlo<R: Rng + ?Sized>(
    front: &ParetoFront,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("Monte-Carlo hypervolume needs at least one sample"));
    }
    let r0 = front.reference_point.values();
    let n = r0.len();
    let mut upper = r0.to_vec();
    for p in &front.points {
        for (u, x) in upper.iter_mut().zip(p.values()) {
            *u = u.max(*x);
        }
    }
    let box_volume: f64 = upper.iter().zip(r0).map(|(u, r)| u - r).product();
    if box_volume <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut hits = 0usize;
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for (k, xi) in x.iter_mut().enumerate() {
            *xi = r0[k] + rng.random::<f64>() * (upper[k] - r0[k]);
        }
        if front
            .points
            .iter()
            .any(|p| p.values().iter().zip(&x).all(|(pi, xi)| pi >= xi))
        {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let se = box_volume * (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok((box_volume * frac, se))
}

/// Mean squared gap between adjacent points per objective (sorted
/// descending), summed over objectives and divided by `|P| - 1`. Zero for
/// fewer than two points.
pub fn sparsity(points: &[VectorReturn]) -> f64 {
    if points.len() <= 1 {
        return 0.0;
    }
    let n = points[0].dim();
    let mut total = 0.0;
    let mut coords = Vec::with_capacity(points.len());
    for j in 0..n {
        coords.clear();
        coords.extend(points.iter().map(|p| p[j]));
        coords.sort_by(|a, b| b.total_cmp(a));
        total += coords.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum::<f64>();
    }
    total / (points.len() - 1) as f64
}

/// Mean scalarized return over evaluated preferences.
pub fn expected_utility(evals: &[(Preference, VectorReturn)]) -> Result<f64> {
    if evals.is_empty() {
        return Err(Error::invalid("expected utility of an empty evaluation set"));
    }
    if evals[0].0.dim() == 2 && evals.len() > 2 && !is_equispaced(evals) {
        log::warn!("expected utility computed on an irregular preference grid");
    }
    let mut total = 0.0;
    for (pref, ret) in evals {
        total += scalarize(pref, ret)?;
    }
    Ok(total / evals.len() as f64)
}

fn is_equispaced(evals: &[(Preference, VectorReturn)]) -> bool {
    let mut w: Vec<f64> = evals.iter().map(|(p, _)| p[0]).collect();
    w.sort_by(f64::total_cmp);
    let step = (w[w.len() - 1] - w[0]) / (w.len() - 1) as f64;
    w.windows(2).all(|p| ((p[1] - p[0]) - step).abs() < 1e-6)
}

/// Summary written next to every evaluated front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMetrics {
    pub reference_point: Vec<f64>,
    pub hv: f64,
    pub sp_filtered: f64,
    pub sp_raw: f64,
    pub eu: f64,
    pub n_points: usize,
    pub n_nondominated: usize,
}

impl FrontMetrics {
    /// Computes all metrics for per-preference mean returns.
    pub fn compute(evals: &[(Preference, VectorReturn)], reference_point: &VectorReturn) -> Result<Self> {
        let raw: Vec<VectorReturn> = evals.iter().map(|(_, r)| r.clone()).collect();
        let front = ParetoFront::new(&raw, reference_point.clone())?;
        Ok(Self {
            reference_point: reference_point.values().to_vec(),
            hv: hypervolume(&front)?,
            sp_filtered: sparsity(front.points()),
            sp_raw: sparsity(&raw),
            eu: expected_utility(evals)?,
            n_points: raw.len(),
            n_nondominated: front.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[&[f64]]) -> Vec<VectorReturn> {
        v.iter().map(|p| VectorReturn::new(p.to_vec())).collect()
    }

    #[test]
    fn filter_examples() {
        let p = pts(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(pareto_filter(&p), p[..3].to_vec());
        assert_eq!(pareto_filter(&p[..1]), p[..1].to_vec());
        let same = pts(&[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]]);
        assert_eq!(pareto_filter(&same), same[..1].to_vec());
        assert!(pareto_filter(&[]).is_empty());
        let p3 = pts(&[&[1.0, 1.0, 1.0], &[0.0, 0.0, 2.0], &[1.0, 1.0, 0.5], &[0.0, 0.0, 2.0]]);
        assert_eq!(pareto_filter(&p3), p3[..2].to_vec());
    }

    #[test]
    fn hypervolume_examples() {
        let origin = VectorReturn::zeros(2);
        let f = ParetoFront::new(&pts(&[&[1.0, 1.0]]), origin.clone()).unwrap();
        assert_eq!(hypervolume(&f).unwrap(), 1.0);
        let f = ParetoFront::new(&pts(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]), origin.clone()).unwrap();
        assert_eq!(hypervolume(&f).unwrap(), 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mc, _) = hypervolume_monte_carlo(&f, 1_000_000, &mut rng).unwrap();
        assert!((mc - 6.0).abs() / 6.0 < 0.005);
        let f = ParetoFront::new(&[], origin).unwrap();
        assert_eq!(hypervolume(&f).unwrap(), 0.0);
        // Points below the reference point contribute nothing.
        let f = ParetoFront::new(&pts(&[&[-1.0, 5.0], &[2.0, 2.0]]), VectorReturn::zeros(2)).unwrap();
        assert_eq!(hypervolume(&f).unwrap(), 4.0);
        let f4 = ParetoFront::new(&pts(&[&[1.0, 1.0, 1.0, 1.0]]), VectorReturn::zeros(4)).unwrap();
        assert!(matches!(hypervolume(&f4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hypervolume_3d() {
        let f = ParetoFront::new(
            &pts(&[&[1.0, 1.0, 1.0], &[2.0, 0.5, 0.5]]),
            VectorReturn::zeros(3),
        )
        .unwrap();
        // Unit cube plus the part of [0,2]x[0,.5]x[0,.5] outside it.
        assert!((hypervolume(&f).unwrap() - (1.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn sparsity_examples() {
        let p = pts(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        assert_eq!(sparsity(&p), 2.0);
        assert_eq!(sparsity(&p[..1]), 0.0);
        let dup = pts(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(sparsity(&pareto_filter(&dup)), 0.0);
    }

    #[test]
    fn expected_utility_examples() {
        let g = crate::momdp::preference_grid(2, 11).unwrap();
        let evals: Vec<_> = g.into_iter().map(|p| (p, VectorReturn::new(vec![1.0, 1.0]))).collect();
        assert!((expected_utility(&evals).unwrap() - 1.0).abs() < 1e-12);
        let evals = vec![
            (Preference::corner(2, 0).unwrap(), VectorReturn::new(vec![4.0, 0.0])),
            (Preference::corner(2, 1).unwrap(), VectorReturn::new(vec![0.0, 2.0])),
        ];
        assert_eq!(expected_utility(&evals).unwrap(), 3.0);
    }

    #[test]
    fn lineworld_oracle_expected_utility() {
        // Max scalarization over the linear front is 32·max(w, 1-w); its
        // integral over w in [0, 1] is 24.
        let front = crate::envs::LineWorld::new().oracle_front();
        let evals: Vec<_> = crate::momdp::preference_grid(2, 101)
            .unwrap()
            .into_iter()
            .map(|p| {
                let best = front
                    .iter()
                    .max_by(|a, b| {
                        scalarize(&p, a).unwrap().total_cmp(&scalarize(&p, b).unwrap())
                    })
                    .unwrap()
                    .clone();
                (p, best)
            })
            .collect();
        let eu = expected_utility(&evals).unwrap();
        assert!((eu - 24.0).abs() / 24.0 < 0.01, "eu={eu}");
    }

    fn arb_points() -> impl Strategy<Value = Vec<VectorReturn>> {
        prop::collection::vec(prop::collection::vec(0.0f64..10.0, 2), 0..15)
            .prop_map(|v| v.into_iter().map(VectorReturn::new).collect())
    }

    proptest! {
        #[test]
        fn hv_monotone(points in arb_points(), extra in prop::collection::vec(0.0f64..10.0, 2)) {
            let r0 = VectorReturn::zeros(2);
            let base = hypervolume(&ParetoFront::new(&points, r0.clone()).unwrap()).unwrap();
            let mut more = points.clone();
            more.push(VectorReturn::new(extra.clone()));
            let grown = hypervolume(&ParetoFront::new(&more, r0.clone()).unwrap()).unwrap();
            prop_assert!(grown >= base - 1e-12);
            if points.iter().any(|p| dominates_slice(p.values(), &extra)) {
                prop_assert!((grown - base).abs() < 1e-12);
            }
        }

        #[test]
        fn hv_translation_covariant(points in arb_points(), shift in prop::collection::vec(-5.0f64..5.0, 2)) {
            let r0 = VectorReturn::zeros(2);
            let a = hypervolume(&ParetoFront::new(&points, r0).unwrap()).unwrap();
            let moved: Vec<_> = points.iter().map(|p| VectorReturn::new(vec![p[0] + shift[0], p[1] + shift[1]])).collect();
            let b = hypervolume(&ParetoFront::new(&moved, VectorReturn::new(shift.clone())).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn sparsity_symmetric_under_axis_swap(points in arb_points()) {
            let f = pareto_filter(&points);
            let swapped: Vec<_> = f.iter().rev().map(|p| VectorReturn::new(vec![p[1], p[0]])).collect();
            prop_assert!((sparsity(&f) - sparsity(&swapped)).abs() < 1e-12);
        }

        #[test]
        fn filter_idempotent(points in arb_points()) {
            let f = pareto_filter(&points);
            prop_assert_eq!(pareto_filter(&f), f);
        }
    }
}
