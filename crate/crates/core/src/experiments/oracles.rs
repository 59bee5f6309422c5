//! Metric oracle agreement and the finite-difference gradient suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{mo_cql_actor_loss, mo_cql_critic_loss, GaussianActor};
use crate::dataset::{sample_batch, OfflineDataset};
use crate::envs::{Env, LINEWORLD};
use crate::error::Result;
use crate::metrics::{hypervolume, hypervolume_monte_carlo, pareto_filter, sparsity, ParetoFront};
use crate::momdp::VectorReturn;
use crate::nn::{finite_diff_check, Tensor, FD_STEP};
use crate::regularizers::{Actor, ActorConfig, Family};
use crate::trainer::{actor_loss, critic_loss, BatchTensors, CriticEnsemble, OnlineCritics, PolicyBundle, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOracleReport {
    pub hv_fronts: usize,
    /// Largest `|exact - mc| / se` over the fronts.
    pub hv_worst_z: f64,
    pub sp_fronts: usize,
    pub sp_mismatches: usize,
    pub filter_sets: usize,
    pub filter_mismatches: usize,
}

fn random_front(rng: &mut ChaCha8Rng) -> Vec<VectorReturn> {
    let n = rng.random_range(1..=12);
    (0..n)
        .map(|_| VectorReturn::new(vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]))
        .collect()
}

/// Sparsity written out directly on a 2-D front: sort by the first
/// objective (descending), then accumulate squared gaps objective by
/// objective.
fn sparsity_by_hand(points: &[VectorReturn]) -> f64 {
    let m = points.len();
    if m < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..2 {
        let mut c: Vec<f64> = points.iter().map(|p| p[j]).collect();
        c.sort_by(|a, b| b.total_cmp(a));
        let mut s = 0.0;
        for i in 0..m - 1 {
            s += (c[i] - c[i + 1]) * (c[i] - c[i + 1]);
        }
        total += s;
    }
    total / (m - 1) as f64
}

/// O(n²) dominance filter keeping the first copy of duplicates.
fn filter_by_brute_force(points: &[VectorReturn]) -> Vec<VectorReturn> {
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mut keep = true;
        for (j, q) in points.iter().enumerate() {
            let ge = q.values().iter().zip(p.values()).all(|(a, b)| a >= b);
            let gt = q.values().iter().zip(p.values()).any(|(a, b)| a > b);
            if (ge && gt) || (j < i && q == p) {
                keep = false;
                break;
            }
        }
        if keep {
            out.push(p.clone());
        }
    }
    out
}

/// Exact 2-D hypervolume against Monte Carlo on 200 random fronts, sparsity
/// against the hand formula on 1,000 filtered fronts, and the dominance
/// filter against brute force on every subset of several 12-point pools.
pub fn metric_oracles(seed: u64) -> Result<MetricOracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = VectorReturn::zeros(2);
    let mut hv_worst_z = 0.0f64;
    let hv_fronts = 200;
    for _ in 0..hv_fronts {
        let front = ParetoFront::new(&random_front(&mut rng), r0.clone())?;
        let exact = hypervolume(&front)?;
        let (mc, se) = hypervolume_monte_carlo(&front, 20_000, &mut rng)?;
        let z = if se > 0.0 { (exact - mc).abs() / se } else if exact == mc { 0.0 } else { f64::INFINITY };
        hv_worst_z = hv_worst_z.max(z);
    }

    let sp_fronts = 1000;
    let mut sp_mismatches = 0;
    for _ in 0..sp_fronts {
        let f = pareto_filter(&random_front(&mut rng));
        if sparsity(&f) != sparsity_by_hand(&f) {
            sp_mismatches += 1;
        }
    }

    // Pools on a coarse integer grid so ties and duplicates are common.
    let mut filter_sets = 0;
    let mut filter_mismatches = 0;
    for _ in 0..4 {
        let pool: Vec<VectorReturn> = (0..12)
            .map(|_| VectorReturn::new(vec![rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]))
            .collect();
        for mask in 1u32..(1 << 12) {
            let set: Vec<VectorReturn> = (0..12).filter(|k| mask & (1 << k) != 0).map(|k| pool[k].clone()).collect();
            filter_sets += 1;
            if pareto_filter(&set) != filter_by_brute_force(&set) {
                filter_mismatches += 1;
            }
        }
    }
    Ok(MetricOracleReport {
        hv_fronts,
        hv_worst_z,
        sp_fronts,
        sp_mismatches,
        filter_sets,
        filter_mismatches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCase {
    pub loss: String,
    pub nets: usize,
    pub worst_rel_error: f64,
}

fn small_actor(family: Family) -> ActorConfig {
    ActorConfig {
        hidden: vec![8, 8],
        ..ActorConfig::new(family)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lim: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-lim..lim)).collect()).expect("shape")
}

/// Worst finite-difference relative error over `nets` random small networks
/// for every loss: the three cloning losses, the regularized actor and
/// critic losses and both MO-CQL losses.
pub fn gradient_suite(nets: usize, ds: &OfflineDataset, seed: u64) -> Result<Vec<GradientCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let env = Env::by_name(LINEWORLD)?;

    for f in Family::ALL {
        let mut worst = 0.0f64;
        for k in 0..nets {
            let mut actor = Actor::new(&small_actor(f), 3, 2, &mut rng)?;
            let cond = random_tensor(&mut rng, 6, 3, 1.0);
            let act = random_tensor(&mut rng, 6, 2, 0.9);
            let s = seed.wrapping_add(k as u64);
            worst = worst.max(finite_diff_check(
                &mut actor,
                |m, tape| {
                    let c = tape.constant(cond.clone());
                    let a = tape.constant(act.clone());
                    m.bc_loss_mean(tape, c, a, &mut ChaCha8Rng::seed_from_u64(s))
                },
                FD_STEP,
            )?);
        }
        cases.push(GradientCase {
            loss: format!("{f} cloning"),
            nets,
            worst_rel_error: worst,
        });
    }

    let (mut worst_actor, mut worst_critic) = (0.0f64, 0.0f64);
    for k in 0..nets {
        let f = Family::ALL[k % 3];
        let mut c = TrainConfig::new(LINEWORLD, f);
        c.actor = small_actor(f);
        c.critic_hidden = vec![8, 8];
        let b = PolicyBundle::new(c, env.spec().clone(), &mut rng)?;
        let bt = BatchTensors::new(&sample_batch(ds, 6, 0.3, 0.2, &mut rng)?, true)?;
        let s = seed.wrapping_add(k as u64);
        let eta = b.config.eta();
        let mut actor = b.actor.clone();
        worst_actor = worst_actor.max(finite_diff_check(
            &mut actor,
            |m, tape| actor_loss(m, &b.critics, eta, tape, &bt, &mut ChaCha8Rng::seed_from_u64(s)),
            FD_STEP,
        )?);
        let mut critics = OnlineCritics(b.critics.clone());
        worst_critic = worst_critic.max(finite_diff_check(
            &mut critics,
            |m, tape| critic_loss(&b.actor, &m.0, 0.99, tape, &bt, &mut ChaCha8Rng::seed_from_u64(s)),
            FD_STEP,
        )?);
    }
    cases.push(GradientCase {
        loss: "regularized actor".into(),
        nets,
        worst_rel_error: worst_actor,
    });
    cases.push(GradientCase {
        loss: "critic".into(),
        nets,
        worst_rel_error: worst_critic,
    });

    let (mut worst_actor, mut worst_critic) = (0.0f64, 0.0f64);
    for k in 0..nets {
        let cfg = small_actor(Family::Mse);
        let actor = GaussianActor::new(&cfg, 4, 1, &mut rng)?;
        // Plain preferences: critic input is [s, a, ω] with two weights.
        let critics = CriticEnsemble::new(2, 5, 2, &[8, 8], cfg.activation, &mut rng)?;
        let bt = BatchTensors::new(&sample_batch(ds, 6, 0.3, 0.2, &mut rng)?, false)?;
        let s = seed.wrapping_add(k as u64);
        let mut a = actor.clone();
        worst_actor = worst_actor.max(finite_diff_check(
            &mut a,
            |m, tape| mo_cql_actor_loss(m, &critics, tape, &bt, &mut ChaCha8Rng::seed_from_u64(s)),
            FD_STEP,
        )?);
        let mut oc = OnlineCritics(critics.clone());
        worst_critic = worst_critic.max(finite_diff_check(
            &mut oc,
            |m, tape| mo_cql_critic_loss(&actor, &m.0, 0.99, 10.0, tape, &bt, &mut ChaCha8Rng::seed_from_u64(s)),
            FD_STEP,
        )?);
    }
    cases.push(GradientCase {
        loss: "mo-cql actor".into(),
        nets,
        worst_rel_error: worst_actor,
    });
    cases.push(GradientCase {
        loss: "mo-cql critic".into(),
        nets,
        worst_rel_error: worst_critic,
    });
    Ok(cases)
}
