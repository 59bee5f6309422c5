//! Deployment-time adaptation of the cloning weight ω_bc for a target
//! preference: a truncated Gaussian over ω_bc is moved along a
//! score-function estimate of the expected scalarized return.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::momdp::{scalarize, Preference, VectorReturn};
use crate::trainer::{rollout_batch, PreferencePolicy, RolloutJob};

const REJECTION_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussian {
    pub mu: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl TruncatedGaussian {
    pub fn new(mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(lower < upper) || !mu.is_finite() {
            return Err(Error::invalid(format!("bad truncation [{lower}, {upper}] or mean {mu}")));
        }
        Ok(Self { mu, sigma, lower, upper })
    }

    /// Rejection sampling from the parent Gaussian, falling back to a
    /// clamped parent draw after 1000 misses.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut x = self.mu;
        for _ in 0..REJECTION_CAP {
            let z: f64 = rng.sample(StandardNormal);
            x = self.mu + self.sigma * z;
            if (self.lower..=self.upper).contains(&x) {
                return x;
            }
        }
        x.clamp(self.lower, self.upper)
    }

    fn bounds(&self) -> (f64, f64, f64) {
        let n = std_normal();
        let a = (self.lower - self.mu) / self.sigma;
        let b = (self.upper - self.mu) / self.sigma;
        (a, b, n.cdf(b) - n.cdf(a))
    }

    pub fn mean(&self) -> f64 {
        let n = std_normal();
        let (a, b, z) = self.bounds();
        if z <= 0.0 {
            return self.mu.clamp(self.lower, self.upper);
        }
        self.mu + self.sigma * (n.pdf(a) - n.pdf(b)) / z
    }

    /// Gradient of `log p(x)` with respect to `(μ, log σ)`, including the
    /// derivative of the normalizer.
    pub fn score(&self, x: f64) -> (f64, f64) {
        let n = std_normal();
        let (a, b, z) = self.bounds();
        let u = (x - self.mu) / self.sigma;
        let mut d_mu = u / self.sigma;
        let mut d_ls = u * u - 1.0;
        if z > 1e-300 {
            d_mu -= (n.pdf(a) - n.pdf(b)) / (self.sigma * z);
            d_ls -= (a * n.pdf(a) - b * n.pdf(b)) / z;
        }
        (d_mu, d_ls)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Gradient iterations.
    pub n_iters: usize,
    /// Trajectories per iteration, one per ω_bc draw.
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    /// Initial mean; `None` is the midpoint of the bounds.
    pub mu0: Option<f64>,
    /// Initial deviation; `None` is a quarter of the range.
    pub sigma0: Option<f64>,
    pub lr: f64,
    pub sigma_floor: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            n_iters: 3,
            k: 10,
            lower: 0.2,
            upper: 1.0,
            mu0: None,
            sigma0: None,
            lr: 0.1,
            sigma_floor: 0.01,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.k == 0 {
            return Err(Error::InvalidConfiguration("adaptation needs N >= 1 and K >= 1".into()));
        }
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "adaptation bounds must satisfy 0 < lower < upper <= 1, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if !(self.lr > 0.0 && self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfiguration("adaptation lr and sigma floor must be positive".into()));
        }
        Ok(())
    }

    pub fn initial(&self) -> Result<TruncatedGaussian> {
        let mu = self.mu0.unwrap_or(0.5 * (self.lower + self.upper));
        let sigma = self.sigma0.unwrap_or(0.25 * (self.upper - self.lower));
        TruncatedGaussian::new(mu, sigma, self.lower, self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptIteration {
    /// Distribution the draws came from.
    pub mu: f64,
    pub sigma: f64,
    pub wbc: Vec<f64>,
    pub returns: Vec<VectorReturn>,
    pub mean_utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub target_pref: Preference,
    pub iterations: Vec<AdaptIteration>,
    pub final_mu: f64,
    pub final_sigma: f64,
    pub final_wbc: f64,
}

impl AdaptationReport {
    pub fn n_trajectories(&self) -> usize {
        self.iterations.iter().map(|i| i.returns.len()).sum()
    }
}

/// Runs `n_iters` score-function steps on `(μ, log σ)` with a batch-mean
/// baseline and std-normalized advantages. The policy is never modified.
pub fn adapt<P: PreferencePolicy + ?Sized>(
    policy: &P,
    env: &Env,
    target: &Preference,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<AdaptationReport> {
    cfg.validate()?;
    let mut g = cfg.initial()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = Vec::with_capacity(cfg.n_iters);
    for it in 0..cfg.n_iters {
        let wbc: Vec<f64> = (0..cfg.k).map(|_| g.sample(&mut rng)).collect();
        let jobs: Vec<RolloutJob> = wbc
            .iter()
            .enumerate()
            .map(|(k, &w)| RolloutJob {
                pref: target.clone(),
                wbc: w,
                stream: (it * cfg.k + k) as u64,
            })
            .collect();
        let returns = rollout_batch(policy, env, &jobs, seed)
            .map_err(|e| Error::Numerical(format!("adaptation iteration {it}: {e}")))?;
        let utils = returns.iter().map(|r| scalarize(target, r)).collect::<Result<Vec<_>>>()?;
        let k = utils.len() as f64;
        let mean = utils.iter().sum::<f64>() / k;
        let sd = (utils.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / k).sqrt();
        let (mut d_mu, mut d_ls) = (0.0, 0.0);
        if sd > 1e-12 {
            for (u, w) in utils.iter().zip(&wbc) {
                let adv = (u - mean) / sd;
                let (sm, sl) = g.score(*w);
                d_mu += adv * sm / k;
                d_ls += adv * sl / k;
            }
        }
        iterations.push(AdaptIteration {
            mu: g.mu,
            sigma: g.sigma,
            wbc,
            returns,
            mean_utility: mean,
        });
        let mu = (g.mu + cfg.lr * d_mu).clamp(cfg.lower, cfg.upper);
        let sigma = (g.sigma.ln() + cfg.lr * d_ls).exp().max(cfg.sigma_floor);
        g = TruncatedGaussian::new(mu, sigma, cfg.lower, cfg.upper)?;
    }
    Ok(AdaptationReport {
        target_pref: target.clone(),
        iterations,
        final_mu: g.mu,
        final_sigma: g.sigma,
        final_wbc: g.mu.clamp(cfg.lower, cfg.upper),
    })
}

/// Grid of `points` equispaced weights over `[lower, upper]`.
pub fn wbc_grid(points: usize, lower: f64, upper: f64) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid("the weight grid needs at least 2 points"));
    }
    Ok((0..points)
        .map(|j| (lower + (upper - lower) * j as f64 / (points - 1) as f64).min(upper))
        .collect())
}

/// Best grid weight by mean utility over `episodes` rollouts; ties go to the
/// larger weight. Returns the weight and the utility at every grid point.
pub fn oracle_wbc<P: PreferencePolicy + ?Sized>(
    policy: &P,
    env: &Env,
    target: &Preference,
    grid: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() || episodes == 0 {
        return Err(Error::invalid("oracle search needs a grid and at least one episode"));
    }
    let jobs: Vec<RolloutJob> = grid
        .iter()
        .enumerate()
        .flat_map(|(j, &w)| {
            (0..episodes).map(move |e| RolloutJob {
                pref: target.clone(),
                wbc: w,
                stream: (j * episodes + e) as u64,
            })
        })
        .collect();
    let returns = rollout_batch(policy, env, &jobs, seed)?;
    let mut utils = Vec::with_capacity(grid.len());
    for chunk in returns.chunks(episodes) {
        let s = chunk.iter().map(|r| scalarize(target, r)).sum::<Result<f64>>()?;
        utils.push(s / episodes as f64);
    }
    let mut best = 0;
    for (j, u) in utils.iter().enumerate() {
        if *u >= utils[best] {
            best = j;
        }
    }
    Ok((grid[best], utils))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momdp::augment;
    use crate::envs::{EnvSpec, LINEWORLD};
    use crate::nn::Tensor;
    use crate::noise::Noise;

    /// Lineworld policy whose action is a fixed function of ω_bc.
    struct Scripted {
        spec: EnvSpec,
        f: fn(f64) -> f64,
    }

    impl PreferencePolicy for Scripted {
        fn spec(&self) -> &EnvSpec {
            &self.spec
        }
        fn act(&self, states: &Tensor, _: &[&Preference], wbc: &[f64], _: &mut dyn Noise) -> Result<Tensor> {
            Tensor::new(states.rows, 1, wbc.iter().map(|w| (self.f)(*w)).collect())
        }
    }

    fn scripted(f: fn(f64) -> f64) -> (Scripted, Env) {
        let env = Env::by_name(LINEWORLD).unwrap();
        (
            Scripted {
                spec: env.spec().clone(),
                f,
            },
            env,
        )
    }

    #[test]
    fn samples_stay_in_bounds_and_match_mean() {
        let g = TruncatedGaussian::new(0.6, 0.1, 0.2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 100_000;
        let mut s = 0.0;
        for _ in 0..n {
            let x = g.sample(&mut rng);
            assert!((0.2..=1.0).contains(&x));
            s += x;
        }
        // Trapezoid integration of the truncated density.
        let m = 20_000;
        let h = 0.8 / m as f64;
        let dens = |x: f64| (-0.5 * ((x - 0.6) / 0.1f64).powi(2)).exp();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=m {
            let x = 0.2 + i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            num += w * x * dens(x);
            den += w * dens(x);
        }
        let oracle = num / den;
        assert!((s / n as f64 - oracle).abs() < 0.01);
        assert!((g.mean() - oracle).abs() < 1e-8);
    }

    #[test]
    fn degenerate_and_far_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = TruncatedGaussian::new(0.5, 1e-6, 0.2, 1.0).unwrap();
        assert!((0..1000).all(|_| (g.sample(&mut rng) - 0.5).abs() <= 1e-4));
        let far = TruncatedGaussian::new(-5.0, 0.1, 0.2, 1.0).unwrap();
        assert!((0..100).all(|_| far.sample(&mut rng) == 0.2));
        assert!(TruncatedGaussian::new(0.5, 0.0, 0.2, 1.0).is_err());
        assert!(TruncatedGaussian::new(0.5, 0.1, 1.0, 0.2).is_err());
    }

    #[test]
    fn score_matches_finite_differences_of_log_density() {
        let logp = |mu: f64, ls: f64, x: f64| {
            let sigma = ls.exp();
            let n = std_normal();
            let z = n.cdf((1.0 - mu) / sigma) - n.cdf((0.2 - mu) / sigma);
            n.ln_pdf((x - mu) / sigma) - ls - z.ln()
        };
        for (mu, sigma, x) in [(0.6, 0.2, 0.3), (0.25, 0.1, 0.9), (0.95, 0.5, 0.5)] {
            let g = TruncatedGaussian::new(mu, sigma, 0.2, 1.0).unwrap();
            let (dm, ds) = g.score(x);
            let h = 1e-6;
            let ls = sigma.ln();
            let fm = (logp(mu + h, ls, x) - logp(mu - h, ls, x)) / (2.0 * h);
            let fs = (logp(mu, ls + h, x) - logp(mu, ls - h, x)) / (2.0 * h);
            assert!((dm - fm).abs() < 1e-6 && (ds - fs).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_stays_inside_bounds() {
        for points in 2..200 {
            let g = wbc_grid(points, 0.2, 1.0).unwrap();
            assert_eq!((g[0], g[points - 1]), (0.2, 1.0), "{points}");
            assert!(g.windows(2).all(|w| w[0] < w[1]));
            assert!(g.iter().all(|&w| augment(&Preference::pair(0.5).unwrap(), w).is_ok()));
        }
    }

    #[test]
    fn three_by_ten_collects_thirty_trajectories() {
        let (p, env) = scripted(|w| 1.0 - w);
        let r = adapt(&p, &env, &Preference::pair(1.0).unwrap(), &AdaptConfig::default(), 0).unwrap();
        assert_eq!(r.iterations.len(), 3);
        assert_eq!(r.n_trajectories(), 30);
        assert!((0.2..=1.0).contains(&r.final_wbc));
        assert_eq!(r.final_wbc, r.final_mu);
    }

    #[test]
    fn decreasing_utility_moves_mean_down() {
        let (p, env) = scripted(|w| 1.0 - w);
        let target = Preference::pair(1.0).unwrap();
        for seed in 0..5 {
            let r = adapt(&p, &env, &target, &AdaptConfig::default(), seed).unwrap();
            assert!(r.final_wbc < 0.6, "seed {seed}: {}", r.final_wbc);
        }
        let grid = wbc_grid(20, 0.2, 1.0).unwrap();
        let (best, utils) = oracle_wbc(&p, &env, &target, &grid, 1, 0).unwrap();
        assert_eq!(best, 0.2);
        assert!(utils.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn flat_utility_does_not_drift() {
        let (p, env) = scripted(|_| 0.5);
        let target = Preference::pair(0.3).unwrap();
        let r = adapt(&p, &env, &target, &AdaptConfig::default(), 3).unwrap();
        assert!((r.final_wbc - 0.6).abs() <= 0.4);
        let grid = wbc_grid(20, 0.2, 1.0).unwrap();
        let (best, _) = oracle_wbc(&p, &env, &target, &grid, 2, 0).unwrap();
        assert_eq!(best, 1.0);
    }

    #[test]
    fn increasing_utility_returns_upper_endpoint() {
        let (p, env) = scripted(|w| w);
        let grid = wbc_grid(20, 0.2, 1.0).unwrap();
        let (best, _) = oracle_wbc(&p, &env, &Preference::pair(1.0).unwrap(), &grid, 1, 0).unwrap();
        assert_eq!(best, 1.0);
        assert!(wbc_grid(1, 0.2, 1.0).is_err());
    }
}
