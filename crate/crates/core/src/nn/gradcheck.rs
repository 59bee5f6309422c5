use super::mlp::Parameterized;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

/// Compares tape gradients of `loss` against central differences for every
/// parameter of `model` and returns the worst relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, FD_FLOOR)`.
///
/// `loss` must be deterministic: it is re-evaluated twice per parameter.
pub fn finite_diff_check<M, F>(model: &mut M, mut loss: F, h: f64) -> Result<f64>
where
    M: Parameterized + ?Sized,
    F: FnMut(&M, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(model, &mut tape)?;
    let grads = tape.backward(l)?;
    let analytic: Vec<Vec<Vec<f64>>> = model
        .modules()
        .iter()
        .map(|m| {
            (0..m.params().len())
                .map(|i| {
                    grads
                        .get(m.key(i))
                        .map_or_else(|| vec![0.0; m.params()[i].len()], |g| g.data.clone())
                })
                .collect()
        })
        .collect();

    let mut eval = |model: &M| -> Result<f64> {
        let mut tape = Tape::new();
        let l = loss(model, &mut tape)?;
        Ok(tape.value(l).item())
    };
    let mut worst = 0.0f64;
    for (k, per_module) in analytic.iter().enumerate() {
        for (i, g) in per_module.iter().enumerate() {
            for (j, &a) in g.iter().enumerate() {
                let orig = model.modules()[k].params()[i].data[j];
                model.modules_mut()[k].params_mut()[i].data[j] = orig + h;
                let up = eval(model)?;
                model.modules_mut()[k].params_mut()[i].data[j] = orig - h;
                let down = eval(model)?;
                model.modules_mut()[k].params_mut()[i].data[j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, MlpConfig, OutputActivation, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_nearly_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new("q", MlpConfig::new(2, &[2], 1, Activation::Tanh, OutputActivation::None), &mut rng).unwrap();
        // Loss = Σ p² over all parameters.
        let err = finite_diff_check(
            &mut m,
            |m, tape| {
                let mut total = None;
                for (i, p) in m.params().iter().enumerate() {
                    let v = tape.param(m.key(i), p);
                    let sq = tape.square(v);
                    let s = tape.sum_all(sq);
                    total = Some(match total {
                        None => s,
                        Some(t) => tape.add(t, s)?,
                    });
                }
                Ok(total.unwrap())
            },
            FD_STEP,
        )
        .unwrap();
        assert!(err < 1e-7, "err={err}");
    }

    fn kink_margin(m: &Mlp, x: &Tensor) -> f64 {
        let mut h = x.clone();
        let mut margin = f64::INFINITY;
        for l in 0..m.n_layers() - 1 {
            let (w, b) = (&m.params()[2 * l], &m.params()[2 * l + 1]);
            let mut z = Tensor::zeros(h.rows, w.cols);
            for r in 0..h.rows {
                for c in 0..w.cols {
                    let v: f64 = (0..w.rows).map(|k| h.get(r, k) * w.get(k, c)).sum::<f64>() + b.data[c];
                    margin = margin.min(v.abs());
                    z.data[r * w.cols + c] = v.max(0.0);
                }
            }
            h = z;
        }
        margin
    }

    #[test]
    fn random_mlp_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in [Activation::Tanh, Activation::Mish, Activation::Relu] {
            for _ in 0..5 {
                let mut m = Mlp::new("r", MlpConfig::new(3, &[6, 5], 2, act, OutputActivation::None), &mut rng).unwrap();
                let mut x = Tensor::new(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                // Relu nets: redraw inputs until every pre-activation sits 1e-3 off the kink.
                while act == Activation::Relu && kink_margin(&m, &x) < 1e-3 {
                    x = Tensor::new(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                }
                let y = Tensor::new(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let err = finite_diff_check(
                    &mut m,
                    |m, tape| {
                        let xv = tape.constant(x.clone());
                        let out = m.forward(tape, xv, true)?;
                        let yv = tape.constant(y.clone());
                        let d = tape.sub(yv, out)?;
                        let sq = tape.square(d);
                        Ok(tape.sum_all(sq))
                    },
                    FD_STEP,
                )
                .unwrap();
                assert!(err < 1e-4, "{act:?}: err={err}");
            }
        }
    }
}
