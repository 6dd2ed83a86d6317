use super::{Tape, Tensor, Var};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Compare reverse-mode gradients of a scalar program against central
/// finite differences, elementwise. Returns the max relative error with
/// denominator max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    check_coords(f, x, eps, &coords)
}

/// Like [`grad_check`] but only probes `max_coords` randomly chosen
/// coordinates (deterministic in `seed`). For large parameter tensors
/// where full finite differencing is unaffordable.
pub fn grad_check_sampled<F>(
    f: F,
    x: &Tensor,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let n = x.len();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, max_coords).into_vec()
    };
    check_coords(f, x, eps, &coords)
}

fn check_coords<F>(f: F, x: &Tensor, eps: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = f(&mut tape, xv)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::shape("grad_check needs a scalar-valued program"));
    }
    tape.backward(loss)?;
    let analytic = tape
        .grad(xv)
        .ok_or_else(|| Error::invalid("input did not receive a gradient"))?
        .to_vec();

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(probe.clone());
        let out = f(&mut t, v)?;
        Ok(t.value(out).item())
    };

    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
