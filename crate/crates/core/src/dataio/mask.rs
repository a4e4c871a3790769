use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Remove `round(missing_rate * n * v)` of the `n * v` instance slots
/// uniformly at random, skipping any removal that would leave a sample with
/// no observed view.
///
/// Feasible whenever `missing_rate <= (v - 1) / v`, i.e. at most `v - 1`
/// slots per sample are removed on average.
pub fn generate_mask(n: usize, v: usize, missing_rate: f64, rng: &mut Rng) -> Result<Array2<u8>> {
    if n == 0 || v == 0 {
        return Err(Error::Contract(format!("mask needs n, v > 0, got n={n}, v={v}")));
    }
    let mut mask = Array2::<u8>::ones((n, v));
    if missing_rate == 0.0 {
        return Ok(mask);
    }
    let bound = (v as f64 - 1.0) / v as f64;
    let target = (missing_rate * (n * v) as f64).round() as usize;
    if !(0.0..=bound).contains(&missing_rate) || target > n * (v - 1) {
        return Err(Error::Contract(format!(
            "missing rate {missing_rate} is infeasible for {v} views (must be in [0, {bound}])"
        )));
    }
    let mut slots: Vec<usize> = (0..n * v).collect();
    rng.shuffle(&mut slots);
    let mut kept = vec![v; n];
    let mut removed = 0;
    for slot in slots {
        if removed == target {
            break;
        }
        let (i, j) = (slot / v, slot % v);
        if kept[i] > 1 {
            mask[[i, j]] = 0;
            kept[i] -= 1;
            removed += 1;
        }
    }
    debug_assert_eq!(removed, target);
    Ok(mask)
}
