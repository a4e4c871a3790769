use ndarray::Array2;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Compare reverse-mode gradients of a scalar function against central
/// differences.
///
/// `f` receives one leaf per entry of `point`, in order. Returns the maximum
/// over all coordinates of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, point: &[Array2<f64>], h: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Array2<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&tape, &vars)?;
        let y = tape.item(out);
        if !y.is_finite() {
            return Err(Error::Numeric(format!("function value {y} at probe point")));
        }
        Ok(y)
    };

    let tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|v| tape.variable(v.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Array2<f64>> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();

    let mut probe: Vec<Array2<f64>> = point.to_vec();
    let mut worst = 0.0f64;
    for t in 0..point.len() {
        let n = point[t].len();
        for k in 0..n {
            let original = point[t].as_slice().expect("standard layout")[k];
            probe[t].as_slice_mut().expect("standard layout")[k] = original + h;
            let up = eval(&probe)?;
            probe[t].as_slice_mut().expect("standard layout")[k] = original - h;
            let down = eval(&probe)?;
            probe[t].as_slice_mut().expect("standard layout")[k] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t].as_slice().expect("standard layout")[k];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
