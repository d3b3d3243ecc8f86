use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Compares tape gradients of the scalar built by `f` against central finite
/// differences, perturbing every element of every input. Returns the largest
/// `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[i].shape());
        let ad = grads.get(*var).unwrap_or(&zero);
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let (t, _, o) = eval(&work)?;
            let up = t.value(o).data()[0];
            work[i].data_mut()[j] = orig - eps;
            let (t, _, o) = eval(&work)?;
            let down = t.value(o).data()[0];
            work[i].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = ad.data()[j];
            worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}
