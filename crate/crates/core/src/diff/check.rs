use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Largest relative disagreement between reverse-mode gradients of `f` at
/// `point` and central differences with step `eps`.
///
/// Each component's error is `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Graph, Var) -> Result<Var>,
{
    let analytic = {
        let g = Graph::new();
        let x = g.param("x", point);
        let loss = f(&g, x)?;
        g.backward(loss)?.get("x").cloned().expect("x is registered")
    };
    let eval = |p: Tensor| -> Result<f64> {
        let g = Graph::new();
        let x = g.constant(p);
        let out = f(&g, x)?;
        g.value(out).item()
    };
    let mut worst = 0.0f64;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                g.sum_all(sq)
            },
            &Tensor::scalar(3.0),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn softplus_at_zero() {
        let err = grad_check(
            |g, x| {
                let s = g.softplus(x)?;
                g.sum_all(s)
            },
            &Tensor::scalar(0.0),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = grad_check(
            |g, _x| Ok(g.constant(Tensor::scalar(4.2))),
            &Tensor::from_slice(&[1.0, -2.0]),
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }
}
