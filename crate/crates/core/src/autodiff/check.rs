//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub pass: bool,
}

/// Compares tape gradients against central differences with relative step
/// `h = 1e-5 * max(1, |x_i|)`.
///
/// `tape_fn` and `value_fn` must evaluate the same function; kernels
/// generic over [`super::Scalar`] provide both instantiations for free.
/// Any randomness or quantization inside the function must be frozen by
/// the caller.
///
/// The per-component relative error divides by
/// `max(|analytic|, |numeric|, 1e-3 * ||grad||_inf, 1e-6)`: components far
/// below the gradient's own scale are compared against that scale, since
/// central differences only resolve them to the function's evaluation
/// noise divided by 2h.
pub fn grad_check<F, G>(tape_fn: F, value_fn: G, point: &[f64], tolerance: f64) -> GradCheckReport
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
    G: Fn(&[f64]) -> f64,
{
    let tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|&x| tape.var(x)).collect();
    let out = tape_fn(&tape, &vars);
    let grads = out.backward();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        pass: true,
    };
    let grad_inf = vars.iter().map(|v| grads.wrt(*v).abs()).fold(0.0f64, f64::max);
    let scale_floor = (1e-3 * grad_inf).max(1e-6);
    let mut x = point.to_vec();
    for i in 0..point.len() {
        let h = 1e-5 * point[i].abs().max(1.0);
        let orig = x[i];
        x[i] = orig + h;
        let f_plus = value_fn(&x);
        x[i] = orig - h;
        let f_minus = value_fn(&x);
        x[i] = orig;
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let analytic = grads.wrt(vars[i]);
        let denom = analytic.abs().max(numeric.abs()).max(scale_floor);
        let rel = (analytic - numeric).abs() / denom;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.analytic_at_worst = analytic;
            report.numeric_at_worst = numeric;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Scalar;

    fn poly<S: Scalar>(x: &[S]) -> S {
        // 3 x0 - 2 x1 + x0 * x1^2 + exp(x0) * tanh(x1)
        x[0].scale(3.0) - x[1].scale(2.0) + x[0] * x[1].square() + x[0].exp() * x[1].tanh()
    }

    #[test]
    fn linear_function_is_near_exact() {
        let report = grad_check(
            |_t, v| v[0].scale(2.0) + v[1].scale(-7.0),
            |x| 2.0 * x[0] - 7.0 * x[1],
            &[0.3, -1.2],
            1e-9,
        );
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn composite_matches_finite_differences() {
        let report = grad_check(
            |_t, v| poly(v),
            |x| poly(&x.to_vec()[..]),
            &[0.4, 0.9],
            1e-6,
        );
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
