//! Small quadrature helpers shared by the solvers and the oracles.

use gauss_quad::legendre::GaussLegendre;

/// Points per Gauss–Legendre panel.
const GL_POINTS: usize = 16;

/// Composite Gauss–Legendre rule with `panels` equal panels on `[a, b]`.
pub fn composite_gauss_legendre<F>(a: f64, b: f64, panels: usize, mut f: F) -> f64
where
    F: FnMut(f64) -> f64,
{
    let rule = GaussLegendre::new(GL_POINTS).expect("degree >= 2");
    let panels = panels.max(1);
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * w;
            rule.integrate(lo, lo + w, &mut f)
        })
        .sum()
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Running trapezoid integral: `out[i] = ∫_0^{t_i}` of the sampled function.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_exp() {
        let v = composite_gauss_legendre(0.0, 3.0, 4, f64::exp);
        assert_abs_diff_eq!(v, 3f64.exp() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let xs: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * 0.1 + 1.0).collect();
        assert_abs_diff_eq!(trapezoid(&xs, 0.1), 2.0, epsilon = 1e-14);
        let c = cumulative_trapezoid(&xs, 0.1);
        assert_eq!(c[0], 0.0);
        assert_abs_diff_eq!(c[10], 2.0, epsilon = 1e-14);
    }
}
