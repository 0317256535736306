//! Finite-difference weights on arbitrary node sets.

/// Fornberg's recursion: weights `w[m][j]` such that
/// `f^{(m)}(x0) ≈ Σ_j w[m][j] f(nodes[j])` for `m = 0..=max_order`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Indices of a `width`-point stencil around `i`, shifted to stay inside `0..n`.
pub fn stencil_window(i: usize, n: usize, width: usize) -> std::ops::Range<usize> {
    let half = width / 2;
    let start = i.saturating_sub(half).min(n.saturating_sub(width));
    start..(start + width).min(n)
}

/// Derivative table of order `order` using `width`-point local stencils.
pub fn differentiate(nodes: &[f64], values: &[f64], order: usize, width: usize) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let win = stencil_window(i, n, width);
            let w = fornberg_weights(nodes[i], &nodes[win.clone()], order);
            w[order]
                .iter()
                .zip(&values[win])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Lagrange interpolation through the `width` table nodes nearest `x`.
pub fn interpolate(nodes: &[f64], values: &[f64], x: f64, width: usize) -> f64 {
    let n = nodes.len();
    let i = match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => return values[i],
        Err(i) => i.min(n - 1),
    };
    let win = stencil_window(i, n, width);
    let w = fornberg_weights(x, &nodes[win.clone()], 0);
    w[0].iter().zip(&values[win]).map(|(a, b)| a * b).sum()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(n.max(1)).unwrap());
    rule.iter().map(|&(x, w)| (x, w)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_weights_are_exact_on_quartics() {
        let nodes = [0.0, 0.3, 0.7, 1.2, 2.0];
        let f = |x: f64| 1.0 - 2.0 * x + x.powi(3) - 0.25 * x.powi(4);
        let df = |x: f64| -2.0 + 3.0 * x * x - x.powi(3);
        let d2f = |x: f64| 6.0 * x - 3.0 * x * x;
        let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let w = fornberg_weights(0.9, &nodes, 2);
        let d1: f64 = w[1].iter().zip(&vals).map(|(a, b)| a * b).sum();
        let d2: f64 = w[2].iter().zip(&vals).map(|(a, b)| a * b).sum();
        assert!((d1 - df(0.9)).abs() < 1e-12);
        assert!((d2 - d2f(0.9)).abs() < 1e-11);
    }

    #[test]
    fn window_stays_in_range() {
        assert_eq!(stencil_window(0, 10, 5), 0..5);
        assert_eq!(stencil_window(9, 10, 5), 5..10);
        assert_eq!(stencil_window(4, 10, 5), 2..7);
    }
}
