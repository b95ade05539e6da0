// Composite Gauss-Legendre quadrature.

use std::sync::OnceLock;

const ORDER: usize = 16;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(ORDER))
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Abscissae and weights of the composite rule on `[a, b]`.
pub(crate) fn composite_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let (nodes, weights) = rule();
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * ORDER);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in nodes.iter().zip(weights) {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

#[cfg(test)]
pub(crate) fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    composite_nodes(a, b, panels)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}
