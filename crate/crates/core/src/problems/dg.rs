//! Nodal DG spectral element discretization of `u_t + u_x = 0` on a periodic
//! interval, with Gauss-Lobatto-Legendre collocation and a central flux.

use super::{Problem, ProblemError, RhsError};
use std::f64::consts::PI;

/// Gauss-Lobatto-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_lobatto_legendre(degree: usize) -> (Vec<f64>, Vec<f64>) {
    let n = degree;
    let mut x: Vec<f64> = (0..=n).map(|j| -(PI * j as f64 / n as f64).cos()).collect();
    let mut p = vec![vec![0.0; n + 1]; n + 1];
    for _ in 0..100 {
        let old = x.clone();
        for (i, &xi) in x.iter().enumerate() {
            p[i][0] = 1.0;
            p[i][1] = xi;
            for k in 2..=n {
                p[i][k] = ((2 * k - 1) as f64 * xi * p[i][k - 1] - (k - 1) as f64 * p[i][k - 2]) / k as f64;
            }
        }
        let mut delta: f64 = 0.0;
        for i in 0..=n {
            x[i] = old[i] - (old[i] * p[i][n] - p[i][n - 1]) / ((n + 1) as f64 * p[i][n]);
            delta = delta.max((x[i] - old[i]).abs());
        }
        if delta <= f64::EPSILON {
            break;
        }
    }
    for (i, &xi) in x.iter().enumerate() {
        p[i][0] = 1.0;
        p[i][1] = xi;
        for k in 2..=n {
            p[i][k] = ((2 * k - 1) as f64 * xi * p[i][k - 1] - (k - 1) as f64 * p[i][k - 2]) / k as f64;
        }
    }
    let w = (0..=n)
        .map(|i| 2.0 / ((n * (n + 1)) as f64 * p[i][n] * p[i][n]))
        .collect();
    (x, w)
}

/// Lagrange differentiation matrix at `nodes`, via barycentric weights.
pub fn differentiation_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    let m = nodes.len();
    let lambda: Vec<f64> = (0..m)
        .map(|j| {
            1.0 / (0..m)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product::<f64>()
        })
        .collect();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                d[i][j] = lambda[j] / lambda[i] / (nodes[i] - nodes[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgsemGrid {
    pub n_elements: usize,
    pub degree: usize,
    pub length: f64,
    /// Reference nodes on `[-1, 1]`.
    pub ref_nodes: Vec<f64>,
    pub ref_weights: Vec<f64>,
    /// Reference differentiation matrix.
    pub d: Vec<Vec<f64>>,
    /// Physical node coordinates, element by element.
    pub x: Vec<f64>,
    /// Physical quadrature weights (sum to the element width per element).
    pub weights: Vec<f64>,
}

impl DgsemGrid {
    pub fn new(n_elements: usize, degree: usize, length: f64) -> Result<Self, ProblemError> {
        if n_elements == 0 || degree == 0 || length <= 0.0 {
            return Err(ProblemError::InvalidGrid(format!(
                "{n_elements} elements of degree {degree} on length {length}"
            )));
        }
        let (ref_nodes, ref_weights) = gauss_lobatto_legendre(degree);
        let d = differentiation_matrix(&ref_nodes);
        let h = length / n_elements as f64;
        let jac = 0.5 * h;
        let mut x = Vec::with_capacity(n_elements * (degree + 1));
        let mut weights = Vec::with_capacity(x.capacity());
        for e in 0..n_elements {
            let left = e as f64 * h;
            for (xi, wi) in ref_nodes.iter().zip(&ref_weights) {
                x.push(left + jac * (xi + 1.0));
                weights.push(jac * wi);
            }
        }
        Ok(DgsemGrid {
            n_elements,
            degree,
            length,
            ref_nodes,
            ref_weights,
            d,
            x,
            weights,
        })
    }

    pub fn element_width(&self) -> f64 {
        self.length / self.n_elements as f64
    }

    pub fn nodes_per_element(&self) -> usize {
        self.degree + 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `∂_t u + ∂_x u = 0`, `u(0, x) = exp(sin(2πx/L))`, energy `½ Σ w u²`.
#[derive(Debug, Clone)]
pub struct LinearAdvectionDg {
    grid: DgsemGrid,
}

impl LinearAdvectionDg {
    pub fn new(grid: DgsemGrid) -> Self {
        LinearAdvectionDg { grid }
    }

    pub fn grid(&self) -> &DgsemGrid {
        &self.grid
    }

    fn profile(&self, x: f64) -> f64 {
        (2.0 * PI * x / self.grid.length).sin().exp()
    }
}

impl Problem for LinearAdvectionDg {
    fn name(&self) -> &str {
        "advection_dg"
    }

    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.grid.x.iter().map(|&x| self.profile(x)).collect()
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        let g = &self.grid;
        let m = g.nodes_per_element();
        let ne = g.n_elements;
        let inv_jac = 2.0 / g.element_width();
        let w_end = g.ref_weights[0];
        for e in 0..ne {
            let ue = &u[e * m..(e + 1) * m];
            let left_nb = &u[((e + ne - 1) % ne) * m..][..m];
            let right_nb = &u[((e + 1) % ne) * m..][..m];
            let flux_left = 0.5 * (left_nb[m - 1] + ue[0]);
            let flux_right = 0.5 * (ue[m - 1] + right_nb[0]);
            let out = &mut du[e * m..(e + 1) * m];
            for (i, row) in g.d.iter().enumerate() {
                out[i] = row.iter().zip(ue).map(|(a, b)| a * b).sum();
            }
            out[0] -= (flux_left - ue[0]) / w_end;
            out[m - 1] += (flux_right - ue[m - 1]) / w_end;
            for v in out.iter_mut() {
                *v *= -inv_jac;
            }
        }
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        0.5 * u.iter().zip(&self.grid.weights).map(|(x, w)| w * x * x).sum::<f64>()
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        for ((g, x), w) in grad.iter_mut().zip(u).zip(&self.grid.weights) {
            *g = w * x;
        }
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(self.grid.x.iter().map(|&x| self.profile(x - t)).collect())
    }

    fn error_norm(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.grid.weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
