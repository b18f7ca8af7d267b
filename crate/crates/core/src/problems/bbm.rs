//! Fourier collocation of the BBM equation
//! `(I - ∂ₓ²) u_t + ∂ₓ(u²/2) + ∂ₓu = 0` on a periodic interval.

use super::{Problem, ProblemError, ReferencePolicy, RhsError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Soliton speed.
pub const SOLITON_SPEED: f64 = 1.2;

/// Soliton amplitude `3(c - 1)`.
pub fn soliton_amplitude() -> f64 {
    3.0 * (SOLITON_SPEED - 1.0)
}

/// Soliton inverse width `½ √(1 - 1/c)`.
pub fn soliton_wavenumber() -> f64 {
    0.5 * (1.0 - 1.0 / SOLITON_SPEED).sqrt()
}

/// Uniform periodic grid with dense spectral operators.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrid {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub x: Vec<f64>,
    /// First derivative, row-major `n × n`.
    pub d1: Vec<f64>,
    /// `(I - D1²)⁻¹`, row-major `n × n`.
    pub helmholtz_inv: Vec<f64>,
}

impl FourierGrid {
    pub fn new(n: usize, x_min: f64, x_max: f64) -> Result<Self, ProblemError> {
        if n < 16 || !n.is_multiple_of(2) || x_max <= x_min {
            return Err(ProblemError::InvalidGrid(format!(
                "{n} Fourier nodes on [{x_min}, {x_max}]"
            )));
        }
        let len = x_max - x_min;
        let dx = len / n as f64;
        let x = (0..n).map(|j| x_min + j as f64 * dx).collect();
        let mut d1 = vec![0.0; n * n];
        let mut helmholtz_inv = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                let m = (j + n - l) % n;
                if m != 0 {
                    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
                    d1[j * n + l] = sign * PI / len / (PI * m as f64 / n as f64).tan();
                }
                let mut h = 1.0 + if m.is_multiple_of(2) { 1.0 } else { -1.0 };
                for k in 1..n / 2 {
                    let kappa = 2.0 * PI * k as f64 / len;
                    h += 2.0 * (2.0 * PI * (k * m) as f64 / n as f64).cos() / (1.0 + kappa * kappa);
                }
                helmholtz_inv[j * n + l] = h / n as f64;
            }
        }
        Ok(FourierGrid {
            n,
            x_min,
            x_max,
            x,
            d1,
            helmholtz_inv,
        })
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn apply_d1(&self, v: &[f64], out: &mut [f64]) {
        matvec(&self.d1, v, out);
    }

    pub fn apply_helmholtz_inv(&self, v: &[f64], out: &mut [f64]) {
        matvec(&self.helmholtz_inv, v, out);
    }
}

fn matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(n)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbmInvariant {
    /// `J₂ = ½ ∫ u² + (∂ₓu)²` with the split-form nonlinearity.
    Quadratic,
    /// `J₃ = ∫ (u + 1)³` with the conservative nonlinearity.
    Cubic,
}

#[derive(Debug, Clone)]
pub struct BbmFourier {
    grid: FourierGrid,
    invariant: BbmInvariant,
}

impl BbmFourier {
    pub fn new(grid: FourierGrid, invariant: BbmInvariant) -> Self {
        BbmFourier { grid, invariant }
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    pub fn invariant(&self) -> BbmInvariant {
        self.invariant
    }

    /// `J₁ = ∫ u`, conserved by both discretizations.
    pub fn mass(&self, u: &[f64]) -> f64 {
        self.grid.dx() * u.iter().sum::<f64>()
    }

    /// Travelling soliton with `x - ct` wrapped into the centred period
    /// `[-L/2, L/2)`, so the profile is continuous across the boundary.
    pub fn soliton(&self, t: f64) -> Vec<f64> {
        let a = soliton_amplitude();
        let k = soliton_wavenumber();
        let len = self.grid.length();
        self.grid
            .x
            .iter()
            .map(|&x| {
                let xi = (x - self.grid.x_min - SOLITON_SPEED * t + 0.5 * len).rem_euclid(len) - 0.5 * len;
                a / (k * xi).cosh().powi(2)
            })
            .collect()
    }
}

impl Problem for BbmFourier {
    fn name(&self) -> &str {
        match self.invariant {
            BbmInvariant::Quadratic => "bbm_quadratic",
            BbmInvariant::Cubic => "bbm_cubic",
        }
    }

    fn dim(&self) -> usize {
        self.grid.n
    }

    fn initial_state(&self) -> Vec<f64> {
        self.soliton(0.0)
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        let n = u.len();
        let mut flux = vec![0.0; n];
        match self.invariant {
            BbmInvariant::Quadratic => {
                let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
                let mut dsq = vec![0.0; n];
                let mut du_x = vec![0.0; n];
                self.grid.apply_d1(&sq, &mut dsq);
                self.grid.apply_d1(u, &mut du_x);
                for i in 0..n {
                    flux[i] = (dsq[i] + u[i] * du_x[i]) / 3.0 + du_x[i];
                }
            }
            BbmInvariant::Cubic => {
                let g: Vec<f64> = u.iter().map(|v| 0.5 * v * v + v).collect();
                self.grid.apply_d1(&g, &mut flux);
            }
        }
        self.grid.apply_helmholtz_inv(&flux, du);
        // the exact right-hand side has zero mean; dropping the round-off
        // mean keeps the linear invariant constant over long runs
        let mean = du.iter().sum::<f64>() / n as f64;
        for v in du.iter_mut() {
            *v = mean - *v;
        }
        if du.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(RhsError::NonFinite)
        }
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        let dx = self.grid.dx();
        match self.invariant {
            BbmInvariant::Quadratic => {
                let mut ux = vec![0.0; u.len()];
                self.grid.apply_d1(u, &mut ux);
                0.5 * dx * u.iter().zip(&ux).map(|(a, b)| a * a + b * b).sum::<f64>()
            }
            BbmInvariant::Cubic => dx * u.iter().map(|v| (v + 1.0).powi(3)).sum::<f64>(),
        }
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        let dx = self.grid.dx();
        match self.invariant {
            BbmInvariant::Quadratic => {
                let n = u.len();
                let mut ux = vec![0.0; n];
                let mut uxx = vec![0.0; n];
                self.grid.apply_d1(u, &mut ux);
                self.grid.apply_d1(&ux, &mut uxx);
                for i in 0..n {
                    grad[i] = dx * (u[i] - uxx[i]);
                }
            }
            BbmInvariant::Cubic => {
                for (g, v) in grad.iter_mut().zip(u) {
                    *g = 3.0 * dx * (v + 1.0).powi(2);
                }
            }
        }
    }

    /// The wrapped soliton, which is not an exact solution on this short
    /// period; errors are measured against a tight numerical reference.
    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(self.soliton(t))
    }

    fn reference_policy(&self) -> ReferencePolicy {
        ReferencePolicy::AdaptiveDp5 { tol: 1e-13 }
    }

    fn error_norm(&self, u: &[f64], v: &[f64]) -> f64 {
        (self.grid.dx() * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt()
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.grid.n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid() -> FourierGrid {
        FourierGrid::new(64, 0.0, 2.0).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn soliton_constants() {
        assert!((soliton_amplitude() - 0.6).abs() < 1e-15);
        assert!((soliton_wavenumber() - 0.2041241).abs() < 1e-6);
        assert!((soliton_wavenumber() - 0.5 * (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(FourierGrid::new(15, 0.0, 2.0).is_err());
        assert!(FourierGrid::new(8, 0.0, 2.0).is_err());
        assert!(FourierGrid::new(64, 1.0, 1.0).is_err());
    }

    #[test]
    fn d1_annihilates_constants_and_is_skew() {
        let g = grid();
        let n = g.n;
        let mut out = vec![0.0; n];
        g.apply_d1(&vec![3.0; n], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = random(&mut rng, n);
            let w = random(&mut rng, n);
            let mut dv = vec![0.0; n];
            let mut dw = vec![0.0; n];
            g.apply_d1(&v, &mut dv);
            g.apply_d1(&w, &mut dw);
            assert!((dot(&v, &dw) + dot(&dv, &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn d1_matches_modal_sum() {
        let g = grid();
        let n = g.n;
        let len = g.length();
        for j in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for k in 1..n / 2 {
                    let kappa = 2.0 * PI * k as f64 / len;
                    s += kappa * (kappa * (g.x[j] - g.x[l])).sin();
                }
                let modal = -2.0 / n as f64 * s;
                assert!((g.d1[j * n + l] - modal).abs() < 1e-11, "({j},{l})");
            }
        }
    }

    #[test]
    fn d1_differentiates_resolved_modes() {
        let g = grid();
        let u: Vec<f64> = g.x.iter().map(|x| (3.0 * PI * x).sin()).collect();
        let mut du = vec![0.0; g.n];
        g.apply_d1(&u, &mut du);
        for (x, d) in g.x.iter().zip(&du) {
            assert!((d - 3.0 * PI * (3.0 * PI * x).cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn helmholtz_inverse_is_inverse() {
        let g = grid();
        let n = g.n;
        // (I - D1²) assembled directly
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d2: f64 = (0..n).map(|k| g.d1[i * n + k] * g.d1[k * n + j]).sum();
                m[i * n + j] = if i == j { 1.0 } else { 0.0 } - d2;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let p: f64 = (0..n).map(|k| g.helmholtz_inv[i * n + k] * m[k * n + j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((p - id).abs() < 1e-12, "({i},{j}): {p}");
            }
        }
    }

    #[test]
    fn invariants_are_conserved_by_the_semidiscretization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for inv in [BbmInvariant::Quadratic, BbmInvariant::Cubic] {
            let p = BbmFourier::new(grid(), inv);
            let mut du = vec![0.0; 64];
            let mut g = vec![0.0; 64];
            for _ in 0..100 {
                let u = random(&mut rng, 64);
                p.rhs(&u, &mut du).unwrap();
                p.entropy_grad(&u, &mut g);
                let norm = dot(&u, &u).sqrt();
                assert!(dot(&g, &du).abs() <= 1e-11 * norm.powi(3).max(1.0), "{inv:?}");
                let mass_rate = p.grid.dx() * du.iter().sum::<f64>();
                assert!(mass_rate.abs() < 1e-12, "{inv:?}: {mass_rate:e}");
            }
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for inv in [BbmInvariant::Quadratic, BbmInvariant::Cubic] {
            let p = BbmFourier::new(grid(), inv);
            let u = random(&mut rng, 64);
            let mut g = vec![0.0; 64];
            p.entropy_grad(&u, &mut g);
            let h = 1e-6;
            for i in [0, 17, 63] {
                let mut up = u.clone();
                let mut um = u.clone();
                up[i] += h;
                um[i] -= h;
                let fd = (p.entropy(&up) - p.entropy(&um)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7 * g[i].abs().max(1.0), "{inv:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn soliton_is_continuous_and_peaks_at_origin() {
        let p = BbmFourier::new(grid(), BbmInvariant::Quadratic);
        let u0 = p.initial_state();
        assert!((u0[0] - 0.6).abs() < 1e-15);
        let jump = (u0[63] - u0[0]).abs();
        assert!(jump < 0.01);
        // one full period later the wrapped profile repeats
        let later = p.soliton(2.0 / SOLITON_SPEED);
        assert!(p.error_norm(&u0, &later) < 1e-13);
    }
}
