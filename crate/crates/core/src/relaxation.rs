//! Relaxation parameter: the nonzero root `γ` of
//! `r(γ) = η(u_old + γ (u_new - u_old)) - η(u_old)`.
//!
//! `γ = 0` is always a root, so the search works on the deflated function
//! `r(γ) / γ` over a bracket around 1 that only ever grows away from zero.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("no sign change of the relaxation residual in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("root γ = {0} is too close to the trivial root")]
    SpuriousRoot(f64),
    #[error("entropy residual {residual:e} at γ = {gamma} exceeds {tol:e}")]
    ResidualTooLarge { gamma: f64, residual: f64, tol: f64 },
    #[error("bracketing iteration did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationConfig {
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Width of the final bracket on γ.
    pub gamma_tol: f64,
    /// Entropy residual bound, scaled by `max(1, |η(u_old)|)`.
    pub residual_tol: f64,
    pub max_expand: u32,
    /// Roots below this value are treated as the trivial root.
    pub min_gamma: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            bracket_lo: 0.5,
            bracket_hi: 1.5,
            gamma_tol: 1e-14,
            residual_tol: 1e-13,
            max_expand: 4,
            min_gamma: 0.1,
        }
    }
}

impl RelaxationConfig {
    /// Absolute residual bound used for an old entropy value.
    pub fn residual_bound(&self, eta_old: f64) -> f64 {
        self.residual_tol * eta_old.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxed {
    pub gamma: f64,
    /// Achieved `|η(u_γ) - η(u_old)|`.
    pub residual: f64,
}

/// `out = u_old + γ (u_new - u_old)`. Every relaxed state in the crate is
/// formed through this function so that the residual reported by
/// [`solve_gamma`] is the one of the stored state.
pub fn relaxed_state(u_old: &[f64], u_new: &[f64], gamma: f64, out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(u_old).zip(u_new) {
        *o = a + gamma * (b - a);
    }
}

const ROUNDOFF_FACTOR: f64 = 16.0;

pub fn solve_gamma(
    u_old: &[f64],
    u_new: &[f64],
    eta: impl Fn(&[f64]) -> f64,
    cfg: &RelaxationConfig,
) -> Result<Relaxed, RelaxationError> {
    if u_old == u_new {
        return Ok(Relaxed {
            gamma: 1.0,
            residual: 0.0,
        });
    }
    let eta_old = eta(u_old);
    let mut buf = vec![0.0; u_old.len()];
    let mut residual = |gamma: f64| -> f64 {
        relaxed_state(u_old, u_new, gamma, &mut buf);
        eta(&buf) - eta_old
    };
    let tol = cfg.residual_bound(eta_old);

    let r1 = residual(1.0);
    if r1 == 0.0 {
        return Ok(Relaxed {
            gamma: 1.0,
            residual: 0.0,
        });
    }

    let (mut lo, mut hi) = (cfg.bracket_lo, cfg.bracket_hi);
    let mut deflated = |g: f64| residual(g) / g;
    let mut expansions = 0;
    let (mut flo, mut fhi) = (deflated(lo), deflated(hi));
    // a residual at the round-off level of η over the whole bracket carries
    // no information on γ, as happens for very short final steps
    let noise = ROUNDOFF_FACTOR * f64::EPSILON * eta_old.abs().max(1.0);
    if flo.abs().max(fhi.abs()) <= noise && r1.abs() <= noise {
        return Ok(Relaxed {
            gamma: 1.0,
            residual: r1.abs(),
        });
    }
    while !(flo.is_finite() && fhi.is_finite() && flo * fhi <= 0.0) {
        if expansions == cfg.max_expand {
            return Err(RelaxationError::BracketFailure { lo, hi });
        }
        expansions += 1;
        lo *= 0.5;
        hi = 1.0 + 2.0 * (hi - 1.0);
        flo = deflated(lo);
        fhi = deflated(hi);
    }

    let gamma = brent(&mut deflated, lo, hi, flo, fhi, cfg.gamma_tol, 200)?;
    if gamma < cfg.min_gamma {
        return Err(RelaxationError::SpuriousRoot(gamma));
    }
    let achieved = residual(gamma).abs();
    if achieved > tol {
        return Err(RelaxationError::ResidualTooLarge {
            gamma,
            residual: achieved,
            tol,
        });
    }
    Ok(Relaxed {
        gamma,
        residual: achieved,
    })
}

/// Brent's method (inverse quadratic interpolation safeguarded by bisection)
/// on a bracket with `fa * fb <= 0`.
fn brent(
    f: &mut impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64, RelaxationError> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(RelaxationError::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(u: &[f64]) -> f64 {
        u.iter().map(|x| x * x).sum()
    }

    #[test]
    fn quadratic_entropy_closed_form() {
        let r = solve_gamma(&[1.0, 0.0], &[0.9, 0.5], sq, &RelaxationConfig::default()).unwrap();
        assert!((r.gamma - 10.0 / 13.0).abs() < 1e-14, "{}", r.gamma);
        assert!(r.residual <= 1e-13);
    }

    #[test]
    fn already_conservative_update_gives_one() {
        let (s, c) = 0.3f64.sin_cos();
        let r = solve_gamma(&[1.0, 0.0], &[c, s], sq, &RelaxationConfig::default()).unwrap();
        assert!((r.gamma - 1.0).abs() < 1e-14);
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn exponential_entropy_near_one() {
        let eta = |u: &[f64]| u[0].exp() + u[1].exp();
        let cfg = RelaxationConfig::default();
        for h in [1e-1, 1e-2, 1e-3] {
            let new = [h, -h - h * h];
            let r = solve_gamma(&[0.0, 0.0], &new, eta, &cfg).unwrap();
            let oracle = bisect(|g| ((g * new[0]).exp() + (g * new[1]).exp() - 2.0) / g, 0.5, 1.5);
            // r'(γ) is O(h²), so γ is only determined to about eps / h²
            assert!((r.gamma - oracle).abs() < 1e-14 / (h * h), "h={h}: {} vs {oracle}", r.gamma);
            assert!((r.gamma - 1.0).abs() < 2.0 * h);
            assert!(r.residual <= cfg.residual_bound(2.0));
        }
    }

    #[test]
    fn tangent_update_of_convex_entropy_has_only_trivial_root() {
        // along (h, -h) the residual is 2(cosh(γh) - 1) >= 0
        let eta = |u: &[f64]| u[0].exp() + u[1].exp();
        let err = solve_gamma(&[0.0, 0.0], &[1e-3, -1e-3], eta, &RelaxationConfig::default()).unwrap_err();
        assert!(matches!(err, RelaxationError::BracketFailure { .. }));
    }

    #[test]
    fn round_off_sized_update_keeps_gamma_one() {
        let (s, c) = 1e-9f64.sin_cos();
        let r = solve_gamma(&[1.0, 0.0], &[c, s], sq, &RelaxationConfig::default()).unwrap();
        assert_eq!(r.gamma, 1.0);
    }

    #[test]
    fn zero_direction_is_trivial() {
        let r = solve_gamma(&[1.0, 2.0], &[1.0, 2.0], sq, &RelaxationConfig::default()).unwrap();
        assert_eq!(r.gamma, 1.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn linear_entropy_has_no_bracket() {
        let eta = |u: &[f64]| u[0] + u[1];
        let err = solve_gamma(&[0.0, 0.0], &[0.1, 0.2], eta, &RelaxationConfig::default()).unwrap_err();
        assert!(matches!(err, RelaxationError::BracketFailure { .. }));
    }

    #[test]
    fn brent_finds_cubic_root() {
        let mut f = |x: f64| x * x * x - 2.0;
        let root = brent(&mut f, 0.0, 2.0, -2.0, 6.0, 1e-15, 100).unwrap();
        assert!((root - 2f64.cbrt()).abs() < 1e-14);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matches_quadratic_root(
                x in -2.0f64..2.0,
                y in -2.0f64..2.0,
                tangential in -0.3f64..0.3,
                target in 0.6f64..1.4,
            ) {
                let u = [x, y];
                let uu = x * x + y * y;
                prop_assume!(uu > 0.1);
                // d = t·u⊥ + α·u has the nonzero root -2α|u|² / |d|² = target
                let perp = tangential * tangential * uu;
                let disc = uu * uu - target * target * uu * perp;
                prop_assume!(disc > 0.0);
                let alpha = (-uu + disc.sqrt()) / (target * uu);
                prop_assume!(alpha.abs() > 1e-4);
                let v = [x - tangential * y + alpha * x, y + tangential * x + alpha * y];
                let sq = |w: &[f64]| w[0] * w[0] + w[1] * w[1];
                let cfg = RelaxationConfig::default();
                let r = solve_gamma(&u, &v, sq, &cfg).unwrap();
                let d = [v[0] - x, v[1] - y];
                let exact = -2.0 * (x * d[0] + y * d[1]) / (d[0] * d[0] + d[1] * d[1]);
                prop_assert!((exact - target).abs() < 1e-9);
                prop_assert!((r.gamma - exact).abs() <= 1e-12 / alpha.abs(), "{} vs {}", r.gamma, exact);
                prop_assert!(r.residual <= cfg.residual_bound(sq(&u)));
            }
        }
    }
}
