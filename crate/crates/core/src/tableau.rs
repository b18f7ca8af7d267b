//! Butcher tableaux of explicit Runge-Kutta methods and embedded pairs.
//!
//! Coefficients are written as exact rationals and rounded once to `f64` at
//! construction. The embedded weights carry one more entry than the stage
//! count; the extra weight multiplies `f(u^{n+1})`, the derivative at the new
//! main solution. For FSAL pairs the last stage coincides with that
//! evaluation, so its own slot in `b` and `b_hat` is zero and all of its
//! weight sits in the trailing entry.

mod order_conditions;

pub use order_conditions::{rooted_trees, RootedTree, MAX_VERIFIED_ORDER};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableauError {
    #[error("order conditions are only tabulated through order {max}, requested {requested}")]
    OrderTooHigh { requested: u32, max: u32 },
    #[error("tableau `{0}` has no embedded weights")]
    NoEmbedded(String),
    #[error("unknown method `{0}` (expected one of bs3, dp5, rk4)")]
    UnknownMethod(String),
}

/// Which weight vector an order-condition check runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSet {
    Main,
    Embedded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    name: &'static str,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    b_hat: Option<Vec<f64>>,
    c: Vec<f64>,
    order: u32,
    embedded_order: Option<u32>,
    fsal: bool,
}

fn q(num: i64, den: i64) -> f64 {
    num as f64 / den as f64
}

fn rows(rows: &[&[(i64, i64)]]) -> Vec<Vec<f64>> {
    let s = rows.len();
    rows.iter()
        .map(|row| {
            let mut full = vec![0.0; s];
            for (j, &(n, d)) in row.iter().enumerate() {
                full[j] = q(n, d);
            }
            full
        })
        .collect()
}

fn weights(w: &[(i64, i64)]) -> Vec<f64> {
    w.iter().map(|&(n, d)| q(n, d)).collect()
}

impl Tableau {
    /// Bogacki-Shampine 3(2) FSAL pair.
    pub fn bs3() -> Self {
        let a = rows(&[
            &[],
            &[(1, 2)],
            &[(0, 1), (3, 4)],
            &[(2, 9), (1, 3), (4, 9)],
        ]);
        Tableau {
            name: "bs3",
            a,
            b: weights(&[(2, 9), (1, 3), (4, 9), (0, 1)]),
            b_hat: Some(weights(&[(7, 24), (1, 4), (1, 3), (0, 1), (1, 8)])),
            c: weights(&[(0, 1), (1, 2), (3, 4), (1, 1)]),
            order: 3,
            embedded_order: Some(2),
            fsal: true,
        }
    }

    /// Dormand-Prince 5(4) FSAL pair.
    pub fn dp5() -> Self {
        let a = rows(&[
            &[],
            &[(1, 5)],
            &[(3, 40), (9, 40)],
            &[(44, 45), (-56, 15), (32, 9)],
            &[(19372, 6561), (-25360, 2187), (64448, 6561), (-212, 729)],
            &[(9017, 3168), (-355, 33), (46732, 5247), (49, 176), (-5103, 18656)],
            &[(35, 384), (0, 1), (500, 1113), (125, 192), (-2187, 6784), (11, 84)],
        ]);
        Tableau {
            name: "dp5",
            a,
            b: weights(&[
                (35, 384),
                (0, 1),
                (500, 1113),
                (125, 192),
                (-2187, 6784),
                (11, 84),
                (0, 1),
            ]),
            b_hat: Some(weights(&[
                (5179, 57600),
                (0, 1),
                (7571, 16695),
                (393, 640),
                (-92097, 339200),
                (187, 2100),
                (0, 1),
                (1, 40),
            ])),
            c: weights(&[(0, 1), (1, 5), (3, 10), (4, 5), (8, 9), (1, 1), (1, 1)]),
            order: 5,
            embedded_order: Some(4),
            fsal: true,
        }
    }

    /// Classical fourth-order method. Fixed-step use only.
    pub fn rk4() -> Self {
        let a = rows(&[&[], &[(1, 2)], &[(0, 1), (1, 2)], &[(0, 1), (0, 1), (1, 1)]]);
        Tableau {
            name: "rk4",
            a,
            b: weights(&[(1, 6), (1, 3), (1, 3), (1, 6)]),
            b_hat: None,
            c: weights(&[(0, 1), (1, 2), (1, 2), (1, 1)]),
            order: 4,
            embedded_order: None,
            fsal: false,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, TableauError> {
        match name.to_ascii_lowercase().as_str() {
            "bs3" => Ok(Self::bs3()),
            "dp5" => Ok(Self::dp5()),
            "rk4" => Ok(Self::rk4()),
            other => Err(TableauError::UnknownMethod(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Number of stages `s`, counting the FSAL stage of FSAL pairs.
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Embedded weights, `s + 1` entries.
    pub fn b_hat(&self) -> Option<&[f64]> {
        self.b_hat.as_deref()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn embedded_order(&self) -> Option<u32> {
        self.embedded_order
    }

    pub fn is_fsal(&self) -> bool {
        self.fsal
    }

    /// Stages that must be evaluated to form the main update. For FSAL pairs
    /// the final stage is `f(u^{n+1})` and is handled separately.
    pub fn main_stage_count(&self) -> usize {
        if self.fsal {
            self.stages() - 1
        } else {
            self.stages()
        }
    }

    /// Weight of the `f(u^{n+1})` term in the embedded update.
    pub fn fsal_weight(&self) -> f64 {
        self.b_hat.as_ref().map_or(0.0, |w| w[self.stages()])
    }

    /// Checks every rooted-tree order condition up to `order` within `1e-13`.
    ///
    /// The embedded weights are checked against the tableau extended by the
    /// stage `f(u^{n+1})`, whose coefficient row equals `b`.
    pub fn verify_order_conditions(&self, order: u32, set: WeightSet) -> Result<bool, TableauError> {
        if order > MAX_VERIFIED_ORDER {
            return Err(TableauError::OrderTooHigh {
                requested: order,
                max: MAX_VERIFIED_ORDER,
            });
        }
        match set {
            WeightSet::Main => Ok(order_conditions::satisfies(&self.a, &self.b, order, 1e-13)),
            WeightSet::Embedded => {
                let b_hat = self
                    .b_hat
                    .as_ref()
                    .ok_or_else(|| TableauError::NoEmbedded(self.name.to_string()))?;
                let mut a = self.a.clone();
                for row in &mut a {
                    row.push(0.0);
                }
                let mut last = self.b.clone();
                last.push(0.0);
                a.push(last);
                Ok(order_conditions::satisfies(&a, b_hat, order, 1e-13))
            }
        }
    }
}

/// Free-function form of [`Tableau::verify_order_conditions`] on the main weights.
pub fn verify_order_conditions(t: &Tableau, order: u32) -> Result<bool, TableauError> {
    t.verify_order_conditions(order, WeightSet::Main)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<Tableau> {
        vec![Tableau::bs3(), Tableau::dp5(), Tableau::rk4()]
    }

    #[test]
    fn stage_counts() {
        assert_eq!(Tableau::bs3().stages(), 4);
        assert_eq!(Tableau::dp5().stages(), 7);
        assert_eq!(Tableau::rk4().stages(), 4);
    }

    #[test]
    fn structural_invariants() {
        for t in all() {
            let s = t.stages();
            assert_eq!(t.a().len(), s);
            for (i, row) in t.a().iter().enumerate() {
                assert_eq!(row.len(), s);
                for (j, &aij) in row.iter().enumerate() {
                    if j >= i {
                        assert_eq!(aij, 0.0, "{} a[{i}][{j}]", t.name());
                    }
                }
                let sum: f64 = row.iter().sum();
                assert!((sum - t.c()[i]).abs() < 1e-15, "{} row {i}", t.name());
            }
            let sb: f64 = t.b().iter().sum();
            assert!((sb - 1.0).abs() < 1e-15);
            if let Some(bh) = t.b_hat() {
                assert_eq!(bh.len(), s + 1);
                let sbh: f64 = bh.iter().sum();
                assert!((sbh - 1.0).abs() < 1e-15, "{}", t.name());
            }
        }
    }

    #[test]
    fn fsal_structure() {
        for t in [Tableau::bs3(), Tableau::dp5()] {
            let s = t.stages();
            assert!(t.is_fsal());
            assert_eq!(t.c()[0], 0.0);
            assert_eq!(t.a()[s - 1][..s - 1], t.b()[..s - 1]);
            assert_eq!(t.b()[s - 1], 0.0);
            assert_eq!(t.b_hat().unwrap()[s - 1], 0.0);
            assert!(t.fsal_weight() != 0.0);
        }
        assert!(!Tableau::rk4().is_fsal());
        assert_eq!(Tableau::rk4().fsal_weight(), 0.0);
    }

    #[test]
    fn rk4_coefficients() {
        let t = Tableau::rk4();
        assert_eq!(t.b(), &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]);
        assert_eq!(t.c(), &[0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn declared_orders_hold_and_next_fails() {
        for t in all() {
            let p = t.order();
            assert!(verify_order_conditions(&t, p).unwrap(), "{}", t.name());
            if p < MAX_VERIFIED_ORDER {
                assert!(!verify_order_conditions(&t, p + 1).unwrap(), "{}", t.name());
            }
            if let Some(ph) = t.embedded_order() {
                assert!(t.verify_order_conditions(ph, WeightSet::Embedded).unwrap());
                assert!(!t.verify_order_conditions(ph + 1, WeightSet::Embedded).unwrap());
            }
        }
    }

    #[test]
    fn order_above_five_is_rejected() {
        assert_eq!(
            verify_order_conditions(&Tableau::dp5(), 6),
            Err(TableauError::OrderTooHigh { requested: 6, max: 5 })
        );
        assert!(matches!(
            Tableau::rk4().verify_order_conditions(2, WeightSet::Embedded),
            Err(TableauError::NoEmbedded(_))
        ));
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(Tableau::by_name("DP5").unwrap().name(), "dp5");
        assert!(Tableau::by_name("rk45").is_err());
    }
}
