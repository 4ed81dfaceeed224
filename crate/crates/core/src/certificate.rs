//! Runtime checks of the structural guarantees and the constants of the
//! approximation bounds.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Record of every invariant evaluated during a run. A failed check aborts
/// the run with [`Error::Internal`], so a finished certificate only holds
/// passing checks together with how many times each was evaluated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub checks: BTreeMap<String, usize>,
}

impl Certificate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn require(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) -> Result<()> {
        if !ok {
            return Err(Error::internal(name, detail()));
        }
        *self.checks.entry(name.to_string()).or_insert(0) += 1;
        Ok(())
    }

    /// Records a check that held vacuously (nothing to evaluate).
    pub fn note(&mut self, name: &str) {
        self.checks.entry(name.to_string()).or_insert(0);
    }

    pub fn merge(&mut self, other: &Certificate) {
        for (k, v) in &other.checks {
            *self.checks.entry(k.clone()).or_insert(0) += v;
        }
    }
}

fn r(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Radius factor for the `r`-th bundle of a dangerous client:
/// `(3g^2 - g + 2) / (g (g - 1))`.
pub fn dangerous_factor(gamma: &Rational) -> Rational {
    let g = gamma;
    (r(3) * g * g - g + r(2)) / (g * &(g - r(1)))
}

/// Radius factor for the `r`-th bundle of a safe client:
/// `(7g^2 - 2g + 3) / (g - 1)^2`.
pub fn safe_factor(gamma: &Rational) -> Rational {
    let g = gamma;
    let gm1 = g - r(1);
    (r(7) * g * g - r(2) * g + r(3)) / (&gm1 * &gm1)
}

/// Certified ratio against the fractional optimum for the matroid variant:
/// `max{7 + (3g^2-g+2)/(g-1), 3 + (21g^3-6g^2+9g)/(g-1)^2}`.
pub fn matroid_bound(gamma: &Rational) -> Rational {
    let g = gamma;
    let gm1 = g - r(1);
    let first = r(7) + (r(3) * g * g - g + r(2)) / gm1.clone();
    let second = r(3) + (r(21) * g * g * g - r(6) * g * g + r(9) * g) / (&gm1 * &gm1);
    first.max(second)
}

/// Certified ratio for the knapsack variant:
/// `B(g) + (1 + eps) * dangerous_factor(g) + (1 + eps)`.
pub fn knapsack_bound(gamma: &Rational, epsilon: &Rational) -> Rational {
    let onep = r(1) + epsilon;
    matroid_bound(gamma) + &onep * &dangerous_factor(gamma) + onep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn constants_at_gamma_three() {
        let g = q(3, 1);
        assert_eq!(matroid_bound(&g), q(138, 1));
        assert_eq!(dangerous_factor(&g), q(13, 3));
        assert_eq!(safe_factor(&g), q(15, 1));
        assert_eq!(knapsack_bound(&g, &q(0, 1)), q(138, 1) + q(13, 3) + q(1, 1));
        let bk = knapsack_bound(&g, &q(0, 1)).to_f64();
        assert!((bk - 143.333).abs() < 1e-3);
    }

    #[test]
    fn safe_term_dominates_near_three() {
        let g = q(31, 10);
        let gm1 = &g - &q(1, 1);
        let first = q(7, 1) + (q(3, 1) * &g * &g - &g + q(2, 1)) / gm1;
        assert!(first < q(21, 1));
        // slightly above 138 at delta = 1/10
        assert!(matroid_bound(&g) > q(138, 1) && matroid_bound(&g) < q(139, 1));
    }

    #[test]
    fn failed_check_names_itself() {
        let mut c = Certificate::new();
        c.require("ok", true, String::new).unwrap();
        let err = c.require("broken", false, || "detail".into()).unwrap_err();
        assert!(err.to_string().contains("broken"));
        assert_eq!(c.checks["ok"], 1);
        assert!(!c.checks.contains_key("broken"));
    }
}
