//! Physical agent: clips flow proposals onto the feasible set, alighting
//! before boarding, and reports the clipped mass as a violation residual.

use crate::error::{Error, Result};
use crate::model::{Capacity, StepTrace};

/// Threshold above which a residual counts as a violation.
pub const RESIDUAL_EPS: f64 = 1e-9;

/// Result of projecting one stop's proposals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub a_star: f64,
    pub b_star: f64,
    pub l_phys: f64,
    pub e_phys: f64,
}

pub fn project(l_prev: f64, b_hat: f64, a_hat: f64, capacity: Capacity) -> Result<Projection> {
    let c = capacity.get();
    if !(0.0..=c).contains(&l_prev) {
        return Err(Error::contract(format!("previous load {l_prev} outside [0, {c}]")));
    }
    if !(b_hat >= 0.0 && a_hat >= 0.0) || !b_hat.is_finite() || !a_hat.is_finite() {
        return Err(Error::contract(format!(
            "proposals must be finite and non-negative, got b={b_hat} a={a_hat}"
        )));
    }
    let a_star = a_hat.min(l_prev);
    let after_alight = l_prev - a_star;
    let b_star = b_hat.min(c - after_alight);
    // Guard against rounding dust pushing the sum a hair past C.
    let l_phys = (after_alight + b_star).clamp(0.0, c);
    let e_phys = (a_hat - a_star).max(0.0) + (b_hat - b_star).max(0.0);
    Ok(Projection { a_star, b_star, l_phys, e_phys })
}

/// Fraction of stops whose residual exceeds [`RESIDUAL_EPS`].
pub fn e_phys_rate(traces: &[StepTrace]) -> Result<f64> {
    residual_rate(traces.iter().map(|t| t.e_phys), traces.len())
}

pub(crate) fn residual_rate(residuals: impl Iterator<Item = f64>, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("residual rate of an empty sequence"));
    }
    Ok(residuals.filter(|&e| e > RESIDUAL_EPS).count() as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: Capacity = Capacity::DEFAULT;

    #[test]
    fn over_alighting() {
        let p = project(5.0, 10.0, 8.0, C).unwrap();
        assert_eq!(p, Projection { a_star: 5.0, b_star: 10.0, l_phys: 10.0, e_phys: 3.0 });
    }

    #[test]
    fn denied_boarding() {
        let p = project(78.0, 10.0, 0.0, C).unwrap();
        assert_eq!(p, Projection { a_star: 0.0, b_star: 2.0, l_phys: 80.0, e_phys: 8.0 });
    }

    #[test]
    fn feasible_passthrough() {
        let p = project(10.0, 6.0, 4.0, C).unwrap();
        assert_eq!(p, Projection { a_star: 4.0, b_star: 6.0, l_phys: 12.0, e_phys: 0.0 });
    }

    #[test]
    fn rejects_out_of_range_state() {
        assert!(matches!(project(-0.1, 1.0, 1.0, C), Err(Error::Contract(_))));
        assert!(matches!(project(80.5, 1.0, 1.0, C), Err(Error::Contract(_))));
        assert!(project(10.0, -1.0, 0.0, C).is_err());
    }

    fn trace_with(e: f64) -> StepTrace {
        StepTrace {
            b_hat: 0.0,
            a_hat: 0.0,
            a_star: 0.0,
            b_star: 0.0,
            l_phys: 0.0,
            e_phys: e,
            y_load: None,
            disagreement: None,
            alpha: None,
            l_fused: 0.0,
        }
    }

    #[test]
    fn rate_examples() {
        let t: Vec<_> = [0.0, 3.0, 0.0, 8.0].iter().map(|&e| trace_with(e)).collect();
        assert_eq!(e_phys_rate(&t).unwrap(), 0.5);
        let z: Vec<_> = (0..5).map(|_| trace_with(0.0)).collect();
        assert_eq!(e_phys_rate(&z).unwrap(), 0.0);
        assert_eq!(e_phys_rate(&[trace_with(1e-12)]).unwrap(), 0.0);
        assert!(e_phys_rate(&[]).is_err());
    }

    proptest! {
        #[test]
        fn reprojecting_clipped_flows_is_idempotent(
            l_prev in 0.0f64..=80.0, b in 0.0f64..240.0, a in 0.0f64..240.0
        ) {
            let p = project(l_prev, b, a, C).unwrap();
            let q = project(l_prev, p.b_star, p.a_star, C).unwrap();
            prop_assert!((q.l_phys - p.l_phys).abs() < 1e-12);
            prop_assert!(q.e_phys.abs() < 1e-12);
        }

        #[test]
        fn monotone_in_flows(
            l_prev in 0.0f64..=80.0, b in 0.0f64..240.0, a in 0.0f64..240.0, db in 0.0f64..50.0
        ) {
            let base = project(l_prev, b, a, C).unwrap().l_phys;
            prop_assert!(project(l_prev, b + db, a, C).unwrap().l_phys >= base);
            prop_assert!(project(l_prev, b, a + db, C).unwrap().l_phys <= base);
        }

        #[test]
        fn residual_decomposes(
            l_prev in 0.0f64..=80.0, b in 0.0f64..240.0, a in 0.0f64..240.0
        ) {
            let p = project(l_prev, b, a, C).unwrap();
            prop_assert!(p.a_star <= a && p.b_star <= b);
            prop_assert!((p.e_phys - ((a - p.a_star) + (b - p.b_star))).abs() < 1e-9);
        }
    }
}
