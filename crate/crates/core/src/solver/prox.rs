/// Proximal operator of `kappa * |x|`: shrinks `x` toward zero by `kappa`.
pub fn soft_threshold(x: f64, kappa: f64) -> f64 {
    debug_assert!(kappa > 0.0);
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

pub fn soft_threshold_in_place(values: &mut [f64], kappa: f64) {
    for v in values {
        *v = soft_threshold(*v, kappa);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branches() {
        assert_eq!(soft_threshold(1.0, 0.5), 0.5);
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-1.0, 0.5), -0.5);
        assert_eq!(soft_threshold(0.5, 0.5), 0.0);
        assert_eq!(soft_threshold(-0.5, 0.5), 0.0);
    }

    proptest! {
        #[test]
        fn shrinkage(x in -1e3f64..1e3, kappa in 1e-6f64..1e2) {
            let s = soft_threshold(x, kappa);
            prop_assert!((s.abs() - (x.abs() - kappa).max(0.0)).abs() <= 1e-12 * x.abs().max(1.0));
            prop_assert!(s == 0.0 || s.signum() == x.signum());
            prop_assert_eq!(soft_threshold(-x, kappa), -s);
        }
    }
}
