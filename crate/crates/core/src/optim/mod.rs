//! Two-stage training optimizers: Adam with a warmup-cosine schedule,
//! gradient clipping and plateau stopping, followed by L-BFGS refinement
//! with a strong-Wolfe line search.

mod adam;
mod lbfgs;

pub use adam::{adam_run, AdamConfig, AdamOutcome, AdamStop};
pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsOutcome, LbfgsStatus, LineSearch};

use crate::net::ParamVector;

/// Objective callback shared by both stages: parameters in, loss value and
/// gradient (same layout) out.
pub trait LossAndGrad: FnMut(&ParamVector) -> crate::Result<(f64, ParamVector)> {}
impl<T: FnMut(&ParamVector) -> crate::Result<(f64, ParamVector)>> LossAndGrad for T {}

/// Scale the gradient down to `clip_norm` when its Euclidean norm exceeds
/// it; otherwise return it unchanged.
pub fn clip_gradient(g: &ParamVector, clip_norm: f64) -> ParamVector {
    let norm = crate::linalg::norm2(&g.values);
    if norm <= clip_norm || norm == 0.0 {
        g.clone()
    } else {
        let scale = clip_norm / norm;
        ParamVector { values: g.values.iter().map(|v| v * scale).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_below_threshold_is_identity() {
        let g = ParamVector { values: vec![3.0, 4.0] };
        let c = clip_gradient(&g, 10.0);
        assert_eq!(c.values, vec![3.0, 4.0]);
    }

    #[test]
    fn clip_scales_to_unit_norm() {
        // norm 5 scaled down to 1
        let g = ParamVector { values: vec![3.0, 4.0] };
        let c = clip_gradient(&g, 1.0);
        assert!((c.values[0] - 0.6).abs() < 1e-15);
        assert!((c.values[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_zero_vector_is_zero() {
        let g = ParamVector { values: vec![0.0, 0.0, 0.0] };
        let c = clip_gradient(&g, 0.5);
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    proptest! {
        // ‖clip(g, c)‖ ≤ min(‖g‖, c)
        #[test]
        fn prop_clip_never_increases_norm(
            vals in proptest::collection::vec(-50.0f64..50.0, 1..8),
            clip in 0.01f64..20.0,
        ) {
            let g = ParamVector { values: vals };
            let before = crate::linalg::norm2(&g.values);
            let after = crate::linalg::norm2(&clip_gradient(&g, clip).values);
            prop_assert!(after <= before + 1e-12);
            prop_assert!(after <= clip + 1e-12);
        }
    }
}
