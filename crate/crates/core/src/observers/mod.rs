//! The adaptive observer schemes: augmented error, high-order tuner and the
//! state-dependent augmented-error scheme, each with an optional dead-zone
//! robustification for noisy channels.
//!
//! An observer is a pure map from its own state segment and the received
//! signal `y_r` to state derivatives and measurable signals; the scenario
//! runner owns the joint state vector and steps everything together.

mod ae;
mod hot;
mod sd;

pub use ae::AeObserver;
pub use hot::{HotObserver, Tuner, TunerOutput};
pub use sd::{GainSchedule, SdFilterForm, SdObserver};

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::plant::PlantStructure;

/// Instantaneous measurable signals of an observer.
#[derive(Debug, Clone)]
pub struct ObserverSignals {
    pub y_hat: f64,
    /// Raw output error `y_r - y_hat`.
    pub e: f64,
    /// Augmented error driving the adaptation (equals `e` where no
    /// augmentation applies).
    pub e_aug: f64,
    pub x_hat: DVector<f64>,
    pub theta_hat: DVector<f64>,
    /// Right-hand side of the adaptation law at this instant.
    pub theta_hat_dot: DVector<f64>,
    /// Filtered regressor used by the adaptation law.
    pub omega: DVector<f64>,
    /// Adjustable feedback of the high-order-tuner scheme, if any.
    pub nu: Option<f64>,
}

/// Common surface of the observer schemes.
pub trait AdaptiveObserver {
    /// Receiver-side model of the master system.
    fn structure(&self) -> &PlantStructure;

    fn state_dim(&self) -> usize;

    fn initial_state(&self) -> DVector<f64>;

    /// State derivative given the received signal.
    fn derivative(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> DVector<f64>;

    fn signals(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> ObserverSignals;

    /// Closed error matrix: `F = A - k c^T`, or `G(y_r)` for the
    /// state-dependent scheme.
    fn error_matrix(&self, y_r: f64) -> DMatrix<f64>;

    /// Injection gain in use at this output value.
    fn injection_gain(&self, y_r: f64) -> DVector<f64>;

    /// Adaptation gain, for schemes that have one.
    fn adaptation_gain(&self) -> Option<f64> {
        None
    }

    /// The auxiliary error `delta = eps + eta - Omega (theta - theta_hat)`
    /// of the state-dependent scheme; `None` for schemes without it.
    fn aux_error(
        &self,
        _state: DVectorView<f64>,
        _x_true: &DVector<f64>,
        _theta_true: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        None
    }
}

/// Dead-zone leakage coefficient: 0 below `theta_star`, ramping linearly to
/// 1 at `2 theta_star`, and 1 beyond.
pub fn dead_zone_alpha(theta_hat: &DVector<f64>, theta_star: f64) -> f64 {
    debug_assert!(theta_star > 0.0);
    let norm = theta_hat.norm();
    if norm < theta_star {
        0.0
    } else if norm <= 2.0 * theta_star {
        norm / theta_star - 1.0
    } else {
        1.0
    }
}

/// Augmented error `e + H(p)[phi^T theta_hat] - omega^T theta_hat`; the
/// filtered term arrives as `aug_filter_output`.
pub fn augmented_error(
    e_raw: f64,
    aug_filter_output: f64,
    omega: &DVector<f64>,
    theta_hat: &DVector<f64>,
) -> f64 {
    e_raw + aug_filter_output - omega.dot(theta_hat)
}

/// Adaptation right-hand side `gamma omega e_aug - alpha(theta_hat)
/// theta_hat`; the leakage term applies only in robust mode.
pub fn adaptation_rhs(
    gamma: f64,
    omega: &DVector<f64>,
    e_aug: f64,
    theta_hat: &DVector<f64>,
    theta_star: Option<f64>,
) -> DVector<f64> {
    let mut rhs = omega * (gamma * e_aug);
    if let Some(star) = theta_star {
        let alpha = dead_zone_alpha(theta_hat, star);
        if alpha != 0.0 {
            rhs -= theta_hat * alpha;
        }
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dead_zone_branch_values() {
        let star = 2.0;
        let at = |norm: f64| dead_zone_alpha(&DVector::from_vec(vec![norm]), star);
        assert_eq!(at(0.5 * star), 0.0);
        assert_relative_eq!(at(1.5 * star), 0.5, epsilon = 1e-14);
        assert_eq!(at(3.0 * star), 1.0);
    }

    #[test]
    fn augmented_error_vanishing_corrections() {
        let omega = DVector::from_vec(vec![1.5, -0.3]);
        let zero_theta = DVector::zeros(2);
        assert_eq!(augmented_error(0.7, 0.4, &omega, &zero_theta), 0.7 + 0.4);
        // theta_hat = 0 kills the omega term only; both vanish when the
        // filtered term is zero as well.
        assert_eq!(augmented_error(0.7, 0.0, &omega, &zero_theta), 0.7);
    }

    #[test]
    fn adaptation_rhs_hand_values() {
        let omega = DVector::from_vec(vec![2.0]);
        let theta_hat = DVector::from_vec(vec![0.0]);
        let rhs = adaptation_rhs(0.45, &omega, 0.1, &theta_hat, None);
        assert_relative_eq!(rhs[0], 0.09, epsilon = 1e-14);

        // Zero augmented error, non-robust: no motion.
        let rhs = adaptation_rhs(1.0, &omega, 0.0, &theta_hat, None);
        assert_eq!(rhs[0], 0.0);

        // Pure leakage far outside the dead zone.
        let theta_hat = DVector::from_vec(vec![3.0]);
        let rhs = adaptation_rhs(1.0, &DVector::zeros(1), 0.5, &theta_hat, Some(1.0));
        assert_relative_eq!(rhs[0], -3.0, epsilon = 1e-14);
    }
}
