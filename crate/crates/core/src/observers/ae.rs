//! Augmented-error adaptive observer for constant-matrix master systems.
//!
//! The observer copies the plant with the parameter estimate and output
//! injection, filters the regressor channel-wise through
//! `H(p) = c^T (pI - F)^{-1} b` with `F = A - k c^T`, and corrects the raw
//! output error with the swap terms so that gradient adaptation works at any
//! relative degree. In robust mode the adaptation carries the dead-zone
//! leakage.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::filters::LtiFilter;
use crate::plant::PlantStructure;

use super::{adaptation_rhs, augmented_error, AdaptiveObserver, ObserverSignals};

#[derive(Debug, Clone)]
pub struct AeObserver {
    structure: PlantStructure,
    k: DVector<f64>,
    gamma: f64,
    f: DMatrix<f64>,
    regressor_filter: LtiFilter,
    augmentation_filter: LtiFilter,
    theta_star: Option<f64>,
    x_hat0: DVector<f64>,
    theta_hat0: DVector<f64>,
}

impl AeObserver {
    /// Builds the observer; fails if the plant matrix is state-dependent,
    /// `A - k c^T` is not Hurwitz, or the gains are out of range.
    pub fn new(
        structure: PlantStructure,
        k: DVector<f64>,
        gamma: f64,
        theta_star: Option<f64>,
    ) -> Result<Self> {
        let n = structure.n();
        let m = structure.m();
        let a = structure
            .a
            .constant()
            .ok_or_else(|| {
                Error::Validation(
                    "the augmented-error scheme needs a constant system matrix; \
                     use the state-dependent scheme instead"
                        .into(),
                )
            })?
            .clone();
        if k.len() != n {
            return Err(Error::Dimension(format!(
                "injection gain has length {}, expected {n}",
                k.len()
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::Validation(format!(
                "adaptation gain must be positive, got {gamma}"
            )));
        }
        if let Some(star) = theta_star {
            if !(star > 0.0) {
                return Err(Error::Validation(format!(
                    "theta_star must be positive, got {star}"
                )));
            }
        }
        let f = &a - &k * structure.c.transpose();
        // Both filters share the (F, b, c) realization; construction also
        // performs the Hurwitz check.
        let regressor_filter = LtiFilter::new(f.clone(), structure.b.clone(), structure.c.clone(), m)?;
        let augmentation_filter =
            LtiFilter::new(f.clone(), structure.b.clone(), structure.c.clone(), 1)?;
        Ok(Self {
            x_hat0: DVector::zeros(n),
            theta_hat0: DVector::zeros(m),
            structure,
            k,
            gamma,
            f,
            regressor_filter,
            augmentation_filter,
            theta_star,
        })
    }

    pub fn with_initial(mut self, x_hat0: DVector<f64>, theta_hat0: DVector<f64>) -> Result<Self> {
        if x_hat0.len() != self.structure.n() || theta_hat0.len() != self.structure.m() {
            return Err(Error::Dimension("initial state sizes do not match".into()));
        }
        self.x_hat0 = x_hat0;
        self.theta_hat0 = theta_hat0;
        Ok(self)
    }

    pub fn f_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn theta_star(&self) -> Option<f64> {
        self.theta_star
    }

    pub fn regressor_filter(&self) -> &LtiFilter {
        &self.regressor_filter
    }

    fn n(&self) -> usize {
        self.structure.n()
    }

    fn m(&self) -> usize {
        self.structure.m()
    }

    // Layout: [x_hat (n) | theta_hat (m) | regressor filter (n m) | augmentation filter (n)]
    fn off_theta(&self) -> usize {
        self.n()
    }

    fn off_omega(&self) -> usize {
        self.n() + self.m()
    }

    fn off_aug(&self) -> usize {
        self.off_omega() + self.n() * self.m()
    }

    fn compute(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> (ObserverSignals, DVector<f64>) {
        let n = self.n();
        let m = self.m();
        let x_hat = state.rows(0, n);
        let theta_hat = DVector::from(state.rows(self.off_theta(), m));
        let omega_state = state.rows(self.off_omega(), n * m);
        let aug_state = state.rows(self.off_aug(), n);

        let phibar = self.structure.phi.eval(t, y_r);
        let y_hat = self.structure.c.dot(&x_hat);
        let e = y_r - y_hat;
        let omega = self.regressor_filter.outputs(omega_state);
        let aug_out = self.augmentation_filter.outputs(aug_state)[0];
        let e_aug = augmented_error(e, aug_out, &omega, &theta_hat);
        let theta_hat_dot = adaptation_rhs(self.gamma, &omega, e_aug, &theta_hat, self.theta_star);

        let regressor_term = phibar.dot(&theta_hat);
        let x_hat_dot = self.structure.a.constant().unwrap() * x_hat
            + self.structure.phi0.eval(t, y_r)
            + &self.structure.b * regressor_term
            + &self.k * e;

        let mut d = DVector::zeros(self.state_dim());
        d.rows_mut(0, n).copy_from(&x_hat_dot);
        d.rows_mut(self.off_theta(), m).copy_from(&theta_hat_dot);
        d.rows_mut(self.off_omega(), n * m)
            .copy_from(&self.regressor_filter.derivative(omega_state, &phibar));
        d.rows_mut(self.off_aug(), n).copy_from(
            &self
                .augmentation_filter
                .derivative(aug_state, &DVector::from_vec(vec![regressor_term])),
        );

        let signals = ObserverSignals {
            y_hat,
            e,
            e_aug,
            x_hat: DVector::from(x_hat),
            theta_hat,
            theta_hat_dot,
            omega,
            nu: None,
        };
        (signals, d)
    }
}

impl AdaptiveObserver for AeObserver {
    fn structure(&self) -> &PlantStructure {
        &self.structure
    }

    fn state_dim(&self) -> usize {
        let (n, m) = (self.n(), self.m());
        2 * n + m + n * m
    }

    fn initial_state(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.state_dim());
        s.rows_mut(0, self.n()).copy_from(&self.x_hat0);
        s.rows_mut(self.off_theta(), self.m()).copy_from(&self.theta_hat0);
        s
    }

    fn derivative(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> DVector<f64> {
        self.compute(t, state, y_r).1
    }

    fn signals(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> ObserverSignals {
        self.compute(t, state, y_r).0
    }

    fn error_matrix(&self, _y_r: f64) -> DMatrix<f64> {
        self.f.clone()
    }

    fn injection_gain(&self, _y_r: f64) -> DVector<f64> {
        self.k.clone()
    }

    fn adaptation_gain(&self) -> Option<f64> {
        Some(self.gamma)
    }
}
