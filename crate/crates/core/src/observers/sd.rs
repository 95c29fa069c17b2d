//! Augmented-error adaptive observer for master systems with an
//! output-dependent system matrix `A(y)`.
//!
//! The augmentation runs the matrix regressor filter
//! `Omega' = G(t) Omega + b phibar^T` and the auxiliary filter
//! `eta' = G(t) eta - Omega theta_hat'` with `G(t) = A(y_r) - k(y_r) c^T`,
//! and adapts on `e_aug = e + c^T eta` with `omega = c^T Omega`. Along any
//! joint trajectory the auxiliary error
//! `delta = eps + eta - Omega (theta - theta_hat)` obeys `delta' = G delta`,
//! which the verification suite checks numerically.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::analysis::require_hurwitz;
use crate::error::{Error, Result};
use crate::filters::{AuxiliaryFilter, MatrixRegressorFilter};
use crate::plant::PlantStructure;

use super::{adaptation_rhs, AdaptiveObserver, ObserverSignals};

/// Constant or output-scheduled injection gain `k(y)`.
#[derive(Clone)]
pub enum GainSchedule {
    Constant(DVector<f64>),
    OutputDependent {
        n: usize,
        f: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    },
}

impl fmt::Debug for GainSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainSchedule::Constant(k) => write!(f, "GainSchedule::Constant(len={})", k.len()),
            GainSchedule::OutputDependent { n, .. } => {
                write!(f, "GainSchedule::OutputDependent(n={n})")
            }
        }
    }
}

impl GainSchedule {
    pub fn n(&self) -> usize {
        match self {
            GainSchedule::Constant(k) => k.len(),
            GainSchedule::OutputDependent { n, .. } => *n,
        }
    }

    pub fn eval(&self, y: f64) -> DVector<f64> {
        match self {
            GainSchedule::Constant(k) => k.clone(),
            GainSchedule::OutputDependent { f, .. } => (f)(y),
        }
    }
}

/// Which realization the augmentation filters use for the Lorenz receiver.
///
/// `General` derives both filters from `G(t) = A(y_r) - k(y_r) c^T` with the
/// `b phibar^T` forcing. `LorenzAsPrinted` reproduces the published Lorenz
/// filter display verbatim (no forcing term, opposite sign on the
/// `y_r`-coupling), kept for side-by-side comparison; it does not converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdFilterForm {
    General,
    LorenzAsPrinted { sigma: f64, beta: f64 },
}

#[derive(Debug, Clone)]
pub struct SdObserver {
    structure: PlantStructure,
    k: GainSchedule,
    gamma: f64,
    theta_star: Option<f64>,
    filter_form: SdFilterForm,
    omega_filter: MatrixRegressorFilter,
    eta_filter: AuxiliaryFilter,
    x_hat0: DVector<f64>,
    theta_hat0: DVector<f64>,
}

impl SdObserver {
    /// Builds the observer and audits the stability of
    /// `G(y) = A(y) - k(y) c^T`: constant matrices must be Hurwitz; for
    /// output-dependent matrices the symmetric part of `G(y)` must be
    /// negative definite over a sampled output range, the same sufficient
    /// condition the Lorenz design satisfies exactly.
    pub fn new(
        structure: PlantStructure,
        k: GainSchedule,
        gamma: f64,
        theta_star: Option<f64>,
    ) -> Result<Self> {
        Self::with_filter_form(structure, k, gamma, theta_star, SdFilterForm::General)
    }

    pub fn with_filter_form(
        structure: PlantStructure,
        k: GainSchedule,
        gamma: f64,
        theta_star: Option<f64>,
        filter_form: SdFilterForm,
    ) -> Result<Self> {
        let n = structure.n();
        let m = structure.m();
        if k.n() != n {
            return Err(Error::Dimension(format!(
                "injection gain has length {}, expected {n}",
                k.n()
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
        if matches!(filter_form, SdFilterForm::LorenzAsPrinted { .. }) && (n != 3 || m != 1) {
            return Err(Error::Validation(
                "the as-printed filter form is defined only for the Lorenz receiver (n=3, m=1)"
                    .into(),
            ));
        }

        let g_at = |y: f64| structure.a.eval(y) - k.eval(y) * structure.c.transpose();
        if structure.a.is_state_dependent() {
            // Sufficient certificate: symmetric part of G(y) uniformly
            // negative over a wide sampled output range.
            let samples = 201;
            for i in 0..samples {
                let y = -100.0 + 200.0 * i as f64 / (samples - 1) as f64;
                let g = g_at(y);
                let sym = (&g + g.transpose()) * 0.5;
                let max_eig = sym
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                if max_eig >= 0.0 {
                    return Err(Error::Validation(format!(
                        "stability certificate failed: symmetric part of G(y) at y = {y} has \
                         eigenvalue {max_eig:.3e} >= 0"
                    )));
                }
            }
        } else {
            require_hurwitz(&g_at(0.0))?;
        }

        Ok(Self {
            omega_filter: MatrixRegressorFilter { n, m },
            eta_filter: AuxiliaryFilter { n },
            x_hat0: DVector::zeros(n),
            theta_hat0: DVector::zeros(m),
            structure,
            k,
            gamma,
            theta_star,
            filter_form,
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

    pub fn theta_star(&self) -> Option<f64> {
        self.theta_star
    }

    fn n(&self) -> usize {
        self.structure.n()
    }

    fn m(&self) -> usize {
        self.structure.m()
    }

    // Layout: [x_hat (n) | theta_hat (m) | Omega (n m, column-major) | eta (n)]
    fn off_theta(&self) -> usize {
        self.n()
    }

    fn off_omega(&self) -> usize {
        self.n() + self.m()
    }

    fn off_eta(&self) -> usize {
        self.off_omega() + self.n() * self.m()
    }

    fn omega_matrix(&self, state: DVectorView<f64>) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        DMatrix::from_iterator(n, m, state.rows(self.off_omega(), n * m).iter().cloned())
    }

    fn compute(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> (ObserverSignals, DVector<f64>) {
        let n = self.n();
        let m = self.m();
        let x_hat = state.rows(0, n);
        let theta_hat = DVector::from(state.rows(self.off_theta(), m));
        let omega_mat = self.omega_matrix(state);
        let eta = DVector::from(state.rows(self.off_eta(), n));

        let a_r = self.structure.a.eval(y_r);
        let k_r = self.k.eval(y_r);
        let phibar = self.structure.phi.eval(t, y_r);

        let y_hat = self.structure.c.dot(&x_hat);
        let e = y_r - y_hat;
        let omega = self.omega_filter.output(&omega_mat, &self.structure.c);
        let e_aug = e + self.structure.c.dot(&eta);
        let theta_hat_dot = adaptation_rhs(self.gamma, &omega, e_aug, &theta_hat, self.theta_star);

        let x_hat_dot = &a_r * x_hat
            + self.structure.phi0.eval(t, y_r)
            + &self.structure.b * phibar.dot(&theta_hat)
            + &k_r * e;

        let (omega_dot, eta_dot) = match self.filter_form {
            SdFilterForm::General => {
                let g = &a_r - &k_r * self.structure.c.transpose();
                (
                    self.omega_filter.derivative(&omega_mat, &g, &self.structure.b, &phibar),
                    self.eta_filter.derivative(&eta, &g, &omega_mat, &theta_hat_dot),
                )
            }
            SdFilterForm::LorenzAsPrinted { sigma, beta } => {
                let om = omega_mat.column(0);
                let omega_dot = DMatrix::from_column_slice(
                    3,
                    1,
                    &[
                        sigma * om[1] - sigma * om[0],
                        -sigma * om[0] - om[1] + y_r * om[2],
                        -beta * om[2] + y_r * om[1],
                    ],
                );
                let td = theta_hat_dot[0];
                let eta_dot = DVector::from_vec(vec![
                    sigma * eta[1] - sigma * eta[0] - om[0] * td,
                    -sigma * eta[0] - eta[1] + y_r * eta[2] - om[1] * td,
                    -beta * eta[2] + y_r * eta[1] - om[2] * td,
                ]);
                (omega_dot, eta_dot)
            }
        };

        let mut d = DVector::zeros(self.state_dim());
        d.rows_mut(0, n).copy_from(&x_hat_dot);
        d.rows_mut(self.off_theta(), m).copy_from(&theta_hat_dot);
        d.rows_mut(self.off_omega(), n * m)
            .copy_from(&DVector::from_iterator(n * m, omega_dot.iter().cloned()));
        d.rows_mut(self.off_eta(), n).copy_from(&eta_dot);

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

impl AdaptiveObserver for SdObserver {
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

    fn error_matrix(&self, y_r: f64) -> DMatrix<f64> {
        self.structure.a.eval(y_r) - self.k.eval(y_r) * self.structure.c.transpose()
    }

    fn injection_gain(&self, y_r: f64) -> DVector<f64> {
        self.k.eval(y_r)
    }

    fn adaptation_gain(&self) -> Option<f64> {
        Some(self.gamma)
    }

    fn aux_error(
        &self,
        state: DVectorView<f64>,
        x_true: &DVector<f64>,
        theta_true: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let n = self.n();
        let m = self.m();
        let x_hat = state.rows(0, n);
        let theta_hat = DVector::from(state.rows(self.off_theta(), m));
        let omega_mat = self.omega_matrix(state);
        let eta = DVector::from(state.rows(self.off_eta(), n));
        let eps = x_true - x_hat;
        Some(eps + eta - omega_mat * (theta_true - theta_hat))
    }
}
