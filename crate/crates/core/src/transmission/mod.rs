//! End-to-end signal-transmission harness: master system, noisy channel,
//! adaptive observer and augmentation filters integrated as one joint ODE,
//! with trajectory recording, message-recovery metrics and the analysis
//! reports (persistent excitation, residual bound) bundled per run.

mod config;
mod metrics;

pub use config::{
    preset, preset_names, presets, AnalysisConfig, ChannelConfig, MetricsConfig, ObserverConfig,
    PlantConfig, RegressorConfig, ScenarioConfig, SCHEMA_VERSION,
};
pub use metrics::{decode_bits, recovery_metrics, square_symbols, RecoveryMetrics, SymbolWindow};

use nalgebra::DVector;
use serde::Serialize;

use crate::analysis::{pe_metric, residual_bound, DisturbancePropagator, PeReport, ResidualBound};
use crate::error::{Error, Result};
use crate::numerics::{rk4_step, FnOde, TimeSeries};
use crate::observers::{AdaptiveObserver, AeObserver, HotObserver, ObserverSignals, SdObserver};
use crate::plant::{Channel, ParameterSignal, Plant, Signal};

/// One of the three observer schemes.
#[derive(Debug, Clone)]
pub enum ObserverImpl {
    Ae(AeObserver),
    Sd(SdObserver),
    Hot(HotObserver),
}

impl ObserverImpl {
    pub fn as_dyn(&self) -> &dyn AdaptiveObserver {
        match self {
            ObserverImpl::Ae(o) => o,
            ObserverImpl::Sd(o) => o,
            ObserverImpl::Hot(o) => o,
        }
    }

    fn theta_star(&self) -> Option<f64> {
        match self {
            ObserverImpl::Ae(o) => o.theta_star(),
            ObserverImpl::Sd(o) => o.theta_star(),
            ObserverImpl::Hot(_) => None,
        }
    }
}

/// Persistent-excitation report settings for the per-run summary.
#[derive(Debug, Clone)]
pub struct PeSettings {
    pub window: f64,
    pub stride: Option<f64>,
    pub threshold: f64,
}

impl Default for PeSettings {
    fn default() -> Self {
        Self {
            window: 5.0,
            stride: None,
            threshold: 1e-6,
        }
    }
}

/// A fully resolved, runnable experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// The signal-generating master system (integrated with its own theta).
    pub master: Plant,
    pub x0: DVector<f64>,
    /// Truth for the parameter the observer estimates, in the observer's
    /// parameterization (the message itself in message scenarios).
    pub theta_true: ParameterSignal,
    pub observer: ObserverImpl,
    pub channel: Channel,
    pub horizon: f64,
    pub step: f64,
    pub guard: f64,
    /// Channel names recorded into the series (`t` is implicit).
    pub record: Vec<String>,
    /// Message signal, when the run transmits one (drives recovery metrics).
    pub message: Option<Signal>,
    /// Co-integrate the noise propagator (`xi_e` channel, residual report).
    pub with_propagator: bool,
    /// Co-integrate the companion system of the auxiliary-error identity
    /// (`zeta*` channels; state-dependent scheme only).
    pub with_delta_check: bool,
    /// Settle band as a fraction of the message amplitude.
    pub settle_band: f64,
    /// Start of the metrics window for non-square messages (default:
    /// half the horizon).
    pub post_transient: Option<f64>,
    pub pe: PeSettings,
}

/// Residual-set report for robust noisy runs.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    #[serde(flatten)]
    pub bound: ResidualBound,
    /// Largest `|theta - theta_hat|^2` over the final half of the run.
    pub max_theta_err_sq_tail: f64,
    pub within_bound_tail: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub horizon: f64,
    pub step: f64,
    pub seed: Option<u64>,
    pub metrics: Option<RecoveryMetrics>,
    pub pe: Option<PeReport>,
    pub residual: Option<ResidualSummary>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub series: TimeSeries,
    pub summary: ScenarioSummary,
}

/// Recordable channel identifiers; indices are zero-based internally and
/// one-based in channel names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rec {
    Y,
    YR,
    Xi,
    E,
    EHat,
    Nu,
    Theta(usize),
    ThetaHat(usize),
    Eps(usize),
    X(usize),
    XHat(usize),
    Omega(usize),
    V,
    ThetaErrNorm,
    XiE,
    Delta(usize),
    Zeta(usize),
}

fn parse_indexed(name: &str, prefix: &str, limit: usize) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    let idx: usize = rest.parse().ok()?;
    (idx >= 1 && idx <= limit).then(|| idx - 1)
}

fn parse_channel(name: &str, n: usize, m: usize) -> Result<Rec> {
    let rec = match name {
        "y" => Some(Rec::Y),
        "y_r" => Some(Rec::YR),
        "xi" => Some(Rec::Xi),
        "e" => Some(Rec::E),
        "e_hat" => Some(Rec::EHat),
        "nu" => Some(Rec::Nu),
        "V" => Some(Rec::V),
        "theta_err" => Some(Rec::ThetaErrNorm),
        "xi_e" => Some(Rec::XiE),
        "theta" if m == 1 => Some(Rec::Theta(0)),
        "theta_hat" if m == 1 => Some(Rec::ThetaHat(0)),
        "omega" if m == 1 => Some(Rec::Omega(0)),
        _ => None,
    };
    rec.or_else(|| parse_indexed(name, "theta_hat", m).map(Rec::ThetaHat))
        .or_else(|| parse_indexed(name, "theta", m).map(Rec::Theta))
        .or_else(|| parse_indexed(name, "eps", n).map(Rec::Eps))
        .or_else(|| parse_indexed(name, "x_hat", n).map(Rec::XHat))
        .or_else(|| parse_indexed(name, "x", n).map(Rec::X))
        .or_else(|| parse_indexed(name, "omega", m).map(Rec::Omega))
        .or_else(|| parse_indexed(name, "delta", n).map(Rec::Delta))
        .or_else(|| parse_indexed(name, "zeta", n).map(Rec::Zeta))
        .ok_or_else(|| Error::Validation(format!("unknown record channel `{name}`")))
}

/// Default recording: received signal, error signals and estimates.
pub fn default_record(n: usize, m: usize) -> Vec<String> {
    let mut rec = vec!["y_r".to_string(), "e".to_string(), "e_hat".to_string()];
    if m == 1 {
        rec.push("theta".into());
        rec.push("theta_hat".into());
    } else {
        for i in 1..=m {
            rec.push(format!("theta{i}"));
            rec.push(format!("theta_hat{i}"));
        }
    }
    for i in 1..=n {
        rec.push(format!("eps{i}"));
    }
    rec
}

struct SampleCtx<'a> {
    x: &'a DVector<f64>,
    y: f64,
    y_r: f64,
    xi: f64,
    theta_true: &'a DVector<f64>,
    sig: &'a ObserverSignals,
    v: f64,
    xi_e: Option<f64>,
    delta: Option<DVector<f64>>,
    zeta: Option<DVector<f64>>,
}

fn extract(rec: Rec, ctx: &SampleCtx) -> f64 {
    match rec {
        Rec::Y => ctx.y,
        Rec::YR => ctx.y_r,
        Rec::Xi => ctx.xi,
        Rec::E => ctx.sig.e,
        Rec::EHat => ctx.sig.e_aug,
        Rec::Nu => ctx.sig.nu.unwrap_or(f64::NAN),
        Rec::Theta(i) => ctx.theta_true[i],
        Rec::ThetaHat(i) => ctx.sig.theta_hat[i],
        Rec::Eps(i) => ctx.x[i] - ctx.sig.x_hat[i],
        Rec::X(i) => ctx.x[i],
        Rec::XHat(i) => ctx.sig.x_hat[i],
        Rec::Omega(i) => ctx.sig.omega[i],
        Rec::V => ctx.v,
        Rec::ThetaErrNorm => (ctx.theta_true - &ctx.sig.theta_hat).norm(),
        Rec::XiE => ctx.xi_e.unwrap_or(f64::NAN),
        Rec::Delta(i) => ctx.delta.as_ref().map(|d| d[i]).unwrap_or(f64::NAN),
        Rec::Zeta(i) => ctx.zeta.as_ref().map(|z| z[i]).unwrap_or(f64::NAN),
    }
}

/// Integrates the joint scenario system and assembles series plus summary.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioRun> {
    if !(sc.horizon > 0.0) || !(sc.step > 0.0) {
        return Err(Error::Validation("horizon and step must be positive".into()));
    }
    let obs = sc.observer.as_dyn();
    let ms = &sc.master.structure;
    let n = ms.n();
    let m = ms.m();
    if sc.x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, plant needs {n}",
            sc.x0.len()
        )));
    }
    if obs.structure().n() != n || obs.structure().m() != sc.theta_true.dim() {
        return Err(Error::Dimension(
            "observer structure does not match the master/parameter dimensions".into(),
        ));
    }

    let recs: Vec<Rec> = sc
        .record
        .iter()
        .map(|name| parse_channel(name, n, m))
        .collect::<Result<_>>()?;
    if recs.contains(&Rec::XiE) && !sc.with_propagator {
        return Err(Error::Validation(
            "recording xi_e requires with_propagator".into(),
        ));
    }
    for r in &recs {
        if matches!(r, Rec::Delta(_) | Rec::Zeta(_)) && !sc.with_delta_check {
            return Err(Error::Validation(
                "recording delta/zeta requires with_delta_check".into(),
            ));
        }
    }

    let odim = obs.state_dim();
    let propagator = sc
        .with_propagator
        .then(|| DisturbancePropagator::new(obs.structure().clone()));
    let off_obs = n;
    let off_prop = off_obs + odim;
    let off_zeta = off_prop + if propagator.is_some() { n } else { 0 };
    let dim = off_zeta + if sc.with_delta_check { n } else { 0 };

    let mut state = DVector::zeros(dim);
    state.rows_mut(0, n).copy_from(&sc.x0);
    let obs0 = obs.initial_state();
    state.rows_mut(off_obs, odim).copy_from(&obs0);
    if propagator.is_some() {
        // Matching the auxiliary-error initial condition makes the
        // noise-identity exact from t = 0 even when x_hat(0) != x(0).
        let xi0 = &sc.x0 - obs0.rows(0, n);
        state.rows_mut(off_prop, n).copy_from(&xi0);
    }
    if sc.with_delta_check {
        let delta0 = obs
            .aux_error(
                state.rows(off_obs, odim),
                &sc.x0,
                &sc.theta_true.value(0.0),
            )
            .ok_or_else(|| {
                Error::Validation(
                    "the delta identity check applies to the state-dependent scheme only".into(),
                )
            })?;
        state.rows_mut(off_zeta, n).copy_from(&delta0);
    }

    let steps = (sc.horizon / sc.step).round().max(1.0) as usize;
    let gamma = sc.observer.as_dyn().adaptation_gain().unwrap_or(1.0);

    let mut times = Vec::with_capacity(steps + 1);
    let mut data: Vec<Vec<f64>> = recs.iter().map(|_| Vec::with_capacity(steps + 1)).collect();
    let mut regressor_series: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
    let mut noise_abs_sup = 0.0f64;
    let mut theta_err_sq: Vec<f64> = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * sc.step;
        let xi = sc.channel.xi(k as u64);
        let x = DVector::from(state.rows(0, n));
        let y = ms.output(&x);
        let y_r = y + xi;
        let theta_true = sc.theta_true.value(t);
        let sig = obs.signals(t, state.rows(off_obs, odim), y_r);
        let theta_err = &theta_true - &sig.theta_hat;
        let xi_e = propagator
            .as_ref()
            .map(|p| p.output(&DVector::from(state.rows(off_prop, n))));
        let delta = if sc.with_delta_check {
            obs.aux_error(state.rows(off_obs, odim), &x, &theta_true)
        } else {
            None
        };
        let zeta = sc
            .with_delta_check
            .then(|| DVector::from(state.rows(off_zeta, n)));
        let ctx = SampleCtx {
            x: &x,
            y,
            y_r,
            xi,
            theta_true: &theta_true,
            sig: &sig,
            v: theta_err.norm_squared() / (2.0 * gamma),
            xi_e,
            delta,
            zeta,
        };
        for (col, rec) in data.iter_mut().zip(recs.iter()) {
            col.push(extract(*rec, &ctx));
        }
        times.push(t);
        regressor_series.push(ms.phi.eval(t, y));
        theta_err_sq.push(theta_err.norm_squared());
        if let Some(xe) = xi_e {
            noise_abs_sup = noise_abs_sup.max((xi + xe).abs());
        }

        if k == steps {
            break;
        }

        // Noise is latched per step: constant over the RK4 substeps.
        let sys = FnOde::new(dim, |t: f64, s: &DVector<f64>, ds: &mut DVector<f64>| {
            let x = DVector::from(s.rows(0, n));
            let y = ms.output(&x);
            let y_r = y + xi;
            let theta_master = sc.master.theta.value(t);
            ds.rows_mut(0, n)
                .copy_from(&ms.derivative_with_output(t, &x, y, &theta_master));
            ds.rows_mut(off_obs, odim)
                .copy_from(&obs.derivative(t, s.rows(off_obs, odim), y_r));
            if propagator.is_some() || sc.with_delta_check {
                let g = obs.error_matrix(y_r);
                if let Some(p) = &propagator {
                    let theta_true = sc.theta_true.value(t);
                    let k_gain = obs.injection_gain(y_r);
                    let xi_state = DVector::from(s.rows(off_prop, n));
                    ds.rows_mut(off_prop, n).copy_from(&p.derivative(
                        &xi_state,
                        &g,
                        t,
                        y,
                        y_r,
                        &theta_true,
                        &k_gain,
                        xi,
                        &x,
                    ));
                }
                if sc.with_delta_check {
                    let zeta = DVector::from(s.rows(off_zeta, n));
                    ds.rows_mut(off_zeta, n).copy_from(&(&g * zeta));
                }
            }
        });
        state = rk4_step(&sys, t, &state, sc.step)?;
        let t_next = (k + 1) as f64 * sc.step;
        for (i, v) in state.iter().enumerate() {
            if !v.is_finite() || v.abs() > sc.guard {
                return Err(Error::BlowUp {
                    t: t_next,
                    name: format!("joint state [{i}]"),
                    value: *v,
                    guard: sc.guard,
                });
            }
        }
    }

    let series = TimeSeries::new(
        times.clone(),
        sc.step,
        sc.record.iter().cloned().zip(data).collect(),
    )?;

    // Recovery metrics when a message was transmitted.
    let metrics = match &sc.message {
        Some(msg) => {
            let band = metrics::settle_band_abs(msg, sc.settle_band);
            let post_transient = sc.post_transient.unwrap_or(sc.horizon / 2.0);
            Some(recovery_metrics(&series, msg, band, post_transient)?)
        }
        None => None,
    };

    // Persistent excitation of the true regressor.
    let pe = if sc.horizon >= sc.pe.window {
        let stride = sc.pe.stride.unwrap_or(sc.pe.window / 4.0);
        Some(pe_metric(
            &times,
            &regressor_series,
            sc.pe.window,
            stride,
            sc.pe.threshold,
        )?)
    } else {
        None
    };

    // Residual-set report for robust noisy runs with the propagator.
    let residual = match (sc.observer.theta_star(), &propagator) {
        (Some(theta_star), Some(_)) if sc.channel.xi_max > 0.0 => {
            let theta_sup = times
                .iter()
                .map(|&t| sc.theta_true.value(t).norm())
                .fold(0.0f64, f64::max);
            let bound = residual_bound(
                &DVector::from_vec(vec![theta_sup]),
                theta_star,
                gamma,
                noise_abs_sup,
            )?;
            let tail_start = theta_err_sq.len() / 2;
            let max_tail = theta_err_sq[tail_start..]
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            Some(ResidualSummary {
                within_bound_tail: max_tail <= bound.bound,
                max_theta_err_sq_tail: max_tail,
                bound,
            })
        }
        _ => None,
    };

    Ok(ScenarioRun {
        series,
        summary: ScenarioSummary {
            name: sc.name.clone(),
            horizon: sc.horizon,
            step: sc.step,
            seed: (sc.channel.xi_max > 0.0).then_some(sc.channel.seed),
            metrics,
            pe,
            residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_name_parsing() {
        assert!(matches!(parse_channel("y_r", 3, 1), Ok(Rec::YR)));
        assert!(matches!(parse_channel("theta_hat", 3, 1), Ok(Rec::ThetaHat(0))));
        assert!(matches!(parse_channel("theta_hat2", 3, 2), Ok(Rec::ThetaHat(1))));
        assert!(matches!(parse_channel("eps3", 3, 1), Ok(Rec::Eps(2))));
        assert!(parse_channel("eps4", 3, 1).is_err());
        assert!(parse_channel("bogus", 3, 1).is_err());
        // Ambiguous bare names are only valid for scalar parameters.
        assert!(parse_channel("theta", 3, 2).is_err());
    }

    #[test]
    fn default_record_contains_core_channels() {
        let rec = default_record(3, 1);
        for name in ["y_r", "e", "e_hat", "theta", "theta_hat", "eps1", "eps2", "eps3"] {
            assert!(rec.iter().any(|r| r == name), "missing {name}");
        }
    }
}
