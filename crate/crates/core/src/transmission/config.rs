//! Declarative scenario configuration (JSON), resolution into runnable
//! [`Scenario`]s, and the built-in presets.
//!
//! Parsing is strict: unknown keys are rejected everywhere so a mistyped
//! gain name fails loudly instead of silently running defaults.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DEFAULT_GUARD;
use crate::observers::{
    AeObserver, GainSchedule, HotObserver, SdFilterForm, SdObserver, TunerOutput,
};
use crate::plant::{
    lorenz_gain_and_g, lorenz_message_plant, lorenz_message_receiver, lorenz_plant, Channel,
    NoiseKind, ParameterSignal, Plant, PlantStructure, Regressor, Signal, SystemMatrix,
};

use super::{default_record, ObserverImpl, PeSettings, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub plant: PlantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<Signal>,
    #[serde(default)]
    pub channel: ChannelConfig,
    pub observer: ObserverConfig,
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_guard")]
    pub guard: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<Vec<String>>,
    #[serde(default)]
    pub with_propagator: bool,
    #[serde(default)]
    pub with_delta_check: bool,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantConfig {
    /// Lorenz system with unknown scalar parameter and `y = x1`.
    Lorenz { sigma: f64, beta: f64, theta: Signal },
    /// Lorenz system transmitting a message: `theta(t) = r (1 + message)`.
    /// The receiver knows `sigma`, `beta` and `r` and estimates the message.
    LorenzMessage { sigma: f64, beta: f64, r: f64 },
    /// Constant-matrix master system in regressor form.
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi0: Option<Vec<RegressorConfig>>,
        phi: Vec<RegressorConfig>,
        theta: Vec<Signal>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressorConfig {
    /// `scale * y`.
    Output {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// A known signal of time.
    Signal { signal: Signal },
}

fn default_scale() -> f64 {
    1.0
}

impl RegressorConfig {
    fn build_row(configs: &[RegressorConfig]) -> Regressor {
        let configs = configs.to_vec();
        let dim = configs.len();
        Regressor::new(dim, move |t, y| {
            DVector::from_iterator(
                dim,
                configs.iter().map(|c| match c {
                    RegressorConfig::Output { scale } => scale * y,
                    RegressorConfig::Signal { signal } => signal.value(t),
                }),
            )
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub xi_max: f64,
    #[serde(default)]
    pub distribution: NoiseKind,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            xi_max: 0.0,
            distribution: NoiseKind::Zero,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustConfig {
    pub theta_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterFormConfig {
    #[default]
    General,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TunerOutputConfig {
    #[default]
    Derivative,
    Direct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObserverConfig {
    /// Augmented-error scheme (constant system matrix).
    Ae {
        gamma: f64,
        k: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robust: Option<RobustConfig>,
    },
    /// State-dependent augmented-error scheme. `k` defaults to the Lorenz
    /// gain for Lorenz plants.
    Sd {
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robust: Option<RobustConfig>,
        #[serde(default)]
        filters: FilterFormConfig,
    },
    /// High-order-tuner scheme (constant system matrix).
    Hot {
        k: Vec<f64>,
        lambda: f64,
        mu: f64,
        #[serde(default)]
        tuner_output: TunerOutputConfig,
        #[serde(default)]
        strict: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_pe_window")]
    pub pe_window: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe_stride: Option<f64>,
    #[serde(default = "default_pe_threshold")]
    pub pe_threshold: f64,
}

fn default_pe_window() -> f64 {
    5.0
}

fn default_pe_threshold() -> f64 {
    1e-6
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            pe_window: default_pe_window(),
            pe_stride: None,
            pe_threshold: default_pe_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Settle band as a fraction of the message amplitude.
    #[serde(default = "default_settle_band")]
    pub settle_band: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_transient: Option<f64>,
}

fn default_settle_band() -> f64 {
    0.05
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            settle_band: default_settle_band(),
            post_transient: None,
        }
    }
}

fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_vec(v.to_vec())
}

impl ScenarioConfig {
    /// Parses a config from JSON text, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates and resolves the config into a runnable [`Scenario`].
    pub fn resolve(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.horizon > 0.0) || !(self.step > 0.0) {
            return Err(Error::Validation(
                "horizon and step must be positive".into(),
            ));
        }
        if let Some(msg) = &self.message {
            msg.validate()?;
        }

        // Master plant, receiver structure and estimation truth.
        let (master, receiver, theta_true, message): (
            Plant,
            PlantStructure,
            ParameterSignal,
            Option<Signal>,
        ) = match &self.plant {
            PlantConfig::Lorenz { sigma, beta, theta } => {
                if self.message.is_some() {
                    return Err(Error::Validation(
                        "`message` is only valid for the lorenz-message plant; \
                         encode a time-varying theta on the plant instead"
                            .into(),
                    ));
                }
                theta.validate()?;
                let master = lorenz_plant(*sigma, *beta, theta.clone())?;
                let receiver = master.structure.clone();
                (master, receiver, ParameterSignal(vec![theta.clone()]), None)
            }
            PlantConfig::LorenzMessage { sigma, beta, r } => {
                let msg = self.message.clone().ok_or_else(|| {
                    Error::Validation("the lorenz-message plant needs a `message` signal".into())
                })?;
                let master = lorenz_message_plant(*sigma, *beta, *r, msg.clone())?;
                let receiver = lorenz_message_receiver(*sigma, *beta, *r);
                (master, receiver, ParameterSignal(vec![msg.clone()]), Some(msg))
            }
            PlantConfig::Linear {
                a,
                b,
                c,
                phi0,
                phi,
                theta,
            } => {
                if self.message.is_some() {
                    return Err(Error::Validation(
                        "`message` is only valid for the lorenz-message plant".into(),
                    ));
                }
                let n = a.len();
                if n == 0 || a.iter().any(|row| row.len() != n) {
                    return Err(Error::Validation("`a` must be a square matrix".into()));
                }
                let a = DMatrix::from_row_slice(
                    n,
                    n,
                    &a.iter().flatten().cloned().collect::<Vec<_>>(),
                );
                for s in theta {
                    s.validate()?;
                }
                let phi0 = match phi0 {
                    Some(rows) => {
                        if rows.len() != n {
                            return Err(Error::Validation(format!(
                                "phi0 must have {n} components"
                            )));
                        }
                        RegressorConfig::build_row(rows)
                    }
                    None => Regressor::zero(n),
                };
                let structure = PlantStructure::new(
                    SystemMatrix::Constant(a),
                    to_dvector(b),
                    to_dvector(c),
                    phi0,
                    RegressorConfig::build_row(phi),
                )?;
                let master = Plant::new(structure.clone(), ParameterSignal(theta.clone()))?;
                (master, structure, ParameterSignal(theta.clone()), None)
            }
        };

        // Channel: noisy runs must pin the seed for reproducibility.
        let noisy = self.channel.xi_max > 0.0 && self.channel.distribution != NoiseKind::Zero;
        if noisy && self.seed.is_none() {
            return Err(Error::Validation(
                "noisy scenarios must set `seed` (reproducibility)".into(),
            ));
        }
        let channel = Channel::new(
            if noisy { self.channel.xi_max } else { 0.0 },
            if noisy {
                self.channel.distribution
            } else {
                NoiseKind::Zero
            },
            self.seed.unwrap_or(0),
        )?;

        let n = receiver.n();
        let m = receiver.m();
        let x_hat0 = match &self.x_hat0 {
            Some(v) => to_dvector(v),
            None => DVector::zeros(n),
        };
        let theta_hat0 = match &self.theta_hat0 {
            Some(v) => to_dvector(v),
            None => DVector::zeros(m),
        };

        let observer = match &self.observer {
            ObserverConfig::Ae { gamma, k, robust } => ObserverImpl::Ae(
                AeObserver::new(
                    receiver,
                    to_dvector(k),
                    *gamma,
                    robust.as_ref().map(|r| r.theta_star),
                )?
                .with_initial(x_hat0, theta_hat0)?,
            ),
            ObserverConfig::Sd {
                gamma,
                k,
                robust,
                filters,
            } => {
                let (sigma, beta) = match &self.plant {
                    PlantConfig::Lorenz { sigma, beta, .. }
                    | PlantConfig::LorenzMessage { sigma, beta, .. } => (Some(*sigma), Some(*beta)),
                    PlantConfig::Linear { .. } => (None, None),
                };
                let k = match (k, sigma) {
                    (Some(k), _) => GainSchedule::Constant(to_dvector(k)),
                    (None, Some(s)) => {
                        GainSchedule::Constant(lorenz_gain_and_g(s, beta.unwrap()).0)
                    }
                    (None, None) => {
                        return Err(Error::Validation(
                            "the state-dependent observer needs `k` for non-Lorenz plants".into(),
                        ))
                    }
                };
                let form = match filters {
                    FilterFormConfig::General => SdFilterForm::General,
                    FilterFormConfig::AsPrinted => {
                        let (Some(sigma), Some(beta)) = (sigma, beta) else {
                            return Err(Error::Validation(
                                "`filters: as-printed` applies to Lorenz plants only".into(),
                            ));
                        };
                        SdFilterForm::LorenzAsPrinted { sigma, beta }
                    }
                };
                ObserverImpl::Sd(
                    SdObserver::with_filter_form(
                        receiver,
                        k,
                        *gamma,
                        robust.as_ref().map(|r| r.theta_star),
                        form,
                    )?
                    .with_initial(x_hat0, theta_hat0)?,
                )
            }
            ObserverConfig::Hot {
                k,
                lambda,
                mu,
                tuner_output,
                strict,
            } => {
                let mode = match tuner_output {
                    TunerOutputConfig::Derivative => TunerOutput::Derivative,
                    TunerOutputConfig::Direct => TunerOutput::Direct,
                };
                ObserverImpl::Hot(
                    HotObserver::new(receiver, to_dvector(k), *lambda, *mu, mode, *strict)?
                        .with_initial(x_hat0, theta_hat0)?,
                )
            }
        };

        let x0 = match &self.x0 {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::Dimension(format!("x0 must have {n} components")));
                }
                to_dvector(v)
            }
            None => DVector::zeros(n),
        };

        let record = match &self.record {
            Some(r) => r.clone(),
            None => default_record(n, m),
        };

        Ok(Scenario {
            name: self.name.clone(),
            master,
            x0,
            theta_true,
            observer,
            channel,
            horizon: self.horizon,
            step: self.step,
            guard: self.guard,
            record,
            message,
            with_propagator: self.with_propagator,
            with_delta_check: self.with_delta_check,
            settle_band: self.metrics.settle_band,
            post_transient: self.metrics.post_transient,
            pe: PeSettings {
                window: self.analysis.pe_window,
                stride: self.analysis.pe_stride,
                threshold: self.analysis.pe_threshold,
            },
        })
    }
}

const BETA_LORENZ: f64 = 8.0 / 3.0;

fn sine_period_2pi() -> Signal {
    Signal::Sine {
        amplitude: 1.0,
        period: 2.0 * std::f64::consts::PI,
        offset: 0.0,
        phase: 0.0,
    }
}

fn lorenz_square(name: &str) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        plant: PlantConfig::LorenzMessage {
            sigma: 10.0,
            beta: BETA_LORENZ,
            r: 97.0,
        },
        message: Some(Signal::SquareWave {
            amplitude: 0.1,
            period: 40.0,
            duty: 0.5,
            offset: 0.0,
            phase: 0.0,
        }),
        channel: ChannelConfig::default(),
        observer: ObserverConfig::Sd {
            gamma: 0.45,
            k: None,
            robust: None,
            filters: FilterFormConfig::General,
        },
        horizon: 200.0,
        step: 1e-3,
        guard: DEFAULT_GUARD,
        seed: None,
        x0: Some(vec![1.0, 1.0, 1.0]),
        x_hat0: None,
        theta_hat0: None,
        record: None,
        with_propagator: false,
        with_delta_check: false,
        analysis: AnalysisConfig::default(),
        metrics: MetricsConfig::default(),
    }
}

/// The built-in presets.
///
/// The Lorenz experiments run the published configuration `sigma = 10`,
/// `beta = 8/3`, `r = 97`, `gamma = 0.45`; the synthetic presets exercise
/// the augmented-error and high-order-tuner schemes on low-order plants
/// with sinusoidal excitation.
pub fn presets() -> Vec<ScenarioConfig> {
    let mut list = Vec::new();

    list.push(lorenz_square("lorenz-square-noiseless"));

    let mut noisy = lorenz_square("lorenz-square-noisy");
    noisy.channel = ChannelConfig {
        xi_max: 0.5,
        distribution: NoiseKind::Uniform,
    };
    noisy.seed = Some(42);
    noisy.observer = ObserverConfig::Sd {
        gamma: 0.45,
        k: None,
        // theta* = 1.1 sup |theta|: the estimated parameter is the message,
        // amplitude 0.1.
        robust: Some(RobustConfig { theta_star: 0.11 }),
        filters: FilterFormConfig::General,
    };
    noisy.with_propagator = true;
    noisy.record = Some({
        let mut r = default_record(3, 1);
        r.push("xi".into());
        r.push("xi_e".into());
        r
    });
    list.push(noisy);

    let mut analog = lorenz_square("lorenz-analog");
    analog.message = Some(Signal::Sine {
        amplitude: 0.1,
        period: 25.0,
        offset: 0.0,
        phase: 0.0,
    });
    analog.horizon = 100.0;
    analog.metrics.post_transient = Some(20.0);
    list.push(analog);

    list.push(ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "ae-synthetic".into(),
        plant: PlantConfig::Linear {
            a: vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
            b: vec![0.0, 1.0],
            c: vec![1.0, 0.0],
            phi0: None,
            phi: vec![RegressorConfig::Output { scale: 1.0 }],
            theta: vec![Signal::constant(0.5)],
        },
        message: None,
        channel: ChannelConfig::default(),
        observer: ObserverConfig::Ae {
            gamma: 2.0,
            k: vec![3.0, 1.0],
            robust: None,
        },
        horizon: 100.0,
        step: 1e-3,
        guard: DEFAULT_GUARD,
        seed: None,
        x0: Some(vec![1.0, 0.0]),
        // epsilon(0) = 0 keeps the equivalent-model identity exact.
        x_hat0: Some(vec![1.0, 0.0]),
        theta_hat0: None,
        record: Some(vec![
            "y_r".into(),
            "e".into(),
            "e_hat".into(),
            "theta".into(),
            "theta_hat".into(),
            "omega".into(),
            "V".into(),
        ]),
        with_propagator: false,
        with_delta_check: false,
        analysis: AnalysisConfig::default(),
        metrics: MetricsConfig::default(),
    });

    list.push(ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "hot-synthetic-r2".into(),
        plant: PlantConfig::Linear {
            a: vec![vec![-2.0, 1.0], vec![-1.0, 0.0]],
            b: vec![0.0, 1.0],
            c: vec![1.0, 0.0],
            phi0: None,
            phi: vec![RegressorConfig::Signal {
                signal: sine_period_2pi(),
            }],
            theta: vec![Signal::constant(1.0)],
        },
        message: None,
        channel: ChannelConfig::default(),
        observer: ObserverConfig::Hot {
            k: vec![0.0, 0.0],
            lambda: 1.0,
            mu: 1.0,
            tuner_output: TunerOutputConfig::Derivative,
            strict: false,
        },
        horizon: 300.0,
        step: 1e-3,
        guard: DEFAULT_GUARD,
        seed: None,
        x0: None,
        x_hat0: None,
        theta_hat0: None,
        record: Some(vec![
            "y_r".into(),
            "e".into(),
            "theta".into(),
            "theta_hat".into(),
            "omega".into(),
            "nu".into(),
        ]),
        with_propagator: false,
        with_delta_check: false,
        analysis: AnalysisConfig::default(),
        metrics: MetricsConfig::default(),
    });

    list.push(ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "hot-synthetic-r3".into(),
        plant: PlantConfig::Linear {
            a: vec![
                vec![-3.0, 1.0, 0.0],
                vec![-3.0, 0.0, 1.0],
                vec![-1.0, 0.0, 0.0],
            ],
            b: vec![0.0, 0.0, 1.0],
            c: vec![1.0, 0.0, 0.0],
            phi0: None,
            phi: vec![RegressorConfig::Signal {
                signal: sine_period_2pi(),
            }],
            theta: vec![Signal::constant(1.0)],
        },
        message: None,
        channel: ChannelConfig::default(),
        observer: ObserverConfig::Hot {
            k: vec![0.0, 0.0, 0.0],
            lambda: 1.0,
            // Twice the tuner gain bound (3.0 for this realization).
            mu: 6.0,
            // The derivative form of the tuner output cascades two pure
            // integrators (psi and theta_hat) and oscillates; the direct
            // form converges. See the observers module docs.
            tuner_output: TunerOutputConfig::Direct,
            strict: true,
        },
        horizon: 400.0,
        step: 1e-3,
        guard: DEFAULT_GUARD,
        seed: None,
        x0: None,
        x_hat0: None,
        theta_hat0: None,
        record: Some(vec![
            "y_r".into(),
            "e".into(),
            "theta".into(),
            "theta_hat".into(),
            "omega".into(),
            "nu".into(),
        ]),
        with_propagator: false,
        with_delta_check: false,
        analysis: AnalysisConfig::default(),
        metrics: MetricsConfig::default(),
    });

    list
}

pub fn preset_names() -> Vec<String> {
    presets().iter().map(|p| p.name.clone()).collect()
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_presets_ship() {
        let names = preset_names();
        for expected in [
            "lorenz-square-noiseless",
            "lorenz-square-noisy",
            "lorenz-analog",
            "hot-synthetic-r2",
            "hot-synthetic-r3",
            "ae-synthetic",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
    }

    #[test]
    fn every_preset_resolves() {
        for cfg in presets() {
            cfg.resolve()
                .unwrap_or_else(|e| panic!("preset {} failed to resolve: {e}", cfg.name));
        }
    }

    #[test]
    fn preset_round_trips_through_json() {
        for cfg in presets() {
            let json = cfg.to_json_pretty();
            let back = ScenarioConfig::from_json(&json).unwrap();
            back.resolve().unwrap();
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = preset("lorenz-square-noiseless").unwrap().to_json_pretty();
        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["observer"]["gamm"] = serde_json::json!(0.45);
        let text = serde_json::to_string(&value).unwrap();
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn zero_gamma_rejected() {
        let mut cfg = preset("lorenz-square-noiseless").unwrap();
        if let ObserverConfig::Sd { gamma, .. } = &mut cfg.observer {
            *gamma = 0.0;
        }
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn noisy_scenario_without_seed_rejected() {
        let mut cfg = preset("lorenz-square-noisy").unwrap();
        cfg.seed = None;
        assert!(cfg.resolve().is_err());
    }
}
