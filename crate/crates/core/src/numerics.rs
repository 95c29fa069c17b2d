//! Deterministic fixed-step ODE integration and trajectory recording.
//!
//! Everything downstream (master systems, observers, filters, disturbance
//! propagators) is integrated as one joint system with the classical
//! fourth-order Runge-Kutta step below, so cross-equation identities hold
//! sample by sample and runs are bit-reproducible.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default per-component magnitude guard for [`simulate`].
pub const DEFAULT_GUARD: f64 = 1e6;

/// A finite-dimensional ODE `x' = f(t, x)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes `f(t, x)` into `dx`. Must not change the dimension.
    fn derivative(&self, t: f64, x: &DVector<f64>, dx: &mut DVector<f64>);
}

/// Adapter turning a closure into an [`OdeSystem`].
pub struct FnOde<F: Fn(f64, &DVector<f64>, &mut DVector<f64>)> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &DVector<f64>, &mut DVector<f64>)> FnOde<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &DVector<f64>, &mut DVector<f64>)> OdeSystem for FnOde<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, t: f64, x: &DVector<f64>, dx: &mut DVector<f64>) {
        (self.f)(t, x, dx)
    }
}

fn check_finite(t: f64, v: &DVector<f64>) -> Result<()> {
    for (i, value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteDerivative {
                t,
                name: format!("x[{i}]"),
            });
        }
    }
    Ok(())
}

/// One classical RK4 step of `sys` over `[t, t + h]`.
pub fn rk4_step(sys: &dyn OdeSystem, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    debug_assert!(h > 0.0);
    debug_assert_eq!(x.len(), sys.dim());
    let n = x.len();
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);

    sys.derivative(t, x, &mut k1);
    check_finite(t, &k1)?;
    let xs = x + &k1 * (h / 2.0);
    sys.derivative(t + h / 2.0, &xs, &mut k2);
    check_finite(t + h / 2.0, &k2)?;
    let xs = x + &k2 * (h / 2.0);
    sys.derivative(t + h / 2.0, &xs, &mut k3);
    check_finite(t + h / 2.0, &k3)?;
    let xs = x + &k3 * h;
    sys.derivative(t + h, &xs, &mut k4);
    check_finite(t + h, &k4)?;

    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Named channel extractor used by [`simulate`].
pub struct ChannelDef<'a> {
    pub name: String,
    pub extract: Box<dyn Fn(f64, &DVector<f64>) -> f64 + 'a>,
}

impl<'a> ChannelDef<'a> {
    pub fn new(name: impl Into<String>, extract: impl Fn(f64, &DVector<f64>) -> f64 + 'a) -> Self {
        Self {
            name: name.into(),
            extract: Box::new(extract),
        }
    }

    /// Channels `x[0]..x[dim-1]` exposing the raw state.
    pub fn state(dim: usize) -> Vec<ChannelDef<'static>> {
        (0..dim)
            .map(|i| ChannelDef::new(format!("x{}", i + 1), move |_t, x: &DVector<f64>| x[i]))
            .collect()
    }
}

/// Integrates `sys` from `x0` over `[t0, t_end]` with fixed step `h`,
/// recording every channel at every step boundary.
///
/// Integration halts with [`Error::BlowUp`] as soon as any state component
/// exceeds `guard` in magnitude; the fault carries the time of divergence.
pub fn simulate(
    sys: &dyn OdeSystem,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    h: f64,
    guard: f64,
    channels: &[ChannelDef],
) -> Result<TimeSeries> {
    if !(h > 0.0) {
        return Err(Error::Validation(format!("step must be positive, got {h}")));
    }
    if !(t_end > t0) {
        return Err(Error::Validation(format!(
            "horizon must satisfy t_end > t0 ({t_end} <= {t0})"
        )));
    }
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {} but the system dimension is {}",
            x0.len(),
            sys.dim()
        )));
    }
    let steps = ((t_end - t0) / h).round().max(1.0) as usize;

    let mut t = t0;
    let mut x = x0.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut data: Vec<Vec<f64>> = channels
        .iter()
        .map(|_| Vec::with_capacity(steps + 1))
        .collect();

    let record = |t: f64, x: &DVector<f64>, data: &mut Vec<Vec<f64>>| {
        for (col, ch) in data.iter_mut().zip(channels.iter()) {
            col.push((ch.extract)(t, x));
        }
    };

    record(t, &x, &mut data);
    times.push(t);
    for k in 0..steps {
        x = rk4_step(sys, t, &x, h)?;
        t = t0 + (k + 1) as f64 * h;
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() || v.abs() > guard {
                return Err(Error::BlowUp {
                    t,
                    name: format!("x[{i}]"),
                    value: *v,
                    guard,
                });
            }
        }
        record(t, &x, &mut data);
        times.push(t);
    }

    TimeSeries::new(
        times,
        h,
        channels
            .iter()
            .map(|c| c.name.clone())
            .zip(data)
            .collect(),
    )
}

/// A fixed-step multichannel recording of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    step: f64,
    t: Vec<f64>,
    channels: Vec<(String, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, step: f64, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::Validation(
                "time series needs at least two samples".into(),
            ));
        }
        let tol = step.abs() * 1e-6 + 1e-12;
        for w in t.windows(2) {
            if (w[1] - w[0] - step).abs() > tol {
                return Err(Error::Validation(format!(
                    "time grid is not uniform with step {step}: got increment {}",
                    w[1] - w[0]
                )));
            }
        }
        for (name, col) in &channels {
            if col.len() != t.len() {
                return Err(Error::Dimension(format!(
                    "channel `{name}` has {} samples, expected {}",
                    col.len(),
                    t.len()
                )));
            }
        }
        Ok(Self { step, t, channels })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// Index of the first sample with `t >= at` (clamped to the last sample).
    pub fn index_at(&self, at: f64) -> usize {
        let i = ((at - self.t[0]) / self.step).ceil();
        (i.max(0.0) as usize).min(self.t.len() - 1)
    }

    /// Writes the series as CSV: a header row, `t` first, 17 significant
    /// digits so parsing the file back reproduces every f64 bit-exactly.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for (name, _) in &self.channels {
            header.push(',');
            header.push_str(name);
        }
        writeln!(w, "{header}")?;
        for i in 0..self.t.len() {
            let mut line = format!("{:.16e}", self.t[i]);
            for (_, col) in &self.channels {
                line.push_str(&format!(",{:.16e}", col[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::SeriesParse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let header = header?;
        let names: Vec<&str> = header.split(',').collect();
        if names.first() != Some(&"t") {
            return Err(Error::SeriesParse {
                line: 1,
                msg: "first column must be `t`".into(),
            });
        }
        let mut t = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len() - 1];
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>, line: usize| -> Result<f64> {
                s.ok_or(Error::SeriesParse {
                    line,
                    msg: "missing field".into(),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::SeriesParse {
                    line,
                    msg: e.to_string(),
                })
            };
            t.push(parse(fields.next(), idx + 1)?);
            for col in cols.iter_mut() {
                col.push(parse(fields.next(), idx + 1)?);
            }
            if fields.next().is_some() {
                return Err(Error::SeriesParse {
                    line: idx + 1,
                    msg: "too many fields".into(),
                });
            }
        }
        if t.len() < 2 {
            return Err(Error::SeriesParse {
                line: 0,
                msg: "need at least two samples".into(),
            });
        }
        let step = t[1] - t[0];
        TimeSeries::new(
            t,
            step,
            names[1..]
                .iter()
                .map(|s| s.to_string())
                .zip(cols)
                .collect(),
        )
    }
}
