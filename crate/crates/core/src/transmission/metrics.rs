//! Message-recovery metrics: RMS estimation error, settle times per message
//! transition, and midpoint-threshold bit decoding for square-wave messages.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::TimeSeries;
use crate::plant::Signal;

/// Quantified recovery quality of one transmission run.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryMetrics {
    /// RMS of `theta - theta_hat` over the post-transient windows (the last
    /// half of every symbol for square waves, `t >= post_transient`
    /// otherwise).
    pub rmse_theta: f64,
    /// Worst-case time from a message transition until the estimate stays
    /// inside the band; `None` if some symbol never settles.
    pub settle_time: Option<f64>,
    /// Bit error rate over all symbols (square-wave messages only).
    pub ber: Option<f64>,
    /// Bit error rate discarding the acquisition symbol.
    pub ber_after_first: Option<f64>,
    /// `max |e|` over the final 10% of the horizon.
    pub final_output_error: f64,
}

/// One square-wave symbol interval with its transmitted level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolWindow {
    pub start: f64,
    pub end: f64,
    pub truth_high: bool,
}

/// Symbol windows of a square-wave message over `[t0, t_end]`.
pub fn square_symbols(message: &Signal, t0: f64, t_end: f64) -> Result<Vec<SymbolWindow>> {
    let Signal::SquareWave {
        period,
        duty,
        phase,
        ..
    } = message
    else {
        return Err(Error::Validation(
            "symbol windows are defined for square-wave messages only".into(),
        ));
    };
    let mut symbols = Vec::new();
    // Walk period by period; each period carries a high and a low symbol.
    let mut cycle = ((t0 - phase) / period).floor();
    loop {
        let base = phase + cycle * period;
        let split = base + duty * period;
        let next = base + period;
        for (start, end, truth_high) in [(base, split, true), (split, next, false)] {
            if end <= t0 + 1e-12 {
                continue;
            }
            if start >= t_end - 1e-12 {
                return Ok(symbols);
            }
            if start >= t0 - 1e-12 && end <= t_end + 1e-12 {
                symbols.push(SymbolWindow {
                    start,
                    end,
                    truth_high,
                });
            }
        }
        cycle += 1.0;
    }
}

/// Midpoint-threshold decisions: one bit per symbol, thresholded against the
/// level midpoint (the square wave's offset).
pub fn decode_bits(
    series: &TimeSeries,
    theta_hat_channel: &str,
    offset: f64,
    symbols: &[SymbolWindow],
) -> Result<Vec<bool>> {
    let theta_hat = series.channel(theta_hat_channel)?;
    let t = series.times();
    let (t_first, t_last) = (t[0], t[t.len() - 1]);
    let mut bits = Vec::with_capacity(symbols.len());
    for sym in symbols {
        let mid = 0.5 * (sym.start + sym.end);
        if mid < t_first - 1e-12 || mid > t_last + 1e-12 {
            return Err(Error::Validation(format!(
                "symbol window [{}, {}] lies outside the recorded series",
                sym.start, sym.end
            )));
        }
        bits.push(theta_hat[series.index_at(mid)] > offset);
    }
    Ok(bits)
}

pub(crate) fn settle_band_abs(message: &Signal, band_fraction: f64) -> f64 {
    let amplitude = match message {
        Signal::SquareWave { amplitude, .. } | Signal::Sine { amplitude, .. } => amplitude.abs(),
        Signal::Constant { value } => value.abs().max(1.0),
        Signal::PiecewiseLinear { points } => points
            .iter()
            .map(|(_, v)| v.abs())
            .fold(0.0f64, f64::max)
            .max(1e-12),
        Signal::Affine { scale, inner, .. } => scale.abs() * settle_band_abs(inner, 1.0),
    };
    band_fraction * amplitude
}

fn max_abs_tail(values: &[f64], fraction: f64) -> f64 {
    let start = ((values.len() as f64) * (1.0 - fraction)) as usize;
    values[start.min(values.len() - 1)..]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

/// First time within `[from_idx, to_idx]` at which `|err|` stays inside
/// `band` through `to_idx`; `None` if it never does.
fn settle_index(err: &[f64], from_idx: usize, to_idx: usize, band: f64) -> Option<usize> {
    let mut candidate = None;
    for i in from_idx..=to_idx {
        if err[i].abs() <= band {
            if candidate.is_none() {
                candidate = Some(i);
            }
        } else {
            candidate = None;
        }
    }
    candidate
}

/// Computes [`RecoveryMetrics`] from a recorded run.
///
/// Needs the `theta`, `theta_hat` and `e` channels. `band` is the absolute
/// settle band on `|theta - theta_hat|`; `post_transient` bounds the RMS
/// window for non-square messages.
pub fn recovery_metrics(
    series: &TimeSeries,
    message: &Signal,
    band: f64,
    post_transient: f64,
) -> Result<RecoveryMetrics> {
    let theta = series.channel("theta")?;
    let theta_hat = series.channel("theta_hat")?;
    let e = series.channel("e")?;
    let t = series.times();
    let err: Vec<f64> = theta
        .iter()
        .zip(theta_hat.iter())
        .map(|(a, b)| b - a)
        .collect();

    let final_output_error = max_abs_tail(e, 0.10);

    let mut rms_acc = 0.0f64;
    let mut rms_count = 0usize;
    let mut settle_worst: Option<f64> = Some(0.0);

    let (ber, ber_after_first) = if matches!(message, Signal::SquareWave { .. }) {
        let symbols = square_symbols(message, t[0], t[t.len() - 1])?;
        if symbols.is_empty() {
            return Err(Error::Validation(
                "horizon too short for a single symbol".into(),
            ));
        }
        for sym in &symbols {
            let i0 = series.index_at(sym.start);
            // The sample at the symbol end boundary already carries the next
            // symbol's level; keep the window half-open.
            let mut i1 = series.index_at(sym.end).min(t.len() - 1);
            if t[i1] >= sym.end - 1e-12 && i1 > i0 {
                i1 -= 1;
            }
            // RMS over the last half of the symbol.
            let ihalf = series.index_at(0.5 * (sym.start + sym.end));
            for v in &err[ihalf..=i1] {
                rms_acc += v * v;
                rms_count += 1;
            }
            match settle_index(&err, i0, i1, band) {
                Some(idx) => {
                    let offset = t[idx] - sym.start;
                    settle_worst = settle_worst.map(|w| w.max(offset));
                }
                None => settle_worst = None,
            }
        }
        let offset = match message {
            Signal::SquareWave { offset, .. } => *offset,
            _ => unreachable!(),
        };
        let bits = decode_bits(series, "theta_hat", offset, &symbols)?;
        let errors = bits
            .iter()
            .zip(symbols.iter())
            .filter(|(bit, sym)| **bit != sym.truth_high)
            .count();
        let errors_after_first = bits
            .iter()
            .zip(symbols.iter())
            .skip(1)
            .filter(|(bit, sym)| **bit != sym.truth_high)
            .count();
        (
            Some(errors as f64 / symbols.len() as f64),
            Some(errors_after_first as f64 / (symbols.len() - 1).max(1) as f64),
        )
    } else {
        let i0 = series.index_at(post_transient);
        for v in &err[i0..] {
            rms_acc += v * v;
            rms_count += 1;
        }
        settle_worst = settle_index(&err, 0, t.len() - 1, band).map(|idx| t[idx] - t[0]);
        (None, None)
    };

    Ok(RecoveryMetrics {
        rmse_theta: (rms_acc / rms_count.max(1) as f64).sqrt(),
        settle_time: settle_worst,
        ber,
        ber_after_first,
        final_output_error,
    })
}
