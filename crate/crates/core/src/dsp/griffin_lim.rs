//! Griffin-Lim phase reconstruction from log-mel spectrograms.
//!
//! The mel spectrogram is mapped back to a linear magnitude spectrogram
//! through the transpose of the analysis filterbank (clamped nonnegative),
//! then phases are refined by alternating projection. Phase is initialized
//! to zero so reconstruction is fully deterministic.

use rustfft::num_complex::Complex;

use crate::dsp::mel::{mel_filterbank, MelSpectrogram};
use crate::dsp::stft::StftPlan;
use crate::dsp::wav::Waveform;
use crate::error::{Error, Result};
use crate::mat::Mat;

pub const DEFAULT_ITERS: usize = 32;

/// Invert log-mel frames to a linear magnitude spectrogram (T x bins).
pub fn mel_to_linear_magnitude(mel: &MelSpectrogram) -> Result<Mat> {
    let config = &mel.config;
    let bank = mel_filterbank(
        config.sample_rate_hz,
        config.n_fft,
        config.n_mels,
        config.f_min_hz,
        config.f_max_hz,
    )?;
    if mel.frames.cols() != bank.rows() {
        return Err(Error::data(format!(
            "mel has {} bands but filterbank has {}",
            mel.frames.cols(),
            bank.rows()
        )));
    }
    let bins = config.n_fft / 2 + 1;
    let mut magnitude = Mat::zeros(mel.frames.rows(), bins);
    let mut mel_power = vec![0.0; config.n_mels];
    for t in 0..mel.frames.rows() {
        for (p, &v) in mel_power.iter_mut().zip(mel.frames.row(t)) {
            *p = v.exp();
        }
        let out = magnitude.row_mut(t);
        bank.matvec_transpose_add(&mel_power, out);
        for v in out.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
    }
    Ok(magnitude)
}

/// Reconstruct a waveform from a log-mel spectrogram.
pub fn griffin_lim(mel: &MelSpectrogram, n_iters: usize) -> Result<Waveform> {
    griffin_lim_with_trace(mel, n_iters).map(|(w, _)| w)
}

/// As [`griffin_lim`], also returning the spectral-convergence residual
/// measured after each iteration.
pub fn griffin_lim_with_trace(
    mel: &MelSpectrogram,
    n_iters: usize,
) -> Result<(Waveform, Vec<f64>)> {
    if n_iters < 1 {
        return Err(Error::config("griffin-lim needs at least one iteration"));
    }
    let magnitude = mel_to_linear_magnitude(mel)?;
    let plan = StftPlan::new(mel.config.n_fft, mel.config.hop)?;
    let bins = plan.bins();

    let target_norm = magnitude.data().iter().map(|m| m * m).sum::<f64>().sqrt();

    // Zero-phase initialization: spectrum equals the target magnitude.
    let mut estimate: Vec<Vec<Complex<f64>>> = magnitude
        .row_iter()
        .map(|row| row.iter().map(|&m| Complex::new(m, 0.0)).collect())
        .collect();

    let mut residuals = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let signal = plan.istft(&estimate)?;
        let rebuilt = plan.stft(&signal)?;

        let mut err = 0.0;
        for (t, frame) in rebuilt.iter().enumerate() {
            let target_row = magnitude.row(t);
            for (k, c) in frame.iter().enumerate() {
                let d = c.norm() - target_row[k];
                err += d * d;
            }
        }
        residuals.push(err.sqrt() / target_norm.max(1e-300));

        // Keep the rebuilt phase, restore the target magnitude.
        for (t, frame) in rebuilt.iter().enumerate() {
            let target_row = magnitude.row(t);
            let out = &mut estimate[t];
            for k in 0..bins {
                let c = frame[k];
                let n = c.norm();
                out[k] = if n > 1e-300 {
                    c * (target_row[k] / n)
                } else {
                    Complex::new(target_row[k], 0.0)
                };
            }
        }
    }

    let samples = plan.istft(&estimate)?;
    let samples_len = samples.len();
    debug_assert_eq!(
        samples_len,
        (mel.frames.rows() - 1) * mel.config.hop + mel.config.n_fft
    );
    Ok((
        Waveform::new(samples, mel.config.sample_rate_hz)?,
        residuals,
    ))
}
