//! TDOA extraction from multichannel audio with GCC-PHAT, and synthetic
//! recordings for exercising the full pipeline without hardware.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Scenario;
use crate::tdoa_model::{EmissionEvent, EventKey, PairingStrategy, TdoaTable};

/// Shortest signal `gcc_phat` accepts, samples.
pub const MIN_SIGNAL_LEN: usize = 16;
/// Cross-spectrum bins below this magnitude carry no phase and are zeroed.
pub const PHAT_FLOOR: f64 = 1e-12;

/// Chirp excitation used by the synthesizer.
pub const CHIRP_DURATION_S: f64 = 0.02;
pub const CHIRP_START_HZ: f64 = 500.0;
/// Upper chirp frequency as a fraction of the sample rate.
pub const CHIRP_STOP_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: f64,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "audio needs at least one channel".into(),
            ));
        }
        let len = channels[0].len();
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(Error::InvalidArgument(format!(
                "channel {i} has {} samples, channel 0 has {len}",
                c.len()
            )));
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// Span of one source emission in a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionWindow {
    pub start_sample: usize,
    pub length_samples: usize,
    pub board_index: usize,
    pub source_index: usize,
}

impl EmissionWindow {
    pub fn end_sample(&self) -> usize {
        self.start_sample + self.length_samples
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            board_index: self.board_index,
            source_index: self.source_index,
        }
    }
}

/// Checks that windows are in bounds, long enough, sorted and disjoint.
pub fn validate_windows(windows: &[EmissionWindow], buffer_len: usize) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no emission windows".into()));
    }
    for (w, win) in windows.iter().enumerate() {
        if win.length_samples < MIN_SIGNAL_LEN {
            return Err(Error::InvalidArgument(format!(
                "window {w} is {} samples long, need at least {MIN_SIGNAL_LEN}",
                win.length_samples
            )));
        }
        if win.end_sample() > buffer_len {
            return Err(Error::InvalidArgument(format!(
                "window {w} ends at sample {} but the recording has {buffer_len}",
                win.end_sample()
            )));
        }
        if w > 0 && win.start_sample < windows[w - 1].end_sample() {
            return Err(Error::InvalidArgument(format!(
                "window {w} overlaps or precedes window {}",
                w - 1
            )));
        }
    }
    Ok(())
}

/// Zero-padded spectra of equal-length signals sharing one FFT plan.
struct SpectrumPlan {
    nfft: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectrumPlan {
    fn new(len: usize) -> Self {
        let nfft = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            nfft,
            forward: planner.plan_fft_forward(nfft),
            inverse: planner.plan_fft_inverse(nfft),
        }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Lag of `a` relative to `b` in samples, searched over `±max_lag` samples.
    fn phat_lag(&self, a: &[Complex64], b: &[Complex64], max_lag: usize) -> Result<f64> {
        let mut cross: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let c = x * y.conj();
                let mag = c.norm();
                if mag < PHAT_FLOOR {
                    Complex64::new(0.0, 0.0)
                } else {
                    c / mag
                }
            })
            .collect();
        if cross.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            return Err(Error::NoSignal);
        }
        self.inverse.process(&mut cross);

        let n = self.nfft;
        let at = |lag: i64| cross[lag.rem_euclid(n as i64) as usize].re;
        let m = max_lag as i64;
        let mut best = -m;
        for lag in -m..=m {
            if at(lag) > at(best) {
                best = lag;
            }
        }
        if best.abs() == m {
            return Err(Error::AmbiguousPeak { lag_samples: best });
        }
        let (ym, y0, yp) = (at(best - 1), at(best), at(best + 1));
        let denom = ym - 2.0 * y0 + yp;
        let offset = if denom != 0.0 {
            0.5 * (ym - yp) / denom
        } else {
            0.0
        };
        Ok(best as f64 + offset)
    }
}

/// Search half-width in samples: one sample past `max_lag`, so any lag the
/// bound allows lands strictly inside the window and a boundary peak means
/// the true delay exceeds it.
fn max_lag_samples(max_lag: f64, sample_rate: f64, len: usize) -> Result<usize> {
    if !(max_lag >= 0.0) || !max_lag.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "max lag must be non-negative, got {max_lag}"
        )));
    }
    let m = max_lag * sample_rate;
    if m >= len as f64 {
        return Err(Error::InvalidArgument(format!(
            "max lag of {m:.1} samples does not fit a {len}-sample signal"
        )));
    }
    Ok(m.floor() as usize + 1)
}

/// Delay of `sig_a` relative to `sig_b`, seconds. Positive when `sig_a`
/// lags (arrives after) `sig_b`.
pub fn gcc_phat(sig_a: &[f64], sig_b: &[f64], sample_rate: f64, max_lag: f64) -> Result<f64> {
    if sig_a.len() != sig_b.len() {
        return Err(Error::DimensionMismatch {
            what: "gcc_phat signal length",
            expected: sig_a.len(),
            found: sig_b.len(),
        });
    }
    if sig_a.len() < MIN_SIGNAL_LEN {
        return Err(Error::InvalidArgument(format!(
            "signals need at least {MIN_SIGNAL_LEN} samples, got {}",
            sig_a.len()
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "sample rate must be positive".into(),
        ));
    }
    let m = max_lag_samples(max_lag, sample_rate, sig_a.len())?;
    let plan = SpectrumPlan::new(sig_a.len());
    let lag = plan.phat_lag(&plan.spectrum(sig_a), &plan.spectrum(sig_b), m)?;
    Ok(lag / sample_rate)
}

/// Physically possible TDOA bound for an array of the given diameter.
pub fn default_max_lag(array_diameter: f64, c: f64) -> f64 {
    array_diameter / c
}

/// One TDOA block (or the first pair failure) per window, in window order.
pub fn extract_windows(
    audio: &AudioBuffer,
    windows: &[EmissionWindow],
    strategy: PairingStrategy,
    max_lag: f64,
) -> Result<Vec<Result<Vec<f64>>>> {
    let pairs = strategy.pairs(audio.channel_count())?;
    validate_windows(windows, audio.len())?;
    let fs = audio.sample_rate();
    max_lag_samples(
        max_lag,
        fs,
        windows.iter().map(|w| w.length_samples).min().unwrap_or(0),
    )?;
    let mut plans: HashMap<usize, SpectrumPlan> = HashMap::new();
    for win in windows {
        plans
            .entry(win.length_samples)
            .or_insert_with(|| SpectrumPlan::new(win.length_samples));
    }

    Ok(windows
        .par_iter()
        .enumerate()
        .map(|(w, win)| {
            let plan = &plans[&win.length_samples];
            let m = max_lag_samples(max_lag, fs, win.length_samples)?;
            let spectra: Vec<Vec<Complex64>> = audio
                .channels()
                .iter()
                .map(|ch| plan.spectrum(&ch[win.start_sample..win.end_sample()]))
                .collect();
            pairs
                .iter()
                .map(|p| {
                    plan.phat_lag(&spectra[p.mic], &spectra[p.reference], m)
                        .map(|lag| lag / fs)
                        .map_err(|e| Error::Extraction {
                            window: w,
                            mic: p.mic,
                            reference: p.reference,
                            source: Box::new(e),
                        })
                })
                .collect()
        })
        .collect())
}

/// One TDOA block per window, in the canonical pair order of `strategy`.
/// Event numbering follows window order; the first failing window aborts.
pub fn extract_measurements(
    audio: &AudioBuffer,
    windows: &[EmissionWindow],
    strategy: PairingStrategy,
    max_lag: f64,
) -> Result<TdoaTable> {
    let blocks = extract_windows(audio, windows, strategy, max_lag)?;
    let mut values = Vec::with_capacity(blocks.len() * strategy.block_size(audio.channel_count()));
    for block in blocks {
        values.extend(block?);
    }
    TdoaTable::new(
        audio.channel_count(),
        strategy,
        windows.iter().map(EmissionWindow::key).collect(),
        values,
    )
}

/// Hann-windowed linear chirp of `CHIRP_DURATION_S` at `sample_rate`.
pub fn chirp(sample_rate: f64) -> Vec<f64> {
    let len = (CHIRP_DURATION_S * sample_rate).round() as usize;
    let f0 = CHIRP_START_HZ;
    let f1 = CHIRP_STOP_FRACTION * sample_rate;
    let sweep = (f1 - f0) / CHIRP_DURATION_S;
    (0..len)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
            hann * (2.0 * PI * (f0 * t + 0.5 * sweep * t * t)).sin()
        })
        .collect()
}

/// Propagation time from the event's source to every microphone, seconds.
pub fn propagation_delays(scenario: &Scenario, event: &EmissionEvent) -> Vec<f64> {
    scenario
        .true_mics
        .positions()
        .iter()
        .map(|x| (x - event.source_position).norm() / scenario.c)
        .collect()
}

/// Segment length `synth_emission` produces at `sample_rate` for a maximum
/// propagation delay of `max_delay` seconds.
pub fn segment_len(sample_rate: f64, max_delay: f64) -> usize {
    let chirp_len = (CHIRP_DURATION_S * sample_rate).round() as usize;
    let lead = chirp_len / 4;
    lead + chirp_len + (max_delay * sample_rate).ceil() as usize + chirp_len / 2
}

/// Multichannel recording of one emission: the chirp delayed on channel `i`
/// by exactly `‖x_i − s‖ / c` (fractional delays applied as a phase shift),
/// plus white noise at `snr_db` relative to the chirp power. Pass
/// `f64::INFINITY` for a noiseless buffer.
pub fn synth_emission(
    scenario: &Scenario,
    event: &EmissionEvent,
    sample_rate: f64,
    snr_db: f64,
    seed: u64,
) -> Result<AudioBuffer> {
    let delays = propagation_delays(scenario, event);
    let max_delay = delays.iter().cloned().fold(0.0, f64::max);
    synth_with_delays(
        &delays,
        segment_len(sample_rate, max_delay),
        sample_rate,
        snr_db,
        seed,
    )
}

fn synth_with_delays(
    delays: &[f64],
    len: usize,
    sample_rate: f64,
    snr_db: f64,
    seed: u64,
) -> Result<AudioBuffer> {
    if !(sample_rate >= 8000.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be at least 8000 Hz, got {sample_rate}"
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db is NaN".into()));
    }
    let pulse = chirp(sample_rate);
    let lead = pulse.len() / 4;
    let nfft = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(nfft);
    let inverse = planner.plan_fft_inverse(nfft);

    let mut base = vec![Complex64::new(0.0, 0.0); nfft];
    for (b, &v) in base[lead..].iter_mut().zip(&pulse) {
        b.re = v;
    }
    forward.process(&mut base);

    let power = pulse.iter().map(|v| v * v).sum::<f64>() / pulse.len() as f64;
    let noise = if snr_db.is_finite() {
        let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        Some(Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let channels = delays
        .iter()
        .map(|&d| {
            let shift = d * sample_rate;
            let mut spec: Vec<Complex64> = base
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    // Signed frequency index; the Nyquist bin gets a real
                    // factor so the output stays real.
                    let f = if k <= nfft / 2 {
                        k as f64
                    } else {
                        k as f64 - nfft as f64
                    };
                    if 2 * k == nfft {
                        v * (PI * shift).cos()
                    } else {
                        v * Complex64::from_polar(1.0, -2.0 * PI * f * shift / nfft as f64)
                    }
                })
                .collect();
            inverse.process(&mut spec);
            let mut ch: Vec<f64> = spec[..len].iter().map(|c| c.re / nfft as f64).collect();
            if let Some(noise) = &noise {
                ch.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            ch
        })
        .collect();
    AudioBuffer::new(sample_rate, channels)
}

/// Every event of the scenario rendered back to back, one segment each,
/// with the matching emission windows. Event `e` draws its noise from
/// stream `e` of a generator seeded with `seed`.
pub fn synth_recording(
    scenario: &Scenario,
    sample_rate: f64,
    snr_db: f64,
    seed: u64,
) -> Result<(AudioBuffer, Vec<EmissionWindow>)> {
    let all_delays: Vec<Vec<f64>> = scenario
        .events
        .iter()
        .map(|e| propagation_delays(scenario, e))
        .collect();
    let max_delay = all_delays.iter().flatten().cloned().fold(0.0, f64::max);
    let len = segment_len(sample_rate, max_delay);
    let segments: Vec<Result<AudioBuffer>> = all_delays
        .par_iter()
        .enumerate()
        .map(|(e, delays)| {
            let mut stream = ChaCha8Rng::seed_from_u64(seed);
            stream.set_stream(e as u64);
            synth_with_delays(
                delays,
                len,
                sample_rate,
                snr_db,
                rand::Rng::gen(&mut stream),
            )
        })
        .collect();

    let n = scenario.true_mics.len();
    let mut channels = vec![Vec::with_capacity(len * scenario.events.len()); n];
    let mut windows = Vec::with_capacity(scenario.events.len());
    for (segment, event) in segments.into_iter().zip(&scenario.events) {
        windows.push(EmissionWindow {
            start_sample: channels[0].len(),
            length_samples: len,
            board_index: event.board_index,
            source_index: event.source_index,
        });
        for (dst, src) in channels.iter_mut().zip(segment?.into_channels()) {
            dst.extend(src);
        }
    }
    Ok((AudioBuffer::new(sample_rate, channels)?, windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_scenario, SimConfig};
    use crate::tdoa_model::predict;

    const FS: f64 = 48_000.0;

    fn white_noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        (0..len).map(|_| n.sample(&mut rng)).collect()
    }

    fn shifted_pair(shift: usize) -> (Vec<f64>, Vec<f64>) {
        let src = white_noise(4096 + shift, 42);
        // `a` is `b` delayed by `shift` samples.
        let a = src[..4096].to_vec();
        let b = src[shift..shift + 4096].to_vec();
        (a, b)
    }

    #[test]
    fn identical_signals_have_zero_lag() {
        let x = white_noise(2048, 1);
        let lag = gcc_phat(&x, &x, FS, 0.002).unwrap();
        assert!(lag.abs() * FS < 0.5);
    }

    #[test]
    fn recovers_integer_shift() {
        let (a, b) = shifted_pair(17);
        let lag = gcc_phat(&a, &b, FS, 0.002).unwrap();
        assert!((lag - 17.0 / FS).abs() * FS < 1.0, "{}", lag * FS);
        assert!((17.0 / FS - 3.5417e-4).abs() < 1e-8);
        let swapped = gcc_phat(&b, &a, FS, 0.002).unwrap();
        assert!((swapped + 17.0 / FS).abs() * FS < 1.0);
        assert!((swapped + lag).abs() * FS < 1e-9);
    }

    #[test]
    fn gain_does_not_move_the_peak() {
        let (a, b) = shifted_pair(17);
        let lag = gcc_phat(&a, &b, FS, 0.002).unwrap();
        for g in [0.25, 2.0, 1024.0] {
            let ga: Vec<f64> = a.iter().map(|v| v * g).collect();
            assert_eq!(gcc_phat(&ga, &b, FS, 0.002).unwrap(), lag);
            let gb: Vec<f64> = b.iter().map(|v| v * g).collect();
            assert_eq!(gcc_phat(&a, &gb, FS, 0.002).unwrap(), lag);
        }
        for g in [0.37, 3.1, 17.0] {
            let gb: Vec<f64> = b.iter().map(|v| v * g).collect();
            assert!((gcc_phat(&a, &gb, FS, 0.002).unwrap() - lag).abs() * FS < 1e-9);
        }
    }

    #[test]
    fn shift_at_the_bound_is_accepted() {
        let (a, b) = shifted_pair(19);
        let lag = gcc_phat(&a, &b, FS, 19.0 / FS).unwrap();
        assert!((lag * FS - 19.0).abs() < 0.5);
        // Zero bound still searches ±1 sample around zero lag.
        let x = white_noise(256, 5);
        assert!(gcc_phat(&x, &x, FS, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_silence_and_bad_inputs() {
        let z = vec![0.0; 256];
        let x = white_noise(256, 3);
        assert!(matches!(gcc_phat(&z, &x, FS, 0.001), Err(Error::NoSignal)));
        assert!(matches!(
            gcc_phat(&x, &x[..255], FS, 0.001),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gcc_phat(&x[..8], &x[..8], FS, 0.0).is_err());
        assert!(gcc_phat(&x, &x, FS, 1.0).is_err());
    }

    #[test]
    fn shift_beyond_max_lag_is_ambiguous() {
        // The window reaches one sample past the 19-sample bound; a true
        // shift of 20 peaks on its edge.
        let (a, b) = shifted_pair(20);
        let err = gcc_phat(&a, &b, FS, 19.0 / FS).unwrap_err();
        assert!(matches!(err, Error::AmbiguousPeak { .. }), "{err:?}");
    }

    #[test]
    fn noiseless_synthesis_applies_exact_delays() {
        let cfg = SimConfig {
            boards: 2,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 4).unwrap();
        let ev = s.events[3];
        let d = propagation_delays(&s, &ev);
        let g = predict(
            &s.true_mics,
            &[ev],
            PairingStrategy::SingleReference(0),
            s.c,
        )
        .unwrap();
        for i in 1..8 {
            assert!(((d[i] - d[0]) - g[i - 1]).abs() < 1e-15);
        }
        let audio = synth_emission(&s, &ev, FS, f64::INFINITY, 0).unwrap();
        let max_lag = default_max_lag(s.true_mics.diameter(), s.c);
        for i in 1..8 {
            let lag = gcc_phat(audio.channel(i), audio.channel(0), FS, max_lag).unwrap();
            assert!(
                (lag - g[i - 1]).abs() * FS < 0.25,
                "mic {i}: {} samples",
                (lag - g[i - 1]) * FS
            );
        }
    }

    #[test]
    fn noisy_synthesis_within_one_sample() {
        let cfg = SimConfig {
            boards: 3,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 8).unwrap();
        let max_lag = default_max_lag(s.true_mics.diameter(), s.c);
        let strategy = PairingStrategy::AllPairs;
        for (e, ev) in s.events.iter().enumerate() {
            let audio = synth_emission(&s, ev, FS, 20.0, e as u64).unwrap();
            let g = predict(&s.true_mics, &[*ev], strategy, s.c).unwrap();
            for (r, p) in strategy.pairs(8).unwrap().iter().enumerate() {
                let lag = gcc_phat(
                    audio.channel(p.mic),
                    audio.channel(p.reference),
                    FS,
                    max_lag,
                )
                .unwrap();
                assert!((lag - g[r]).abs() * FS < 1.0);
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let s = generate_scenario(
            &SimConfig {
                boards: 1,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let a = synth_emission(&s, &s.events[0], FS, 20.0, 9).unwrap();
        let b = synth_emission(&s, &s.events[0], FS, 20.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_emission(&s, &s.events[0], FS, 20.0, 10).unwrap());
        assert!(synth_emission(&s, &s.events[0], 4000.0, 20.0, 9).is_err());
    }

    #[test]
    fn extraction_block_layout() {
        let s = generate_scenario(
            &SimConfig {
                boards: 1,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let (audio, windows) = synth_recording(&s, FS, 30.0, 1).unwrap();
        assert_eq!(windows.len(), 6);
        let max_lag = default_max_lag(s.true_mics.diameter(), s.c);
        let table = extract_measurements(
            &audio,
            &windows,
            PairingStrategy::SingleReference(0),
            max_lag,
        )
        .unwrap();
        assert_eq!(table.values().len(), 42);
        let g = predict(
            &s.true_mics,
            &s.events,
            PairingStrategy::SingleReference(0),
            s.c,
        )
        .unwrap();
        for (v, p) in table.values().iter().zip(g.iter()) {
            assert!((v - p).abs() * FS < 1.5);
        }
    }

    #[test]
    fn extraction_errors_name_the_window_and_pair() {
        let s = generate_scenario(
            &SimConfig {
                boards: 1,
                sources_per_board: 2,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let (audio, windows) = synth_recording(&s, FS, f64::INFINITY, 1).unwrap();
        let mut channels = audio.into_channels();
        let w = windows[1];
        channels[3][w.start_sample..w.end_sample()]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let audio = AudioBuffer::new(FS, channels).unwrap();
        let err =
            extract_measurements(&audio, &windows, PairingStrategy::SingleReference(0), 0.003)
                .unwrap_err();
        match err {
            Error::Extraction {
                window,
                mic,
                reference,
                source,
            } => {
                assert_eq!((window, mic, reference), (1, 3, 0));
                assert!(matches!(*source, Error::NoSignal));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn window_validation() {
        let w = |start, len| EmissionWindow {
            start_sample: start,
            length_samples: len,
            board_index: 0,
            source_index: 0,
        };
        assert!(validate_windows(&[], 100).is_err());
        assert!(validate_windows(&[w(0, 50), w(40, 50)], 200).is_err());
        assert!(validate_windows(&[w(0, 50), w(150, 60)], 200).is_err());
        assert!(validate_windows(&[w(0, 8)], 200).is_err());
        assert!(validate_windows(&[w(0, 50), w(50, 50)], 200).is_ok());
    }

    #[test]
    fn audio_buffer_checks_shape() {
        assert!(AudioBuffer::new(FS, vec![vec![0.0; 4], vec![0.0; 5]]).is_err());
        assert!(AudioBuffer::new(0.0, vec![vec![0.0; 4]]).is_err());
        assert!(AudioBuffer::new(FS, vec![]).is_err());
    }
}
