//! Log-Mel filterbank feature extraction.
//!
//! The paper fixes only the feature dimensionality (40 mel bins); the
//! 25 ms window / 10 ms hop and the absence of mean normalization are the
//! conventional choices and are configurable here.

pub mod wav;

use crate::error::{CoreError, Result};
use crate::numerics::{ParamStore, Tensor};

#[derive(Debug, Clone)]
pub struct FbankConfig {
    pub sample_rate: u32,
    pub frame_length_ms: f64,
    pub frame_hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
    /// Per-chunk cepstral mean normalization, off by default.
    pub cmn: bool,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            sample_rate: 16000,
            frame_length_ms: 25.0,
            frame_hop_ms: 10.0,
            n_fft: 512,
            n_mels: 40,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
            cmn: false,
        }
    }
}

impl FbankConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_length_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_hop_ms / 1000.0).round() as usize
    }

    pub fn hop_seconds(&self) -> f64 {
        self.frame_hop_ms / 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels < 1 {
            return Err(CoreError::Config("n_mels must be >= 1".into()));
        }
        if !(self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return Err(CoreError::Config(format!(
                "need f_min < f_max <= nyquist, got {}..{} at {} Hz",
                self.f_min, self.f_max, self.sample_rate
            )));
        }
        if self.frame_hop_ms > self.frame_length_ms {
            return Err(CoreError::Config("hop must not exceed frame length".into()));
        }
        if self.n_fft < self.frame_len() {
            return Err(CoreError::Config(format!(
                "n_fft {} shorter than frame of {} samples",
                self.n_fft,
                self.frame_len()
            )));
        }
        Ok(())
    }
}

/// A T x F feature matrix with its frame metadata.
#[derive(Debug, Clone)]
pub struct FeatureChunk {
    pub features: Tensor,
    pub hop_seconds: f64,
    pub start_frame: usize,
    pub source_id: String,
}

impl FeatureChunk {
    pub fn n_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.features.cols()
    }

    /// Persist into the shared tensor container, one feature record plus
    /// frame metadata per chunk.
    pub fn dump(&self, store: &mut ParamStore) {
        let id = &self.source_id;
        store.insert(format!("{}.feats", id), self.features.clone());
        store.insert(format!("{}.hop_s", id), Tensor::scalar(self.hop_seconds));
        store.insert(
            format!("{}.start_frame", id),
            Tensor::scalar(self.start_frame as f64),
        );
    }

    pub fn load(store: &ParamStore, id: &str) -> Result<FeatureChunk> {
        let features = store
            .get(&format!("{}.feats", id))
            .ok_or_else(|| CoreError::Checkpoint(format!("no feature record for '{}'", id)))?
            .clone();
        let hop_seconds = store
            .get(&format!("{}.hop_s", id))
            .map(|t| t.data()[0])
            .unwrap_or(0.01);
        let start_frame = store
            .get(&format!("{}.start_frame", id))
            .map(|t| t.data()[0] as usize)
            .unwrap_or(0);
        Ok(FeatureChunk {
            features,
            hop_seconds,
            start_frame,
            source_id: id.to_string(),
        })
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, one row per filter over n_fft/2 + 1 bins,
/// peaks normalized to 1.
pub fn build_mel_filterbank(cfg: &FbankConfig) -> Result<Tensor> {
    cfg.validate()?;
    let n_bins = cfg.n_fft / 2 + 1;
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max);
    // n_mels + 2 edge points, uniformly spaced on the mel scale
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut bank = Tensor::zeros(vec![cfg.n_mels, n_bins]);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            if w > 0.0 {
                any = true;
            }
            bank.set(m, b, w);
        }
        if !any {
            return Err(CoreError::Config(format!(
                "mel filter {} is empty: n_mels {} too large for n_fft {} resolution",
                m, cfg.n_mels, cfg.n_fft
            )));
        }
    }
    Ok(bank)
}

/// Center frequencies (Hz) of each mel filter, in filter order.
pub fn filter_centers(cfg: &FbankConfig) -> Vec<f64> {
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max);
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

// In-place iterative radix-2 FFT; frames fit in 512-point transforms so
// this stays fast enough without an external FFT dependency.
fn fft_pow2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit reversal
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Power spectrum |DFT|^2 over bins 0..n/2 of a zero-padded frame.
fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let n_bins = n_fft / 2 + 1;
    if n_fft.is_power_of_two() {
        let mut re = vec![0.0; n_fft];
        let mut im = vec![0.0; n_fft];
        re[..frame.len()].copy_from_slice(frame);
        fft_pow2(&mut re, &mut im);
        (0..n_bins).map(|b| re[b] * re[b] + im[b] * im[b]).collect()
    } else {
        // direct O(n^2) DFT fallback for odd sizes
        (0..n_bins)
            .map(|b| {
                let w = -2.0 * std::f64::consts::PI * b as f64 / n_fft as f64;
                let (mut sr, mut si) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    sr += x * (w * t as f64).cos();
                    si += x * (w * t as f64).sin();
                }
                sr * sr + si * si
            })
            .collect()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of frames produced for a waveform of `len` samples.
pub fn frame_count(len: usize, cfg: &FbankConfig) -> usize {
    let frame = cfg.frame_len();
    if len < frame {
        0
    } else {
        1 + (len - frame) / cfg.hop_len()
    }
}

/// log(max(mel' |DFT|^2, floor)) features with a Hann window per frame.
pub fn compute_fbank(wave: &[f64], cfg: &FbankConfig) -> Result<FeatureChunk> {
    cfg.validate()?;
    let frame_len = cfg.frame_len();
    let hop = cfg.hop_len();
    if wave.is_empty() {
        return Err(CoreError::InvalidInput("empty waveform".into()));
    }
    if wave.len() < frame_len {
        return Err(CoreError::InvalidInput(format!(
            "waveform of {} samples is shorter than one {}-sample frame",
            wave.len(),
            frame_len
        )));
    }
    let t_frames = frame_count(wave.len(), cfg);
    let bank = build_mel_filterbank(cfg)?;
    let window = hann(frame_len);
    let n_bins = cfg.n_fft / 2 + 1;
    let mut feats = Tensor::zeros(vec![t_frames, cfg.n_mels]);
    let mut frame = vec![0.0; frame_len];
    for t in 0..t_frames {
        let off = t * hop;
        for i in 0..frame_len {
            frame[i] = wave[off + i] * window[i];
        }
        let power = power_spectrum(&frame, cfg.n_fft);
        for m in 0..cfg.n_mels {
            let mut e = 0.0;
            for b in 0..n_bins {
                e += bank.at(m, b) * power[b];
            }
            feats.set(t, m, e.max(cfg.log_floor).ln());
        }
    }
    if cfg.cmn {
        for m in 0..cfg.n_mels {
            let mu: f64 = (0..t_frames).map(|t| feats.at(t, m)).sum::<f64>() / t_frames as f64;
            for t in 0..t_frames {
                let v = feats.at(t, m) - mu;
                feats.set(t, m, v);
            }
        }
    }
    Ok(FeatureChunk {
        features: feats,
        hop_seconds: cfg.hop_seconds(),
        start_frame: 0,
        source_id: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_hits_the_log_floor() {
        let cfg = FbankConfig::default();
        let wave = vec![0.0; 16000];
        let out = compute_fbank(&wave, &cfg).unwrap();
        let floor = 1e-10f64.ln();
        assert!(out.features.data().iter().all(|&v| (v - floor).abs() < 1e-12));
    }

    #[test]
    fn one_second_gives_98_frames() {
        let cfg = FbankConfig::default();
        assert_eq!(frame_count(16000, &cfg), 98);
        let wave: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.01).sin() * 0.3).collect();
        let out = compute_fbank(&wave, &cfg).unwrap();
        assert_eq!(out.features.rows(), 98);
        assert_eq!(out.features.cols(), 40);
    }

    #[test]
    fn doubling_amplitude_adds_log4() {
        let cfg = FbankConfig::default();
        let wave: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin() * 0.2)
            .collect();
        let doubled: Vec<f64> = wave.iter().map(|v| v * 2.0).collect();
        let a = compute_fbank(&wave, &cfg).unwrap();
        let b = compute_fbank(&doubled, &cfg).unwrap();
        let floor = 1e-10f64.ln();
        let mut checked = 0;
        for (x, y) in a.features.data().iter().zip(b.features.data()) {
            // scaling identity only holds where neither side is floored
            if *x > floor + 2.0 && *y > floor + 2.0 {
                assert!((y - x - 4.0f64.ln()).abs() < 1e-9, "{} -> {}", x, y);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn filterbank_rows_positive_and_centers_increasing() {
        let cfg = FbankConfig::default();
        let bank = build_mel_filterbank(&cfg).unwrap();
        for m in 0..cfg.n_mels {
            let s: f64 = (0..bank.cols()).map(|b| bank.at(m, b)).sum();
            assert!(s > 0.0);
        }
        let centers = filter_centers(&cfg);
        for w in centers.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn sine_at_center_frequency_peaks_at_that_filter() {
        let cfg = FbankConfig::default();
        let centers = filter_centers(&cfg);
        for &m in &[5usize, 15, 25, 35] {
            let f = centers[m];
            let wave: Vec<f64> = (0..8000)
                .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin() * 0.5)
                .collect();
            let out = compute_fbank(&wave, &cfg).unwrap();
            // average energy per filter over all frames
            let mut best = (0usize, f64::NEG_INFINITY);
            for fm in 0..cfg.n_mels {
                let e: f64 = (0..out.features.rows()).map(|t| out.features.at(t, fm)).sum();
                if e > best.1 {
                    best = (fm, e);
                }
            }
            assert_eq!(best.0, m, "sine at {:.1} Hz peaked at filter {}", f, best.0);
        }
    }

    #[test]
    fn hop_shift_moves_rows_by_one() {
        let cfg = FbankConfig::default();
        let hop = cfg.hop_len();
        let wave: Vec<f64> = (0..16000)
            .map(|i| {
                (2.0 * std::f64::consts::PI * 523.0 * i as f64 / 16000.0).sin() * 0.4
                    + (2.0 * std::f64::consts::PI * 1307.0 * i as f64 / 16000.0).sin() * 0.1
            })
            .collect();
        let shifted = wave[hop..].to_vec();
        let a = compute_fbank(&wave, &cfg).unwrap();
        let b = compute_fbank(&shifted, &cfg).unwrap();
        for t in 0..b.features.rows().min(a.features.rows() - 1) {
            for m in 0..cfg.n_mels {
                assert!(
                    (a.features.at(t + 1, m) - b.features.at(t, m)).abs() < 1e-9,
                    "row {} mel {}",
                    t,
                    m
                );
            }
        }
    }

    #[test]
    fn deterministic() {
        let cfg = FbankConfig::default();
        let wave: Vec<f64> = (0..4800).map(|i| ((i * i) as f64).sin() * 0.1).collect();
        let a = compute_fbank(&wave, &cfg).unwrap();
        let b = compute_fbank(&wave, &cfg).unwrap();
        assert_eq!(a.features.data(), b.features.data());
    }

    #[test]
    fn too_short_wave_is_an_error() {
        let cfg = FbankConfig::default();
        assert!(compute_fbank(&[0.0; 10], &cfg).is_err());
        assert!(compute_fbank(&[], &cfg).is_err());
    }

    #[test]
    fn overly_fine_filterbank_rejected() {
        let cfg = FbankConfig {
            n_mels: 400,
            n_fft: 512,
            ..FbankConfig::default()
        };
        assert!(build_mel_filterbank(&cfg).is_err());
    }

    #[test]
    fn fft_matches_naive_dft() {
        let frame: Vec<f64> = (0..64).map(|i| ((i * 37 % 13) as f64 - 6.0) / 6.0).collect();
        let fast = power_spectrum(&frame, 64);
        for (b, &p) in fast.iter().enumerate() {
            let w = -2.0 * std::f64::consts::PI * b as f64 / 64.0;
            let (mut sr, mut si) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                sr += x * (w * t as f64).cos();
                si += x * (w * t as f64).sin();
            }
            assert!((p - (sr * sr + si * si)).abs() < 1e-9);
        }
    }
}
