//! Triangular mel filterbank over one-sided FFT bins.
//!
//! The outermost triangles are widened by one grid step past the frequency
//! range so the DC and Nyquist bins sit on a rising/falling edge instead of
//! exactly at a zero crossing — every bin in [fmin, fmax] then carries
//! positive weight in at least one filter. At coarse window sizes a narrow
//! low-frequency triangle can still fall between two FFT bins; such a filter
//! falls back to the single bin nearest its center so no row is ever empty.

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub f_bins: usize,
    /// `n_mels x f_bins`, row-major.
    pub weights: Vec<f64>,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, f_bins: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        assert!(n_mels > 0 && f_bins > 1);
        assert!(fmin >= 0.0 && fmax > fmin);
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let step = (mel_hi - mel_lo) / (n_mels + 1) as f64;
        let grid: Vec<f64> = (0..n_mels + 2).map(|i| mel_lo + step * i as f64).collect();

        // bin k sits at k * sr / n_fft, with n_fft = 2 * (f_bins - 1)
        let bin_hz = sample_rate as f64 / (2 * (f_bins - 1)) as f64;
        let bin_mels: Vec<f64> = (0..f_bins).map(|k| hz_to_mel(k as f64 * bin_hz)).collect();

        let mut weights = vec![0.0f64; n_mels * f_bins];
        for m in 0..n_mels {
            let left = grid[m] - if m == 0 { step } else { 0.0 };
            let center = grid[m + 1];
            let right = grid[m + 2] + if m == n_mels - 1 { step } else { 0.0 };
            let row = &mut weights[m * f_bins..(m + 1) * f_bins];
            for (k, &bm) in bin_mels.iter().enumerate() {
                if bm > left && bm <= center {
                    row[k] = (bm - left) / (center - left);
                } else if bm > center && bm < right {
                    row[k] = (right - bm) / (right - center);
                }
            }
            if row.iter().all(|&w| w == 0.0) {
                let nearest = bin_mels
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1 - center).abs().partial_cmp(&(b.1 - center).abs()).unwrap()
                    })
                    .map(|(k, _)| k)
                    .unwrap();
                row[nearest] = 1.0;
            }
        }

        MelFilterbank { n_mels, f_bins, weights, fmin, fmax }
    }

    /// Applies the bank to one power-spectrum column.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        assert_eq!(power.len(), self.f_bins);
        (0..self.n_mels)
            .map(|m| {
                let row = &self.weights[m * self.f_bins..(m + 1) * self.f_bins];
                row.iter().zip(power).map(|(w, p)| w * p).sum()
            })
            .collect()
    }

    /// The filter with the largest response at `hz`.
    pub fn band_for(&self, hz: f64, sample_rate: u32) -> usize {
        let bin_hz = sample_rate as f64 / (2 * (self.f_bins - 1)) as f64;
        let k = ((hz / bin_hz).round() as usize).min(self.f_bins - 1);
        (0..self.n_mels)
            .max_by(|&a, &b| {
                self.weights[a * self.f_bins + k]
                    .partial_cmp(&self.weights[b * self.f_bins + k])
                    .unwrap()
            })
            .unwrap()
    }
}
