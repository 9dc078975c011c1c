//! HTK-scale triangular mel filterbank.

/// mel(f) = 2595·log10(1 + f/700)
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One filter, stored as a contiguous run of bin weights starting at `start`.
#[derive(Debug, Clone, PartialEq)]
struct MelFilter {
    start: usize,
    weights: Vec<f64>,
}

/// Sparse `n_mels × (n_fft/2 + 1)` filterbank. Every row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_bins: usize,
    filters: Vec<MelFilter>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    /// Builds `n_mels` triangles with centers uniformly spaced in mel between
    /// `fmin_hz` and `fmax_hz`, over the non-negative bins of an `n_fft` FFT.
    ///
    /// A triangle narrower than the bin spacing can contain no bin at all; such
    /// a filter collapses onto the single bin nearest its center.
    pub fn new(sample_rate_hz: u32, n_fft: usize, n_mels: usize, fmin_hz: f64, fmax_hz: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate_hz as f64 / n_fft as f64;
        let (mel_lo, mel_hi) = (hz_to_mel(fmin_hz), hz_to_mel(fmax_hz));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let filters = edges
            .windows(3)
            .map(|w| {
                let (lo, center, hi) = (w[0], w[1], w[2]);
                let first = ((lo / bin_hz).floor() as usize).min(n_bins - 1);
                let last = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
                let mut weights: Vec<f64> = (first..=last)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let (mut start, mut sum) = (first, weights.iter().sum::<f64>());
                if sum <= 0.0 {
                    start = ((center / bin_hz).round() as usize).min(n_bins - 1);
                    weights = vec![1.0];
                    sum = 1.0;
                }
                // trim zero ends
                let lead = weights.iter().take_while(|&&w| w == 0.0).count();
                let trail = weights.iter().rev().take_while(|&&w| w == 0.0).count();
                let weights: Vec<f64> = weights[lead..weights.len() - trail]
                    .iter()
                    .map(|w| w / sum)
                    .collect();
                MelFilter {
                    start: start + lead,
                    weights,
                }
            })
            .collect();

        Self {
            n_bins,
            filters,
            centers_hz: edges[1..=n_mels].to_vec(),
        }
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Weight of `bin` in filter `band`.
    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        let f = &self.filters[band];
        bin.checked_sub(f.start)
            .and_then(|offset| f.weights.get(offset))
            .copied()
            .unwrap_or(0.0)
    }

    /// Dense `n_mels × n_bins` matrix, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.filters
            .iter()
            .map(|f| {
                let mut row = vec![0.0; self.n_bins];
                row[f.start..f.start + f.weights.len()].copy_from_slice(&f.weights);
                row
            })
            .collect()
    }

    /// Projects a power spectrum (`n_bins` values) onto the bands, writing into `out`.
    pub fn apply_into(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (o, f) in out.iter_mut().zip(&self.filters) {
            *o = f
                .weights
                .iter()
                .zip(&power[f.start..f.start + f.weights.len()])
                .map(|(w, p)| w * p)
                .sum();
        }
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_mels()];
        self.apply_into(power, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> MelFilterbank {
        MelFilterbank::new(48_000, 512, 256, 20.0, 20_000.0)
    }

    #[test]
    fn mel_formula_values() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.1728).abs() < 1e-3);
        for f in [20.0, 440.0, 8000.0, 20_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9 * f);
        }
    }

    #[test]
    fn shape_is_256_by_257() {
        let dense = default_bank().to_dense();
        assert_eq!(dense.len(), 256);
        assert!(dense.iter().all(|row| row.len() == 257));
    }

    #[test]
    fn rows_sum_to_one() {
        for row in default_bank().to_dense() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "row sum {s}");
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn every_bin_in_range_is_covered() {
        let bank = default_bank();
        let bin_hz = 48_000.0 / 512.0;
        for bin in 0..257 {
            let f = bin as f64 * bin_hz;
            if f > 20.0 && f < 20_000.0 {
                assert!(
                    (0..256).any(|m| bank.weight(m, bin) > 0.0),
                    "bin {bin} ({f} Hz) uncovered"
                );
            }
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let bank = MelFilterbank::new(48_000, 1024, 64, 20.0, 20_000.0);
        let power: Vec<f64> = (0..513).map(|i| ((i * 37) % 101) as f64).collect();
        let sparse = bank.apply(&power);
        for (m, row) in bank.to_dense().iter().enumerate() {
            let dense: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            assert!((dense - sparse[m]).abs() < 1e-9);
        }
    }
}
