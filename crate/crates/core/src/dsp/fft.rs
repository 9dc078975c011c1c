//! Iterative radix-2 decimation-in-time FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex sequence whose length is a power of two (at least 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(bins: Vec<Complex64>) -> Result<Self> {
        if bins.len() < 2 || !bins.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(bins.len()));
        }
        Ok(Self { bins })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn into_bins(self) -> Vec<Complex64> {
        self.bins
    }
}

/// Precomputed bit-reversal table and twiddles for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    bitrev: Vec<u32>,
    // twiddles[k] = exp(-2πik/n), k < n/2
    twiddles: Vec<Complex64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| i.reverse_bits() >> (32 - bits))
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Ok(Self {
            n,
            bitrev,
            twiddles,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform. Panics if `data.len()` differs from the plan size.
    pub fn process(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n, "buffer length does not match FFT plan");
        for (i, &j) in self.bitrev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let stride = self.n / size;
            for block in data.chunks_exact_mut(size) {
                let (lo, hi) = block.split_at_mut(half);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = self.twiddles[k * stride] * *b;
                    *b = *a - t;
                    *a += t;
                }
            }
            size *= 2;
        }
    }

    /// In-place inverse transform, including the 1/n scale.
    pub fn process_inverse(&self, data: &mut [Complex64]) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.process(data);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v = v.conj() * scale;
        }
    }
}

/// X[k] = Σ x[n]·exp(-2πi·kn/N).
pub fn fft(x: &ComplexSpectrum) -> ComplexSpectrum {
    let plan = FftPlan::new(x.len()).expect("ComplexSpectrum length is a power of two");
    let mut bins = x.bins.clone();
    plan.process(&mut bins);
    ComplexSpectrum { bins }
}

pub fn ifft(x: &ComplexSpectrum) -> ComplexSpectrum {
    let plan = FftPlan::new(x.len()).expect("ComplexSpectrum length is a power of two");
    let mut bins = x.bins.clone();
    plan.process_inverse(&mut bins);
    ComplexSpectrum { bins }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let angle = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                        v * Complex64::new(angle.cos(), angle.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_signal_goes_to_dc() {
        let out = fft(&ComplexSpectrum::from_real(&[1.0; 4]).unwrap());
        assert_eq!(out.bins(), &[c(4.0), c(0.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn impulse_is_flat() {
        let out = fft(&ComplexSpectrum::from_real(&[1.0, 0.0, 0.0, 0.0]).unwrap());
        assert_eq!(out.bins(), &[c(1.0); 4]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            ComplexSpectrum::from_real(&[1.0; 6]),
            Err(Error::NotPowerOfTwo(6))
        ));
        assert!(ComplexSpectrum::from_real(&[1.0]).is_err());
        assert!(FftPlan::new(0).is_err());
    }

    proptest! {
        #[test]
        fn matches_naive_dft(
            log_n in 1u32..9,
            seed in proptest::collection::vec(-1.0f64..1.0, 512),
        ) {
            let n = 1usize << log_n;
            let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(seed[i], seed[511 - i])).collect();
            let fast = fft(&ComplexSpectrum::new(x.clone()).unwrap());
            for (a, b) in fast.bins().iter().zip(naive_dft(&x)) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }

        #[test]
        fn inverse_recovers_input(values in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let x = ComplexSpectrum::from_real(&values).unwrap();
            let back = ifft(&fft(&x));
            for (a, b) in back.bins().iter().zip(x.bins()) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
