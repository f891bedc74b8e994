//! FFT-based Fourier multipliers on a uniform grid.
//!
//! The `N` samples spaced `h` apart are treated as one period of length
//! `P = N·h`; wavenumbers are `k_m = 2π m / P` with signed `m`. Plans are
//! cached per transform length.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Signed wavenumber of DFT bin `m` for `n` samples spaced `h`.
pub fn wavenumber(m: usize, n: usize, h: f64) -> f64 {
    let period = n as f64 * h;
    let signed = if m <= (n - 1) / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    };
    2.0 * std::f64::consts::PI * signed / period
}

/// Apply the Fourier multiplier `k ↦ symbol(k)` to real samples spaced `h`.
pub fn apply_multiplier<F: Fn(f64) -> f64>(values: &[f64], h: f64, symbol: F) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan(n, false).process(&mut buf);
    for (m, c) in buf.iter_mut().enumerate() {
        *c *= symbol(wavenumber(m, n, h));
    }
    plan(n, true).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Half-Laplacian multiplier `|k|` on raw periodic samples.
pub fn half_laplacian_periodic(values: &[f64], h: f64) -> Vec<f64> {
    apply_multiplier(values, h, |k| k.abs())
}

/// Poisson semigroup multiplier `e^{-t|k|}` on raw periodic samples.
pub fn poisson_periodic(values: &[f64], h: f64, t: f64) -> Vec<f64> {
    apply_multiplier(values, h, |k| (-t * k.abs()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_on_pure_mode() {
        // f = cos(kx) with k an exact grid wavenumber: |k| multiplier is exact.
        let n = 256;
        let h = 0.1;
        let period = n as f64 * h;
        let k = 2.0 * std::f64::consts::PI * 5.0 / period;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|&x| (k * x).cos()).collect();
        let lam = half_laplacian_periodic(&f, h);
        for (v, x) in lam.iter().zip(&xs) {
            assert!((v - k * (k * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let f = vec![3.5; 64];
        let lam = half_laplacian_periodic(&f, 0.3);
        for v in lam {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn poisson_preserves_mean() {
        let n = 128;
        let h = 0.2;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
        let mean: f64 = f.iter().sum::<f64>() / n as f64;
        let g = poisson_periodic(&f, h, 0.8);
        let mean_g: f64 = g.iter().sum::<f64>() / n as f64;
        assert!((mean - mean_g).abs() < 1e-12);
    }
}
