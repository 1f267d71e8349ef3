//! Independent reference computations used only by tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, ToPrimitive, Zero};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Exact pool statistics. Every f64 is an integer multiple of a power of two,
/// so the pool is rescaled to integers and all sums are exact.
pub struct ExactPool {
    n: BigInt,
    scaled: Vec<BigInt>,
    sum: BigInt,
    exp: i32,
    /// Σ (n·x_i − S)², exact.
    q: BigInt,
}

fn decompose(x: f64) -> (BigInt, i32) {
    let (mant, exp, sign) = x.integer_decode();
    (BigInt::from(mant) * i64::from(sign), i32::from(exp))
}

fn rescale(x: f64, exp: i32) -> BigInt {
    let (m, e) = decompose(x);
    m << ((e - exp) as usize)
}

impl ExactPool {
    pub fn new(values: &[f64]) -> Self {
        let exp = values.iter().map(|&v| decompose(v).1).min().unwrap();
        let scaled: Vec<BigInt> = values.iter().map(|&v| rescale(v, exp)).collect();
        let n = BigInt::from(values.len());
        let sum: BigInt = scaled.iter().sum();
        let q = scaled.iter().map(|x| { let d = &n * x - &sum; &d * &d }).sum();
        ExactPool { n, scaled, sum, exp, q }
    }

    pub fn mean(&self) -> f64 {
        let r = BigRational::new(self.sum.clone(), self.n.clone());
        r.to_f64().unwrap() * 2f64.powi(self.exp)
    }

    pub fn std(&self) -> f64 {
        // var = Q / (n² (n − 1)) in scaled units
        let n1 = &self.n - 1;
        let var = BigRational::new(self.q.clone(), &self.n * &self.n * n1);
        var.to_f64().unwrap().sqrt() * 2f64.powi(self.exp)
    }

    /// |x − μ| / σ evaluated as sqrt((n·x − S)²·(n − 1) / Q).
    pub fn z(&self, probe: f64) -> f64 {
        let min_exp = self.exp.min(decompose(probe).1);
        let shift = (self.exp - min_exp) as usize;
        let x = rescale(probe, min_exp);
        let s = &self.sum << shift;
        let q = &self.q << (2 * shift);
        let d = &self.n * x - s;
        if q.is_zero() {
            return if d.is_zero() { 0.0 } else { f64::INFINITY };
        }
        let z2 = BigRational::new(&d * &d * (&self.n - 1), q);
        z2.to_f64().unwrap().sqrt()
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }
}

/// Hann-windowed Welch PSD estimate, non-overlapping segments, DC-centered
/// (index `seg/2` is 0 Hz). Power per bin, linear.
pub fn welch_psd(samples: &[Complex64], seg: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; seg];
    let mut count = 0;
    for chunk in samples.chunks_exact(seg) {
        let mut buf: Vec<Complex64> = chunk.iter().zip(&window).map(|(z, w)| z * w).collect();
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
    }
    let mut centered = vec![0.0; seg];
    for (k, a) in acc.iter().enumerate() {
        centered[(k + seg / 2) % seg] = a / count as f64;
    }
    centered
}

/// Bin index of `freq` in a DC-centered spectrum of `seg` bins at rate `fs`.
pub fn psd_bin(freq: f64, fs: f64, seg: usize) -> usize {
    (seg as f64 / 2.0 + freq * seg as f64 / fs).round() as usize
}

/// Direct (O(N)) single-frequency correlation, referenced to sample 0.
pub fn dft_at(samples: &[Complex64], freq: f64, fs: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, z) in samples.iter().enumerate() {
        let ph = -2.0 * std::f64::consts::PI * freq * n as f64 / fs;
        acc += z * Complex64::new(ph.cos(), ph.sin());
    }
    acc / samples.len() as f64
}
