//! Biquad sections and forward-backward filtering.

use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is 1.
    pub a: [f64; 3],
}

impl Biquad {
    /// Second-order Butterworth by the bilinear transform with pre-warping.
    pub fn lowpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let n = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * n;
        Biquad { b: [b0, 2.0 * b0, b0], a: [1.0, 2.0 * (k * k - 1.0) * n, (1.0 - SQRT_2 * k + k * k) * n] }
    }

    pub fn highpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let n = 1.0 / (1.0 + SQRT_2 * k + k * k);
        Biquad { b: [n, -2.0 * n, n], a: [1.0, 2.0 * (k * k - 1.0) * n, (1.0 - SQRT_2 * k + k * k) * n] }
    }

    /// Transposed direct-form II state for a constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let g = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }

    fn run(&self, x: &[f64], z0: [f64; 2]) -> Vec<f64> {
        let [mut z1, mut z2] = z0;
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[1] * y + z2;
                z2 = self.b[2] * v - self.a[2] * y;
                y
            })
            .collect()
    }
}

/// Zero-phase filtering with odd reflection padding and steady-state initial conditions.
pub fn filtfilt(f: &Biquad, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = 9.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = f.steady_state();
    let fwd = f.run(&ext, [zi[0] * ext[0], zi[1] * ext[0]]);
    let rev: Vec<f64> = fwd.iter().rev().copied().collect();
    let back = f.run(&rev, [zi[0] * rev[0], zi[1] * rev[0]]);
    back.iter().rev().skip(pad).take(n).copied().collect()
}
