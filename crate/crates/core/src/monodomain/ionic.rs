//! Two-variable excitable surrogate: normalized voltage `v ∈ [0, 1]` and a recovery gate `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IonicModelParams {
    /// Inward current time constant, ms. Sets the upstroke rate and with it the CV.
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    /// Normalized voltage at which the gate switches.
    pub v_gate: f64,
    pub rest_mv: f64,
    pub amplitude_mv: f64,
}

impl Default for IonicModelParams {
    fn default() -> Self {
        IonicModelParams { tau_in: 0.107, tau_out: 6.0, tau_open: 120.0, tau_close: 150.0, v_gate: 0.13, rest_mv: -85.0, amplitude_mv: 100.0 }
    }
}

impl IonicModelParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.tau_in, self.tau_out, self.tau_open, self.tau_close, self.amplitude_mv];
        if pos.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("ionic time constants and amplitude must be positive".into()));
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) {
            return Err(Error::Config(format!("v_gate {} outside (0, 1)", self.v_gate)));
        }
        if self.tau_in * 4.0 >= self.tau_out {
            return Err(Error::Config("tau_out must exceed 4·tau_in for an excitable rest state".into()));
        }
        Ok(())
    }

    pub fn to_mv(&self, v: f64) -> f64 {
        self.rest_mv + self.amplitude_mv * v
    }

    pub fn from_mv(&self, mv: f64) -> f64 {
        (mv - self.rest_mv) / self.amplitude_mv
    }

    /// Ionic current dv/dt (1/ms).
    #[inline]
    pub fn current(&self, v: f64, h: f64) -> f64 {
        h * v * v * (1.0 - v) / self.tau_in - v / self.tau_out
    }

    /// Explicit gate update over `dt`.
    #[inline]
    pub fn gate(&self, v: f64, h: f64, dt: f64) -> f64 {
        if v < self.v_gate {
            h + dt * (1.0 - h) / self.tau_open
        } else {
            h - dt * h / self.tau_close
        }
    }

    /// Single-cell action potential in mV, sampled every `dt` for `duration` ms, after a
    /// stimulus of `stim` (1/ms) held for 1 ms starting at `lead` ms.
    pub fn single_cell(&self, dt: f64, duration: f64, lead: f64, stim: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(dt > 0.0) || !(duration > 0.0) || dt > 0.1 * self.tau_in {
            return Err(Error::Config(format!("single-cell step {dt} ms must be positive and below {}", 0.1 * self.tau_in)));
        }
        let n = (duration / dt).round() as usize;
        let (mut v, mut h) = (0.0f64, 1.0f64);
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.to_mv(v));
        for k in 0..n {
            let t = k as f64 * dt;
            let i_stim = if t >= lead && t < lead + 1.0 { stim } else { 0.0 };
            let dv = self.current(v, h) + i_stim;
            h = self.gate(v, h, dt);
            v = (v + dt * dv).clamp(0.0, 1.0);
            out.push(self.to_mv(v));
        }
        Ok(out)
    }
}
