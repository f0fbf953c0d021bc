//! Fourier-series modulation waveforms and the perturbations applied to them.
//!
//! A waveform is stored as the coefficient list `[a0, a1, ..., aN]` of a real
//! cosine series over a base period `tau` and evaluates to
//!
//! ```text
//! f(t) = 2π · (a0 + Σ_{n=1..N} 2 aₙ cos(2πnt/τ)) / (2N + 1)   [rad/μs]
//! ```
//!
//! so coefficients read directly in units of 2π×MHz. The represented function
//! is real, even in `t` and `tau`-periodic by construction, which is what the
//! dual-rail PT argument requires.

use std::f64::consts::TAU as TWO_PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Blockade, DriveMode, SystemConfig};

/// Real cosine-series waveform with base period `tau` (μs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierWaveform {
    coeffs: Vec<f64>,
    tau: f64,
}

impl FourierWaveform {
    /// Build a waveform from coefficients `[a0, ..., aN]` (units of 2π×MHz)
    /// and base period `tau` in μs.
    pub fn new(coeffs: Vec<f64>, tau: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidWaveform("empty coefficient list".into()));
        }
        if coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite coefficient".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidWaveform(format!("base period tau = {tau} must be positive")));
        }
        Ok(Self { coeffs, tau })
    }

    /// The all-zero waveform (single zero coefficient).
    pub fn zero(tau: f64) -> Self {
        Self { coeffs: vec![0.0], tau }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Highest harmonic index N.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0.0)
    }

    /// Evaluate the series at time `t` (μs); returns rad/μs.
    ///
    /// Exact analytic evaluation, no sampling grid. Total over all finite `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let base = TWO_PI * t / self.tau;
        let mut acc = self.coeffs[0];
        for (n, &a) in self.coeffs.iter().enumerate().skip(1) {
            acc += 2.0 * a * (base * n as f64).cos();
        }
        TWO_PI * acc / (2 * self.order() + 1) as f64
    }

    /// Peak of |f| sampled on a uniform grid over one period.
    pub fn peak_abs(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let t = self.tau * (i as f64 / samples as f64 - 0.5);
                self.eval(t).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Same waveform with every coefficient negated.
    pub fn negated(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|a| -a).collect(), tau: self.tau }
    }

    /// Same waveform with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|a| a * factor).collect(), tau: self.tau }
    }

    /// Add a constant offset of `shift` rad/μs to the evaluated function by
    /// adjusting `a0` (the series normalization makes this exact).
    pub fn offset(&self, shift: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += shift * (2 * self.order() + 1) as f64 / TWO_PI;
        Self { coeffs, tau: self.tau }
    }
}

/// Evaluate waveform `w` at time `t` μs; returns rad/μs.
pub fn eval_waveform(w: &FourierWaveform, t: f64) -> f64 {
    w.eval(t)
}

/// A (Rabi, detuning) waveform pair sharing one base period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    pub rabi: FourierWaveform,
    pub detuning: FourierWaveform,
}

impl PulsePair {
    pub fn new(rabi: FourierWaveform, detuning: FourierWaveform) -> Result<Self> {
        if rabi.tau() != detuning.tau() {
            return Err(Error::InvalidWaveform(format!(
                "Rabi and detuning base periods differ: {} vs {}",
                rabi.tau(),
                detuning.tau()
            )));
        }
        Ok(Self { rabi, detuning })
    }

    pub fn tau(&self) -> f64 {
        self.rabi.tau()
    }
}

/// PT partner of a pulse pair: the Rabi waveform is kept bit-exactly, the
/// detuning waveform has every coefficient negated. An involution.
pub fn pt_partner(p: &PulsePair) -> PulsePair {
    PulsePair { rabi: p.rabi.clone(), detuning: p.detuning.negated() }
}

/// Which drives a perturbation acts on.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Buffer,
    Qubits,
    Both,
}

/// A controlled deviation from an ideal drive configuration.
///
/// Sign convention for the buffer detuning shift `delta`: rail 0 sees
/// `−Δ1 → −Δ1 − δ` and rail 1 sees `Δ1 → Δ1 + δ`, i.e. the stored detuning
/// waveform is offset by `+δ` and both rails keep their sign assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Multiply the targeted Rabi waveform(s) by `1 + epsilon`.
    RabiScale { epsilon: f64, target: Target },
    /// DC shift of a detuning, `delta` in rad/μs.
    DetuningOffset { delta: f64, target: Target },
    /// Replace both blockade strengths.
    BlockadeOverride { b0: Blockade, b1: Blockade },
    /// Scale the batch-2 Rabi drives by `1 + epsilon` (sequential mode only).
    BatchMismatch { epsilon: f64 },
}

impl Perturbation {
    fn validate(&self) -> Result<()> {
        let finite = match self {
            Perturbation::RabiScale { epsilon, .. } => epsilon.is_finite(),
            Perturbation::DetuningOffset { delta, .. } => delta.is_finite(),
            // infinite blockade is the distinguished ideal value
            Perturbation::BlockadeOverride { .. } => true,
            Perturbation::BatchMismatch { epsilon } => epsilon.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidPerturbation(format!("non-finite magnitude in {self:?}")))
        }
    }
}

/// Apply a perturbation to a configuration, returning the perturbed copy.
pub fn apply_perturbation(config: &SystemConfig, pert: &Perturbation) -> Result<SystemConfig> {
    pert.validate()?;
    let mut out = config.clone();
    match pert {
        Perturbation::RabiScale { epsilon, target } => {
            let factor = 1.0 + epsilon;
            if matches!(target, Target::Buffer | Target::Both) {
                out.buffer_pulse.rabi = out.buffer_pulse.rabi.scaled(factor);
            }
            if matches!(target, Target::Qubits | Target::Both) {
                out.qubit_pulse.rabi = out.qubit_pulse.rabi.scaled(factor);
            }
        }
        Perturbation::DetuningOffset { delta, target } => match target {
            Target::Buffer => {
                out.buffer_pulse.detuning = out.buffer_pulse.detuning.offset(*delta);
            }
            Target::Qubits => {
                out.qubit_detuning_shift += delta;
            }
            Target::Both => {
                out.buffer_pulse.detuning = out.buffer_pulse.detuning.offset(*delta);
                out.qubit_detuning_shift += delta;
            }
        },
        Perturbation::BlockadeOverride { b0, b1 } => {
            out.blockade = [*b0, *b1];
        }
        Perturbation::BatchMismatch { epsilon } => {
            if out.mode != DriveMode::Sequential {
                return Err(Error::InvalidPerturbation(
                    "batch_mismatch applies to sequential mode only".into(),
                ));
            }
            out.batch2_rabi_scale *= 1.0 + epsilon;
        }
    }
    out.validate()?;
    Ok(out)
}

/// Raised-cosine on/off envelope, symmetric about t = 0 so that evenness of
/// the enveloped drives is preserved. `ramp = 0` disables it.
pub fn raised_cosine_envelope(t: f64, tau: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 {
        return 1.0;
    }
    let edge = tau / 2.0;
    let s = edge - t.abs();
    if s <= 0.0 {
        0.0
    } else if s >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * s / ramp).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::chain_config;

    const FIG2_OMEGA1: [f64; 9] =
        [129.82, -33.36, -11.16, 5.33, -17.69, -1.62, -8.79, 4.57, -2.18];

    #[test]
    fn constant_term_evaluates_to_two_pi() {
        let w = FourierWaveform::new(vec![1.0], 0.25).unwrap();
        assert!((w.eval(0.1) - TWO_PI).abs() < 1e-12);
    }

    #[test]
    fn published_buffer_rabi_at_origin() {
        let w = FourierWaveform::new(FIG2_OMEGA1.to_vec(), 0.25).unwrap();
        // direct series summation: 2π·(129.82 + 2·(−64.90))/17
        let tail: f64 = FIG2_OMEGA1[1..].iter().sum();
        let expected = TWO_PI * (FIG2_OMEGA1[0] + 2.0 * tail) / 17.0;
        assert!((w.eval(0.0) - expected).abs() < 1e-12);
        assert!((w.eval(0.0) - 7.39e-3).abs() < 1e-4);
    }

    #[test]
    fn evenness_at_fixed_offset() {
        let w = FourierWaveform::new(vec![0.3, -1.2, 0.7], 0.25).unwrap();
        assert!((w.eval(0.05) - w.eval(-0.05)).abs() <= 1e-12);
    }

    #[test]
    fn pt_partner_fixes_zero_detuning() {
        let p = PulsePair::new(
            FourierWaveform::new(vec![1.0, 2.0], 0.25).unwrap(),
            FourierWaveform::zero(0.25),
        )
        .unwrap();
        assert_eq!(pt_partner(&p), p);
    }

    #[test]
    fn pt_partner_negates_detuning_coefficients() {
        let p = PulsePair::new(
            FourierWaveform::new(vec![1.0], 0.25).unwrap(),
            FourierWaveform::new(vec![-66.80, 3.86], 0.25).unwrap(),
        )
        .unwrap();
        let q = pt_partner(&p);
        assert_eq!(q.detuning.coeffs()[0], 66.80);
        assert_eq!(q.rabi, p.rabi);
    }

    #[test]
    fn zero_magnitude_perturbations_are_identities() {
        let cfg = chain_config();
        for pert in [
            Perturbation::RabiScale { epsilon: 0.0, target: Target::Both },
            Perturbation::DetuningOffset { delta: 0.0, target: Target::Buffer },
            Perturbation::DetuningOffset { delta: 0.0, target: Target::Qubits },
        ] {
            assert_eq!(apply_perturbation(&cfg, &pert).unwrap(), cfg);
        }
    }

    #[test]
    fn rabi_scale_multiplies_all_lists() {
        let cfg = chain_config();
        let out = apply_perturbation(
            &cfg,
            &Perturbation::RabiScale { epsilon: 0.01, target: Target::Both },
        )
        .unwrap();
        for (a, b) in cfg
            .buffer_pulse
            .rabi
            .coeffs()
            .iter()
            .zip(out.buffer_pulse.rabi.coeffs())
        {
            assert_eq!(*b, a * 1.01);
        }
        for (a, b) in cfg
            .qubit_pulse
            .rabi
            .coeffs()
            .iter()
            .zip(out.qubit_pulse.rabi.coeffs())
        {
            assert_eq!(*b, a * 1.01);
        }
        assert_eq!(out.buffer_pulse.detuning, cfg.buffer_pulse.detuning);
    }

    #[test]
    fn batch_mismatch_requires_sequential_mode() {
        let mut cfg = chain_config();
        assert!(matches!(
            apply_perturbation(&cfg, &Perturbation::BatchMismatch { epsilon: 1e-3 }),
            Err(Error::InvalidPerturbation(_))
        ));
        cfg.mode = DriveMode::Sequential;
        let out = apply_perturbation(&cfg, &Perturbation::BatchMismatch { epsilon: 1e-3 }).unwrap();
        assert!((out.batch2_rabi_scale - 1.001).abs() < 1e-15);
        // batch 1 drives untouched
        assert_eq!(out.buffer_pulse, cfg.buffer_pulse);
        assert_eq!(out.qubit_pulse, cfg.qubit_pulse);
    }

    #[test]
    fn detuning_offset_is_exact_on_the_evaluated_function() {
        let w = FourierWaveform::new(FIG2_OMEGA1.to_vec(), 0.25).unwrap();
        let shifted = w.offset(0.37);
        for i in 0..7 {
            let t = -0.12 + 0.04 * i as f64;
            assert!((shifted.eval(t) - (w.eval(t) + 0.37)).abs() < 1e-11);
        }
    }

    #[test]
    fn envelope_limits() {
        assert_eq!(raised_cosine_envelope(0.0, 0.25, 0.0), 1.0);
        assert_eq!(raised_cosine_envelope(0.125, 0.25, 0.02), 0.0);
        assert_eq!(raised_cosine_envelope(-0.125, 0.25, 0.02), 0.0);
        assert!((raised_cosine_envelope(0.0, 0.25, 0.02) - 1.0).abs() < 1e-15);
        // symmetric ramp
        let a = raised_cosine_envelope(0.12, 0.25, 0.02);
        let b = raised_cosine_envelope(-0.12, 0.25, 0.02);
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 1.0);
    }
}
