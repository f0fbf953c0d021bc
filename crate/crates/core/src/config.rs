//! Structured-text run configuration: parsing, validation, unit conversion
//! and canonical serialization.
//!
//! One self-describing TOML document holds everything a run needs; command
//! line flags only override scalars. Frequencies in the file are expressed
//! as multiples of 2π×MHz (the natural scale of the waveform coefficient
//! lists) and are converted to angular rad/μs exactly once at load time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{EtaMode, ReadoutModel};
use crate::model::{Blockade, DriveMode, Layout, SystemConfig};
use crate::propagator::{IntegratorSettings, Method, ORACLE_STEPS};
use crate::waveform::{FourierWaveform, PulsePair};

/// Bundled coefficient sets: the finite-blockade chain drive (B0 = B1 =
/// 2π×100 MHz)...
pub const FIG2_CFG: &str = include_str!("../data/fig2.cfg");
/// ...and the ideal-blockade drive.
pub const FIG4_CFG: &str = include_str!("../data/fig4.cfg");

/// Fully parsed and validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub integrator: IntegratorSettings,
    pub eta: EtaMode,
    pub readout: ReadoutModel,
    /// FNV-1a hash of the source text; stamped into every output.
    pub hash: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSchema {
    waveforms: WaveformsSection,
    system: SystemSection,
    #[serde(default)]
    protocol: ProtocolSection,
    #[serde(default)]
    integrator: IntegratorSection,
    #[serde(default)]
    readout: ReadoutSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaveformsSection {
    /// Base period and gate time, μs.
    tau_us: f64,
    /// Buffer Rabi coefficients, units of 2π×MHz.
    omega1: Vec<f64>,
    /// Buffer detuning coefficients.
    delta1: Vec<f64>,
    /// Qubit Rabi coefficients.
    omega2: Vec<f64>,
    /// Qubit detuning coefficients; must be all zero (resonant drive).
    delta2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    layout: Layout,
    /// Rail-0 blockade strength, 2π×MHz; `inf` for ideal blockade.
    b0: f64,
    /// Rail-1 blockade strength.
    b1: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProtocolSection {
    mode: DriveMode,
    eta: EtaField,
    envelope_ramp_us: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { mode: DriveMode::Simultaneous, eta: EtaField::Fixed(0.0), envelope_ramp_us: 0.0 }
    }
}

/// η in the file is either a number (rad) or the string "auto".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EtaField {
    Fixed(f64),
    Mode(EtaTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EtaTag {
    Auto,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct IntegratorSection {
    rtol: f64,
    atol: f64,
    max_step_us: f64,
    method: MethodTag,
    rk4_steps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorSettings::default();
        Self {
            rtol: d.rtol,
            atol: d.atol,
            max_step_us: d.max_step,
            method: MethodTag::Dopri5,
            rk4_steps: ORACLE_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodTag {
    Dopri5,
    Rk4,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ReadoutSection {
    false_zero: f64,
    false_one: f64,
}

/// 64-bit FNV-1a over the raw text; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn find_key_line(text: &str, key: &str) -> usize {
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.starts_with(key)
            && trimmed[key.len()..].trim_start().starts_with('=')
        {
            return i + 1;
        }
    }
    1
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let file: FileSchema = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(1);
        Error::Parse { line, msg: e.message().to_string() }
    })?;

    let w = &file.waveforms;
    if w.delta2.iter().any(|&x| x != 0.0) {
        return Err(Error::Parse {
            line: find_key_line(text, "delta2"),
            msg: "qubit detuning must be zero (resonant drive is required)".into(),
        });
    }
    let tau = w.tau_us;
    let mk = |coeffs: &[f64], key: &str| -> Result<FourierWaveform> {
        let wf = if coeffs.is_empty() {
            Ok(FourierWaveform::zero(tau))
        } else {
            FourierWaveform::new(coeffs.to_vec(), tau)
        };
        wf.map_err(|e| Error::Parse { line: find_key_line(text, key), msg: e.to_string() })
    };
    let buffer_pulse = PulsePair::new(mk(&w.omega1, "omega1")?, mk(&w.delta1, "delta1")?)?;
    let qubit_pulse = PulsePair::new(mk(&w.omega2, "omega2")?, mk(&w.delta2, "delta2")?)?;

    let blockade = [
        Blockade::from_two_pi_mhz(file.system.b0)
            .map_err(|e| Error::Parse { line: find_key_line(text, "b0"), msg: e.to_string() })?,
        Blockade::from_two_pi_mhz(file.system.b1)
            .map_err(|e| Error::Parse { line: find_key_line(text, "b1"), msg: e.to_string() })?,
    ];

    let mut system = SystemConfig::new(
        file.system.layout,
        blockade,
        buffer_pulse,
        qubit_pulse,
        file.protocol.mode,
    )?;
    system.envelope_ramp = file.protocol.envelope_ramp_us;
    system.validate()?;

    let method = match file.integrator.method {
        MethodTag::Dopri5 => Method::Dopri5,
        MethodTag::Rk4 => Method::Rk4 { steps: file.integrator.rk4_steps },
    };
    let integrator = IntegratorSettings {
        rtol: file.integrator.rtol,
        atol: file.integrator.atol,
        max_step: file.integrator.max_step_us,
        method,
    };
    integrator.validate(system.tau())?;

    let eta = match file.protocol.eta {
        EtaField::Fixed(v) => {
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: find_key_line(text, "eta"),
                    msg: "eta must be finite".into(),
                });
            }
            EtaMode::Fixed(v)
        }
        EtaField::Mode(EtaTag::Auto) => EtaMode::Auto,
    };

    let readout = ReadoutModel {
        false_zero: file.readout.false_zero,
        false_one: file.readout.false_one,
    };
    readout.validate()?;

    Ok(RunConfig { system, integrator, eta, readout, hash: fnv1a64(text.as_bytes()) })
}

/// Serialize a system back into the file format (used by the optimizer to
/// emit found waveforms in the same format everything else consumes).
pub fn write_config(
    system: &SystemConfig,
    integrator: &IntegratorSettings,
    eta: EtaMode,
    readout: &ReadoutModel,
) -> String {
    let (method, rk4_steps) = match integrator.method {
        Method::Dopri5 => (MethodTag::Dopri5, ORACLE_STEPS),
        Method::Rk4 { steps } => (MethodTag::Rk4, steps),
    };
    let schema = FileSchema {
        waveforms: WaveformsSection {
            tau_us: system.tau(),
            omega1: system.buffer_pulse.rabi.coeffs().to_vec(),
            delta1: system.buffer_pulse.detuning.coeffs().to_vec(),
            omega2: system.qubit_pulse.rabi.coeffs().to_vec(),
            delta2: vec![0.0],
        },
        system: SystemSection {
            layout: system.layout,
            b0: system.blockade[0].to_two_pi_mhz(),
            b1: system.blockade[1].to_two_pi_mhz(),
        },
        protocol: ProtocolSection {
            mode: system.mode,
            eta: match eta {
                EtaMode::Fixed(v) => EtaField::Fixed(v),
                EtaMode::Auto => EtaField::Mode(EtaTag::Auto),
            },
            envelope_ramp_us: system.envelope_ramp,
        },
        integrator: IntegratorSection {
            rtol: integrator.rtol,
            atol: integrator.atol,
            max_step_us: integrator.max_step,
            method,
            rk4_steps,
        },
        readout: ReadoutSection { false_zero: readout.false_zero, false_one: readout.false_one },
    };
    toml::to_string_pretty(&schema).expect("config serialization cannot fail")
}
