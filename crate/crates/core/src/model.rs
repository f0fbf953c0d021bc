//! Level schemes, rail layouts, per-block basis enumeration and time-dependent
//! Hamiltonian assembly.
//!
//! The three-atom system is one buffer atom plus two qubit atoms. The drives
//! never couple a qubit in |0⟩, so the evolution is block-diagonal over the
//! computational register state q ∈ {00, 01, 10, 11}; conditioning on the
//! buffer ground state selects one of two rails, each coupling that ground
//! state to its own Rydberg level. Rail 0 carries the detuning −Δ1(t), rail 1
//! carries +Δ1(t). Rydberg dipole-dipole interaction is modeled as a diagonal
//! blockade shift `B_k` on every simultaneously excited buffer-qubit pair; an
//! infinite shift removes the doubly excited states from the basis instead.
//!
//! Drive origin convention: a pulse window spans [−τ/2, τ/2] in window time
//! and traverses one full series period starting from the series origin, so
//! the drives are sampled at t + τ/2. The effective drive is even about the
//! window center, which is what the PT construction requires.

use std::f64::consts::TAU as TWO_PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{raised_cosine_envelope, PulsePair};

/// Base period and gate time in μs shared by the published waveform sets.
pub const DEFAULT_TAU: f64 = 0.25;

/// Rydberg blockade strength in rad/μs; `INFINITE` excludes double
/// excitation from the basis instead of shifting it.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blockade(f64);

impl Blockade {
    pub const INFINITE: Blockade = Blockade(f64::INFINITY);

    pub fn new(rad_per_us: f64) -> Result<Self> {
        if rad_per_us.is_nan() || rad_per_us <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "blockade strength must be positive or infinite, got {rad_per_us}"
            )));
        }
        Ok(Blockade(rad_per_us))
    }

    /// From the configuration-file unit, 2π×MHz.
    pub fn from_two_pi_mhz(b: f64) -> Result<Self> {
        if b.is_infinite() && b > 0.0 {
            Ok(Self::INFINITE)
        } else {
            Self::new(TWO_PI * b)
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Shift value in rad/μs; only meaningful when finite.
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_two_pi_mhz(self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            self.0 / TWO_PI
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Buffer interacts with each qubit; the two qubit atoms do not interact.
    ChainNoQq,
    /// Ideal (infinite) blockade between all three atom pairs.
    AllBlockadeIdeal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    /// Both rails driven during one pulse window.
    Simultaneous,
    /// Batch 1 drives rail 0, batch 2 drives rail 1; the qubit pulse repeats
    /// in both batches.
    Sequential,
}

/// One of the two conditioned evolutions of the dual-rail gate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rail {
    Zero,
    One,
}

impl Rail {
    pub const BOTH: [Rail; 2] = [Rail::Zero, Rail::One];

    pub fn index(self) -> usize {
        match self {
            Rail::Zero => 0,
            Rail::One => 1,
        }
    }

    /// Sign of the buffer detuning diagonal: rail 0 → −Δ1, rail 1 → +Δ1.
    pub fn detuning_sign(self) -> f64 {
        match self {
            Rail::Zero => -1.0,
            Rail::One => 1.0,
        }
    }
}

/// Computational register state of the two qubit atoms.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QubitState {
    Q00,
    Q01,
    Q10,
    Q11,
}

impl QubitState {
    pub const ALL: [QubitState; 4] = [QubitState::Q00, QubitState::Q01, QubitState::Q10, QubitState::Q11];

    /// (qubit 1, qubit 2) occupation of |1⟩.
    pub fn bits(self) -> (bool, bool) {
        match self {
            QubitState::Q00 => (false, false),
            QubitState::Q01 => (false, true),
            QubitState::Q10 => (true, false),
            QubitState::Q11 => (true, true),
        }
    }

    pub fn index(self) -> usize {
        match self {
            QubitState::Q00 => 0,
            QubitState::Q01 => 1,
            QubitState::Q10 => 2,
            QubitState::Q11 => 3,
        }
    }
}

/// Pulse window of the sequential drive mode. Simultaneous configurations use
/// only `One`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Batch {
    One,
    Two,
}

/// Full drive configuration defining the Hamiltonian family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub layout: Layout,
    /// Blockade shifts of the rail-0 and rail-1 buffer-qubit channels.
    pub blockade: [Blockade; 2],
    /// Buffer drive (Ω1, Δ1).
    pub buffer_pulse: PulsePair,
    /// Qubit drive (Ω2, Δ2 ≡ 0).
    pub qubit_pulse: PulsePair,
    pub mode: DriveMode,
    /// Raised-cosine on/off ramp duration in μs; 0 disables the envelope.
    pub envelope_ramp: f64,
    /// DC shift of the qubit Rydberg diagonal in rad/μs (perturbation channel;
    /// the qubit drive itself stays resonant).
    pub qubit_detuning_shift: f64,
    /// Rabi scale factor of pulse batch 2 relative to batch 1 (sequential
    /// mode only).
    pub batch2_rabi_scale: f64,
}

impl SystemConfig {
    pub fn new(
        layout: Layout,
        blockade: [Blockade; 2],
        buffer_pulse: PulsePair,
        qubit_pulse: PulsePair,
        mode: DriveMode,
    ) -> Result<Self> {
        let cfg = Self {
            layout,
            blockade,
            buffer_pulse,
            qubit_pulse,
            mode,
            envelope_ramp: 0.0,
            qubit_detuning_shift: 0.0,
            batch2_rabi_scale: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tau(&self) -> f64 {
        self.buffer_pulse.tau()
    }

    /// Pulse windows in execution order.
    pub fn batches(&self) -> &'static [Batch] {
        match self.mode {
            DriveMode::Simultaneous => &[Batch::One],
            DriveMode::Sequential => &[Batch::One, Batch::Two],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.qubit_pulse.detuning.is_zero() {
            return Err(Error::InvalidConfig(
                "qubit detuning waveform must be all-zero (resonant qubit drive)".into(),
            ));
        }
        if self.buffer_pulse.tau() != self.qubit_pulse.tau() {
            return Err(Error::InvalidConfig("buffer and qubit pulses must share one base period".into()));
        }
        if self.layout == Layout::AllBlockadeIdeal
            && !(self.blockade[0].is_infinite() && self.blockade[1].is_infinite())
        {
            return Err(Error::InvalidConfig(
                "all_blockade_ideal requires infinite blockade on both channels".into(),
            ));
        }
        if !(self.envelope_ramp >= 0.0 && self.envelope_ramp <= self.tau() / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "envelope ramp {} μs outside [0, τ/2]",
                self.envelope_ramp
            )));
        }
        if !self.qubit_detuning_shift.is_finite() {
            return Err(Error::InvalidConfig("non-finite qubit detuning shift".into()));
        }
        if !(self.batch2_rabi_scale.is_finite() && self.batch2_rabi_scale > 0.0) {
            return Err(Error::InvalidConfig("batch-2 Rabi scale must be positive".into()));
        }
        Ok(())
    }
}

/// Level of one qubit atom within a block basis.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Level {
    Zero,
    One,
    Ryd,
}

impl Level {
    fn is_ryd(self) -> bool {
        self == Level::Ryd
    }
}

/// One product basis state of a block: buffer ground/Rydberg plus the two
/// qubit levels (qubits registered in |0⟩ stay frozen).
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BasisState {
    pub buffer_rydberg: bool,
    pub qubits: [Level; 2],
}

impl BasisState {
    /// Number of Rydberg-excited atoms.
    pub fn rydberg_count(&self) -> usize {
        self.buffer_rydberg as usize
            + self.qubits.iter().filter(|l| l.is_ryd()).count()
    }

    /// Number of simultaneously excited buffer-qubit pairs.
    fn buffer_qubit_pairs(&self) -> usize {
        if self.buffer_rydberg {
            self.qubits.iter().filter(|l| l.is_ryd()).count()
        } else {
            0
        }
    }

    pub fn label(&self, rail: Rail) -> String {
        let b = if self.buffer_rydberg { format!("r{}", rail.index()) } else { "g".into() };
        let q = |l: Level| match l {
            Level::Zero => '0',
            Level::One => '1',
            Level::Ryd => 'r',
        };
        format!("{b}.{}{}", q(self.qubits[0]), q(self.qubits[1]))
    }
}

/// Ordered basis of one (register state, rail) block. The first element is
/// always the register state itself.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisBlock {
    pub q: QubitState,
    pub rail: Rail,
    pub states: Vec<BasisState>,
}

impl BasisBlock {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.states.iter().map(|s| s.label(self.rail)).collect()
    }

    /// Diagonal of the Rydberg parity operator: +1 on states with an even
    /// number of Rydberg-excited atoms, −1 on odd.
    pub fn parity(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| if s.rydberg_count() % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }
}

/// Enumerate the ordered block basis for register state `q` on `rail`.
pub fn build_basis(config: &SystemConfig, q: QubitState, rail: Rail) -> BasisBlock {
    let (b1, b2) = q.bits();
    let levels = |bit: bool| -> &'static [Level] {
        if bit {
            &[Level::One, Level::Ryd]
        } else {
            &[Level::Zero]
        }
    };
    let b_rail = config.blockade[rail.index()];
    let mut states = Vec::new();
    for &buffer_rydberg in &[false, true] {
        for &q1 in levels(b1) {
            for &q2 in levels(b2) {
                let s = BasisState { buffer_rydberg, qubits: [q1, q2] };
                // infinite buffer-qubit blockade removes double excitation
                if b_rail.is_infinite() && s.buffer_qubit_pairs() > 0 {
                    continue;
                }
                // ideal blockade between the qubit atoms as well
                if config.layout == Layout::AllBlockadeIdeal
                    && s.qubits.iter().all(|l| l.is_ryd())
                {
                    continue;
                }
                states.push(s);
            }
        }
    }
    BasisBlock { q, rail, states }
}

/// Time-dependent Hamiltonian of one block, evaluated analytically at any
/// time inside the pulse interval.
#[derive(Clone, Debug)]
pub struct HamiltonianBlock {
    config: SystemConfig,
    basis: BasisBlock,
    /// (i, j, which) with i < j; `which` selects buffer (false) or qubit
    /// (true) Rabi coupling.
    couplings: Vec<(usize, usize, bool)>,
    /// Diagonal template: (buffer-Rydberg flag, qubit Rydberg count,
    /// buffer-qubit pair count).
    diag: Vec<(bool, usize, usize)>,
}

impl HamiltonianBlock {
    pub fn new(config: &SystemConfig, q: QubitState, rail: Rail) -> Result<Self> {
        config.validate()?;
        let basis = build_basis(config, q, rail);
        let n = basis.dim();
        let mut couplings = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = &basis.states[i];
                let b = &basis.states[j];
                let buffer_flip = a.buffer_rydberg != b.buffer_rydberg;
                let q_flips: Vec<usize> = (0..2)
                    .filter(|&k| a.qubits[k] != b.qubits[k])
                    .collect();
                if buffer_flip && q_flips.is_empty() {
                    couplings.push((i, j, false));
                } else if !buffer_flip && q_flips.len() == 1 {
                    // qubit drive couples One ↔ Ryd only
                    let k = q_flips[0];
                    let pair = (a.qubits[k], b.qubits[k]);
                    if matches!(pair, (Level::One, Level::Ryd) | (Level::Ryd, Level::One)) {
                        couplings.push((i, j, true));
                    }
                }
            }
        }
        let diag = basis
            .states
            .iter()
            .map(|s| {
                (
                    s.buffer_rydberg,
                    s.qubits.iter().filter(|l| l.is_ryd()).count(),
                    s.buffer_qubit_pairs(),
                )
            })
            .collect();
        Ok(Self { config: config.clone(), basis, couplings, diag })
    }

    pub fn basis(&self) -> &BasisBlock {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn tau(&self) -> f64 {
        self.config.tau()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let half = self.tau() / 2.0;
        // small slack for adaptive stage times at the interval ends
        let slack = 1e-9 * self.tau();
        if !t.is_finite() || t < -half - slack || t > half + slack {
            return Err(Error::OutOfRange { t, lo: -half, hi: half });
        }
        Ok(())
    }

    /// Whether the buffer drive of this block's rail is on during `batch`.
    fn buffer_active(&self, batch: Batch) -> bool {
        match self.config.mode {
            DriveMode::Simultaneous => true,
            DriveMode::Sequential => matches!(
                (self.basis.rail, batch),
                (Rail::Zero, Batch::One) | (Rail::One, Batch::Two)
            ),
        }
    }

    /// Evaluate H(t) for the given pulse batch into `out` (rad/μs).
    pub fn eval_into(&self, t: f64, batch: Batch, out: &mut Array2<C64>) -> Result<()> {
        self.check_time(t)?;
        let cfg = &self.config;
        let rail = self.basis.rail;
        let env = raised_cosine_envelope(t, cfg.tau(), cfg.envelope_ramp);
        let batch_scale = if cfg.mode == DriveMode::Sequential && batch == Batch::Two {
            cfg.batch2_rabi_scale
        } else {
            1.0
        };
        // series time: the window covers one full period from the origin
        let ts = t + cfg.tau() / 2.0;
        let buffer_on = self.buffer_active(batch);
        let omega_b = if buffer_on {
            cfg.buffer_pulse.rabi.eval(ts) * env * batch_scale
        } else {
            0.0
        };
        // idle rails accrue no dynamical phase
        let delta_b = if buffer_on {
            rail.detuning_sign() * cfg.buffer_pulse.detuning.eval(ts)
        } else {
            0.0
        };
        let omega_q = cfg.qubit_pulse.rabi.eval(ts) * env * batch_scale;
        let b_shift = cfg.blockade[rail.index()];

        out.fill(C64::new(0.0, 0.0));
        for &(i, j, is_qubit) in &self.couplings {
            let v = if is_qubit { omega_q / 2.0 } else { omega_b / 2.0 };
            out[(i, j)] = C64::new(v, 0.0);
            out[(j, i)] = C64::new(v, 0.0);
        }
        for (i, &(buf_r, n_qr, n_pairs)) in self.diag.iter().enumerate() {
            let mut d = 0.0;
            if buf_r {
                d += delta_b;
            }
            d += cfg.qubit_detuning_shift * n_qr as f64;
            if n_pairs > 0 {
                // finite shift only; infinite blockade was excluded at basis
                // construction
                d += b_shift.value() * n_pairs as f64;
            }
            out[(i, i)] = C64::new(d, 0.0);
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, batch: Batch) -> Result<Array2<C64>> {
        let n = self.dim();
        let mut out = Array2::zeros((n, n));
        self.eval_into(t, batch, &mut out)?;
        Ok(out)
    }

    /// Rydberg parity as a diagonal matrix.
    pub fn parity_matrix(&self) -> Array2<C64> {
        Array2::from_diag(
            &self
                .basis
                .parity()
                .iter()
                .map(|&p| C64::new(p, 0.0))
                .collect::<ndarray::Array1<C64>>(),
        )
    }
}

/// Evaluate the block Hamiltonian at time `t` (μs) for `batch`.
pub fn hamiltonian_at(block: &HamiltonianBlock, t: f64, batch: Batch) -> Result<Array2<C64>> {
    block.eval(t, batch)
}

#[doc(hidden)]
pub mod test_support {
    //! Small ready-made configurations shared by unit, integration and bench
    //! targets.

    use super::*;
    use crate::waveform::FourierWaveform;

    pub const FIG2_OMEGA1: [f64; 9] =
        [129.82, -33.36, -11.16, 5.33, -17.69, -1.62, -8.79, 4.57, -2.18];
    pub const FIG2_OMEGA2: [f64; 9] =
        [97.16, -16.78, -33.32, -11.58, 15.95, 5.78, -9.72, 2.92, -1.82];
    pub const FIG2_DELTA1: [f64; 9] =
        [-66.80, 3.86, -63.90, 6.18, -46.78, 79.58, -2.47, -5.85, -8.46];

    pub const FIG4_OMEGA1: [f64; 6] = [57.46, -17.45, 11.37, -19.97, 2.62, -5.30];
    pub const FIG4_OMEGA2: [f64; 6] = [69.00, -34.79, 3.38, -3.22, -1.85, 1.98];
    pub const FIG4_DELTA1: [f64; 6] = [-33.12, 40.94, 9.90, -41.01, 22.85, -31.37];

    pub fn pulse(rabi: &[f64], detuning: &[f64], tau: f64) -> PulsePair {
        PulsePair::new(
            FourierWaveform::new(rabi.to_vec(), tau).unwrap(),
            if detuning.is_empty() {
                FourierWaveform::zero(tau)
            } else {
                FourierWaveform::new(detuning.to_vec(), tau).unwrap()
            },
        )
        .unwrap()
    }

    /// Published finite-blockade chain configuration (B0 = B1 = 2π×100 MHz).
    pub fn chain_config() -> SystemConfig {
        SystemConfig::new(
            Layout::ChainNoQq,
            [Blockade::from_two_pi_mhz(100.0).unwrap(); 2],
            pulse(&FIG2_OMEGA1, &FIG2_DELTA1, DEFAULT_TAU),
            pulse(&FIG2_OMEGA2, &[], DEFAULT_TAU),
            DriveMode::Simultaneous,
        )
        .unwrap()
    }

    /// Published ideal-blockade configuration.
    pub fn all_blockade_config() -> SystemConfig {
        SystemConfig::new(
            Layout::AllBlockadeIdeal,
            [Blockade::INFINITE; 2],
            pulse(&FIG4_OMEGA1, &FIG4_DELTA1, DEFAULT_TAU),
            pulse(&FIG4_OMEGA2, &[], DEFAULT_TAU),
            DriveMode::Simultaneous,
        )
        .unwrap()
    }

    /// Chain layout with ideal blockade on both buffer-qubit channels.
    pub fn chain_infinite_config() -> SystemConfig {
        let mut cfg = chain_config();
        cfg.blockade = [Blockade::INFINITE; 2];
        cfg
    }
}
