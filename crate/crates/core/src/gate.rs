//! The three-step heralded dual-rail protocol: rail propagation, heralding
//! combination, and all fidelity metrics.
//!
//! Step Ⅰ prepares the buffer in (|0_b⟩ − i|1_b⟩)/√2 with an ideal π/2
//! rotation. Step Ⅱ runs the two PT-conjugate rails. Step Ⅲ applies the
//! inverse rotation (after an optional e^{−iη} phase correction on |1_b⟩)
//! and projects the buffer: the |0_b⟩ outcome heralds the high-fidelity
//! branch M_h = (m⁰ + e^{−iη} m¹)/2, the |1_b⟩ outcome carries the error
//! branch E_h = i(m⁰ − e^{−iη} m¹)/2 over register diagonals.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Batch, DriveMode, HamiltonianBlock, Layout, QubitState, Rail, SystemConfig,
};
use crate::propagator::{evolve, evolve_op, FnHamiltonian, HamiltonianOp, IntegratorSettings, StateVector};
use crate::simplex::{nelder_mead, SimplexOptions};
use crate::waveform::{apply_perturbation, raised_cosine_envelope, Perturbation, Target};

/// Lower bound on |m_q|² for a rail to count as realizing CZ.
pub const CZ_MIN_RETURN_POP: f64 = 0.99;
/// Allowed deviation of the conditional phase from π (rad).
pub const CZ_PHASE_TOL: f64 = 0.05;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The four complex register-return amplitudes of one rail.
#[derive(Clone, Debug, PartialEq)]
pub struct RailAmplitudes {
    pub rail: Rail,
    /// m_q for q ∈ {00, 01, 10, 11}: overlap of the post-pulse state with the
    /// register state.
    pub m: [C64; 4],
}

impl RailAmplitudes {
    pub fn new(rail: Rail, m: [C64; 4]) -> Result<Self> {
        for (i, v) in m.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t: f64::NAN,
                    msg: format!("non-finite return amplitude m[{i}]"),
                });
            }
            if v.norm() > 1.0 + 1e-8 {
                return Err(Error::IntegrationFailure {
                    t: f64::NAN,
                    msg: format!("non-physical return amplitude |m[{i}]| = {}", v.norm()),
                });
            }
        }
        Ok(Self { rail, m })
    }

    /// Population not returning to the register state, 1 − |m_q|².
    pub fn leak(&self, q: QubitState) -> f64 {
        1.0 - self.m[q.index()].norm_sqr()
    }

    pub fn max_leak(&self) -> f64 {
        QubitState::ALL.iter().map(|&q| self.leak(q)).fold(f64::MIN, f64::max)
    }

    /// arg(m00) − arg(m01) − arg(m10) + arg(m11), computed through a single
    /// product so branch cuts cancel; π for an ideal CZ.
    pub fn conditional_phase(&self) -> f64 {
        (self.m[0] * self.m[1].conj() * self.m[2].conj() * self.m[3]).arg()
    }
}

/// Diagonal 4×4 gate over the computational basis {00, 01, 10, 11}. Every
/// matrix this protocol produces is diagonal; off-diagonal entries are zero
/// by construction.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GateMatrix {
    diag: [C64; 4],
}

impl GateMatrix {
    pub fn from_diag(diag: [C64; 4]) -> Self {
        Self { diag }
    }

    /// The target gate, CZ = diag(1, 1, 1, −1).
    pub fn cz() -> Self {
        Self { diag: [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)] }
    }

    pub fn identity() -> Self {
        Self { diag: [c(1.0, 0.0); 4] }
    }

    pub fn diag(&self) -> &[C64; 4] {
        &self.diag
    }

    pub fn to_array(&self) -> Array2<C64> {
        let mut m = Array2::zeros((4, 4));
        for i in 0..4 {
            m[(i, i)] = self.diag[i];
        }
        m
    }
}

/// Heralded combination of the two rails (matrices only; probabilities and
/// fidelities come from [`herald_stats`]).
#[derive(Clone, Debug, PartialEq)]
pub struct HeraldResult {
    /// Success branch, diagonal (m⁰_q + e^{−iη} m¹_q)/2.
    pub mh: GateMatrix,
    /// Error branch, diagonal i(m⁰_q − e^{−iη} m¹_q)/2.
    pub eh: GateMatrix,
    /// Relative rail phase used in the combination (rad).
    pub eta: f64,
    /// max_q |m¹_q − conj(m⁰_q)|.
    pub conjugacy_residual: f64,
}

/// Probabilities and fidelities extracted from a herald combination.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HeraldStats {
    /// Average heralding probability p̄ = Tr(M_h†M_h)/4.
    pub p_herald: f64,
    /// Average gate fidelity of M_h against CZ (trace formula).
    pub f_raw: f64,
    /// Conditional fidelity of the success branch, F_raw/p̄ clamped to [0, 1].
    pub f_herald: f64,
}

/// Buffer-readout error model: `false_zero` is the probability of reporting
/// 0_b when the buffer is in 1_b, `false_one` the converse.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub false_zero: f64,
    pub false_one: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self { false_zero: 0.0, false_one: 0.0 }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("false_zero", self.false_zero), ("false_one", self.false_one)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("readout {name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Normalized two-qubit input state C_00|00⟩ + C_01|01⟩ + C_10|10⟩ + C_11|11⟩.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InputState(pub [C64; 4]);

impl InputState {
    pub fn new(c: [C64; 4]) -> Result<Self> {
        let n: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("input state norm² = {n}, expected 1")));
        }
        Ok(Self(c))
    }

    pub fn normalized(c: [C64; 4]) -> Result<Self> {
        let n: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidConfig("zero input state".into()));
        }
        Self::new([c[0] / n, c[1] / n, c[2] / n, c[3] / n])
    }
}

/// How the relative rail phase η is chosen when combining rails.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EtaMode {
    /// Use the given phase; `Fixed(0.0)` is the default.
    Fixed(f64),
    /// Maximize the heralding probability (closed form).
    Auto,
}

impl Default for EtaMode {
    fn default() -> Self {
        EtaMode::Fixed(0.0)
    }
}

/// Per-rail deviation vector δ_q = m_q(perturbed)/m_q(ideal) − 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationVector {
    pub rail: Rail,
    pub epsilon: f64,
    pub delta: [C64; 4],
}

/// Run the four block propagations of one rail starting from the register
/// state and collect the return amplitudes.
pub fn rail_amplitudes(
    config: &SystemConfig,
    rail: Rail,
    perturbations: &[Perturbation],
    settings: &IntegratorSettings,
) -> Result<RailAmplitudes> {
    let mut cfg = config.clone();
    for p in perturbations {
        cfg = apply_perturbation(&cfg, p)?;
    }
    rail_amplitudes_configured(&cfg, rail, settings)
}

fn rail_amplitudes_configured(
    cfg: &SystemConfig,
    rail: Rail,
    settings: &IntegratorSettings,
) -> Result<RailAmplitudes> {
    let half = cfg.tau() / 2.0;
    let mut m = [c(0.0, 0.0); 4];
    for q in QubitState::ALL {
        let hb = HamiltonianBlock::new(cfg, q, rail)?;
        let mut psi: StateVector = Array1::zeros(hb.dim());
        psi[0] = c(1.0, 0.0);
        for &batch in cfg.batches() {
            psi = evolve(&hb, batch, &psi, (-half, half), settings)?;
        }
        m[q.index()] = psi[0];
    }
    RailAmplitudes::new(rail, m)
}

/// Closed-form maximizer of the heralding probability over η:
/// η = arg(Σ_q conj(m⁰_q)·m¹_q).
pub fn eta_auto(m0: &RailAmplitudes, m1: &RailAmplitudes) -> Result<f64> {
    let s: C64 = (0..4).map(|q| m0.m[q].conj() * m1.m[q]).sum();
    if s.norm() < 1e-300 {
        return Err(Error::UndefinedPhase);
    }
    Ok(s.arg())
}

/// Combine the two rails with relative phase η into success and error
/// branches. The buffer π/2 pulses are ideal; step Ⅲ applies the inverse of
/// step Ⅰ's rotation.
pub fn herald_combine(m0: &RailAmplitudes, m1: &RailAmplitudes, eta: f64) -> HeraldResult {
    let phase = C64::from_polar(1.0, -eta);
    let mut mh = [c(0.0, 0.0); 4];
    let mut eh = [c(0.0, 0.0); 4];
    let mut resid: f64 = 0.0;
    for q in 0..4 {
        let a = m0.m[q];
        let b = phase * m1.m[q];
        mh[q] = (a + b) / 2.0;
        eh[q] = c(0.0, 1.0) * (a - b) / 2.0;
        resid = resid.max((m1.m[q] - m0.m[q].conj()).norm());
    }
    HeraldResult {
        mh: GateMatrix::from_diag(mh),
        eh: GateMatrix::from_diag(eh),
        eta,
        conjugacy_residual: resid,
    }
}

/// Average gate fidelity of (a possibly trace-decreasing) `m` against a
/// unitary `target` through the trace formula
/// F = [Tr(M̃†M̃) + |Tr M̃|²] / (d(d+1)) with M̃ = target†·M and d = 4.
pub fn avg_gate_fidelity(m: &GateMatrix, target: &GateMatrix) -> f64 {
    let mut trace = c(0.0, 0.0);
    let mut hs = 0.0;
    for q in 0..4 {
        let mt = target.diag()[q].conj() * m.diag()[q];
        trace += mt;
        hs += mt.norm_sqr();
    }
    (hs + trace.norm_sqr()) / 20.0
}

/// Heralding probability plus raw and conditional fidelities of a combined
/// result.
pub fn herald_stats(h: &HeraldResult) -> Result<HeraldStats> {
    let p_herald: f64 = h.mh.diag().iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
    let f_raw = avg_gate_fidelity(&h.mh, &GateMatrix::cz());
    if p_herald < 1e-6 {
        return Err(Error::HeraldStarved { p: p_herald });
    }
    let f_herald = (f_raw / p_herald).clamp(0.0, 1.0);
    Ok(HeraldStats { p_herald, f_raw, f_herald })
}

/// Everything computed for one herald evaluation of a configuration.
#[derive(Clone, Debug)]
pub struct HeraldEvaluation {
    pub m0: RailAmplitudes,
    pub m1: RailAmplitudes,
    pub result: HeraldResult,
    pub stats: HeraldStats,
}

/// Propagate both rails of `config`, resolve η per `eta_mode`, combine and
/// compute statistics.
pub fn evaluate_herald(
    config: &SystemConfig,
    eta_mode: EtaMode,
    settings: &IntegratorSettings,
) -> Result<HeraldEvaluation> {
    let m0 = rail_amplitudes_configured(config, Rail::Zero, settings)?;
    let m1 = rail_amplitudes_configured(config, Rail::One, settings)?;
    let eta = match eta_mode {
        EtaMode::Fixed(v) => v,
        EtaMode::Auto => eta_auto(&m0, &m1)?,
    };
    let result = herald_combine(&m0, &m1, eta);
    let stats = herald_stats(&result)?;
    Ok(HeraldEvaluation { m0, m1, result, stats })
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Remove removable local Z and global phases from a diagonal gate:
/// maximizes the average gate fidelity of
/// M′ = e^{iφ_g}·diag(1, e^{iφ_2}, e^{iφ_1}, e^{i(φ_1+φ_2)})·M against CZ and
/// returns (M′, φ_g, φ_1, φ_2).
///
/// The fidelity is invariant under the global phase, so φ_g is fixed by the
/// canonical choice that aligns Tr(CZ†·M′) with the positive real axis.
pub fn phase_compensate(m: &GateMatrix) -> (GateMatrix, f64, f64, f64) {
    let d = m.diag();
    let apply = |phi1: f64, phi2: f64| -> GateMatrix {
        GateMatrix::from_diag([
            d[0],
            C64::from_polar(1.0, phi2) * d[1],
            C64::from_polar(1.0, phi1) * d[2],
            C64::from_polar(1.0, phi1 + phi2) * d[3],
        ])
    };
    // exact for pure-phase diagonals; a good start elsewhere
    let guess1 = if d[2].norm() > 0.0 { (d[0] / d[2]).arg() } else { 0.0 };
    let guess2 = if d[1].norm() > 0.0 { (d[0] / d[1]).arg() } else { 0.0 };
    let target = GateMatrix::cz();
    let objective = |x: &[f64]| -avg_gate_fidelity(&apply(x[0], x[1]), &target);
    let opts =
        SimplexOptions {
        init_step: 0.2,
        f_tol: 1e-15,
        x_tol: 1e-9,
        max_evals: 400,
        ..Default::default()
    };
    let r = nelder_mead(objective, &[guess1, guess2], &opts, |_| {});
    let (phi1, phi2) = (wrap_angle(r.x[0]), wrap_angle(r.x[1]));
    let local = apply(phi1, phi2);
    let trace: C64 = (0..4).map(|q| target.diag()[q].conj() * local.diag()[q]).sum();
    let phi_g = if trace.norm() > 0.0 { wrap_angle(-trace.arg()) } else { 0.0 };
    let rot = C64::from_polar(1.0, phi_g);
    let out = GateMatrix::from_diag([
        rot * local.diag()[0],
        rot * local.diag()[1],
        rot * local.diag()[2],
        rot * local.diag()[3],
    ]);
    (out, phi_g, phi1, phi2)
}

/// A one-parameter family of perturbations used for deviation splitting and
/// sweeps.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum PerturbationFamily {
    /// Overall Rabi ratio error, ε dimensionless.
    RabiScale(Target),
    /// DC shift of the buffer detuning, ε in rad/μs (rails stay exact PT
    /// partners).
    BufferDetuning,
    /// DC shift of the qubit Rydberg diagonal, ε in rad/μs.
    QubitDetuning,
    /// Batch-2 Rabi ratio error, ε dimensionless (sequential mode).
    BatchMismatch,
}

impl PerturbationFamily {
    pub fn at(self, epsilon: f64) -> Perturbation {
        match self {
            PerturbationFamily::RabiScale(target) => Perturbation::RabiScale { epsilon, target },
            PerturbationFamily::BufferDetuning => {
                Perturbation::DetuningOffset { delta: epsilon, target: Target::Buffer }
            }
            PerturbationFamily::QubitDetuning => {
                Perturbation::DetuningOffset { delta: epsilon, target: Target::Qubits }
            }
            PerturbationFamily::BatchMismatch => Perturbation::BatchMismatch { epsilon },
        }
    }
}

/// Deviation vectors of both rails at ±ε together with the first-order
/// cancellation residuals at +ε.
#[derive(Clone, Debug)]
pub struct DeviationSplit {
    pub epsilon: f64,
    /// δ per rail at +ε.
    pub plus: [DeviationVector; 2],
    /// δ per rail at −ε.
    pub minus: [DeviationVector; 2],
    /// |δ⁰_q + δ¹_q| at +ε — the self-correction residual.
    pub sum_residual: [f64; 4],
    /// |δ⁰_q − δ¹_q| at +ε — the heralded-away first-order part.
    pub diff_magnitude: [f64; 4],
}

fn deviations_at(
    config: &SystemConfig,
    family: PerturbationFamily,
    epsilon: f64,
    ideal: &[RailAmplitudes; 2],
    settings: &IntegratorSettings,
) -> Result<[DeviationVector; 2]> {
    let cfg = apply_perturbation(config, &family.at(epsilon))?;
    let mut out = Vec::with_capacity(2);
    for (k, rail) in Rail::BOTH.into_iter().enumerate() {
        let pert = rail_amplitudes_configured(&cfg, rail, settings)?;
        let mut delta = [c(0.0, 0.0); 4];
        for q in 0..4 {
            delta[q] = pert.m[q] / ideal[k].m[q] - 1.0;
        }
        out.push(DeviationVector { rail, epsilon, delta });
    }
    Ok([out.remove(0), out.remove(0)])
}

/// Compute per-rail deviation vectors at ±ε and the Eq-style cancellation
/// residuals. Requires nondegenerate ideal amplitudes (|m_q| > 0.5).
pub fn deviation_split(
    config: &SystemConfig,
    family: PerturbationFamily,
    epsilon: f64,
    settings: &IntegratorSettings,
) -> Result<DeviationSplit> {
    let ideal = [
        rail_amplitudes_configured(config, Rail::Zero, settings)?,
        rail_amplitudes_configured(config, Rail::One, settings)?,
    ];
    for r in &ideal {
        for q in 0..4 {
            if r.m[q].norm() <= 0.5 {
                return Err(Error::InvalidConfig(format!(
                    "ideal amplitude |m[{q}]| = {} too small for deviation splitting",
                    r.m[q].norm()
                )));
            }
        }
    }
    let plus = deviations_at(config, family, epsilon, &ideal, settings)?;
    let minus = deviations_at(config, family, -epsilon, &ideal, settings)?;
    let mut sum_residual = [0.0; 4];
    let mut diff_magnitude = [0.0; 4];
    for q in 0..4 {
        sum_residual[q] = (plus[0].delta[q] + plus[1].delta[q]).norm();
        diff_magnitude[q] = (plus[0].delta[q] - plus[1].delta[q]).norm();
    }
    Ok(DeviationSplit { epsilon, plus, minus, sum_residual, diff_magnitude })
}

/// Central-difference derivative dδ_q/dε per rail with a Richardson
/// consistency check (steps ε and ε/2).
pub fn deviation_derivative(
    config: &SystemConfig,
    family: PerturbationFamily,
    epsilon: f64,
    settings: &IntegratorSettings,
) -> Result<([ [C64; 4]; 2], f64)> {
    let full = deviation_split(config, family, epsilon, settings)?;
    let half = deviation_split(config, family, epsilon / 2.0, settings)?;
    let mut deriv = [[c(0.0, 0.0); 4]; 2];
    let mut richardson: f64 = 0.0;
    for k in 0..2 {
        for q in 0..4 {
            let d_full = (full.plus[k].delta[q] - full.minus[k].delta[q]) / (2.0 * epsilon);
            let d_half = (half.plus[k].delta[q] - half.minus[k].delta[q]) / epsilon;
            // 4th-order Richardson combination of the two central differences
            deriv[k][q] = (d_half * 4.0 - d_full) / 3.0;
            richardson = richardson.max((d_half - d_full).norm());
        }
    }
    Ok((deriv, richardson))
}

/// Joint buffer⊗qubit state amplitudes after the full protocol plus
/// herald-outcome probabilities; the brute-force oracle for the
/// [`herald_combine`] shortcut.
#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    /// Amplitudes of |0_b⟩ ⊗ |q⟩ over q ∈ {00, 01, 10, 11}.
    pub heralded_register: [C64; 4],
    /// Amplitudes of |1_b⟩ ⊗ |q⟩.
    pub error_register: [C64; 4],
    /// Probability of the 0_b herald outcome (register and leaked parts).
    pub p_zero: f64,
    /// Probability of the 1_b outcome.
    pub p_one: f64,
    /// Population left in the buffer Rydberg levels at measurement time.
    pub buffer_leak: f64,
}

// Joint-space basis state for the protocol oracle: buffer level 0..3 =
// {0_b, 1_b, r′, r″}, each qubit level 0..2 = {0, 1, r}.
#[derive(Copy, Clone, PartialEq, Eq)]
struct JointState {
    buffer: usize,
    qubits: [usize; 2],
}

struct JointSystem {
    states: Vec<JointState>,
    config: SystemConfig,
}

impl JointSystem {
    fn new(config: &SystemConfig) -> Self {
        let mut states = Vec::new();
        for buffer in 0..4 {
            for q1 in 0..3 {
                for q2 in 0..3 {
                    let s = JointState { buffer, qubits: [q1, q2] };
                    if Self::excluded(config, &s) {
                        continue;
                    }
                    states.push(s);
                }
            }
        }
        Self { states, config: config.clone() }
    }

    fn excluded(config: &SystemConfig, s: &JointState) -> bool {
        let n_qr = s.qubits.iter().filter(|&&l| l == 2).count();
        if s.buffer == 2 && config.blockade[0].is_infinite() && n_qr > 0 {
            return true;
        }
        if s.buffer == 3 && config.blockade[1].is_infinite() && n_qr > 0 {
            return true;
        }
        if config.layout == Layout::AllBlockadeIdeal && n_qr == 2 {
            return true;
        }
        false
    }

    fn index_of(&self, s: &JointState) -> usize {
        self.states.iter().position(|x| x == s).expect("state present")
    }

    fn register_index(&self, q: QubitState, buffer: usize) -> usize {
        let (b1, b2) = q.bits();
        self.index_of(&JointState {
            buffer,
            qubits: [if b1 { 1 } else { 0 }, if b2 { 1 } else { 0 }],
        })
    }
}

impl HamiltonianOp for JointSystemBatch<'_> {
    fn dim(&self) -> usize {
        self.sys.states.len()
    }

    fn eval_into(&self, t: f64, out: &mut Array2<C64>) -> Result<()> {
        let cfg = &self.sys.config;
        let half = cfg.tau() / 2.0;
        if !t.is_finite() || t < -half - 1e-9 * cfg.tau() || t > half + 1e-9 * cfg.tau() {
            return Err(Error::OutOfRange { t, lo: -half, hi: half });
        }
        let env = raised_cosine_envelope(t, cfg.tau(), cfg.envelope_ramp);
        let batch_scale = if cfg.mode == DriveMode::Sequential && self.batch == Batch::Two {
            cfg.batch2_rabi_scale
        } else {
            1.0
        };
        let rail_on = |rail: Rail| -> bool {
            match cfg.mode {
                DriveMode::Simultaneous => true,
                DriveMode::Sequential => matches!(
                    (rail, self.batch),
                    (Rail::Zero, Batch::One) | (Rail::One, Batch::Two)
                ),
            }
        };
        // series time, matching the block Hamiltonian's drive origin
        let ts = t + cfg.tau() / 2.0;
        let omega_b = cfg.buffer_pulse.rabi.eval(ts) * env * batch_scale;
        let delta1 = cfg.buffer_pulse.detuning.eval(ts);
        let omega_q = cfg.qubit_pulse.rabi.eval(ts) * env * batch_scale;

        out.fill(c(0.0, 0.0));
        let states = &self.sys.states;
        let n = states.len();
        for i in 0..n {
            let a = &states[i];
            // diagonal
            let mut d = 0.0;
            match a.buffer {
                2 if rail_on(Rail::Zero) => d += Rail::Zero.detuning_sign() * delta1,
                3 if rail_on(Rail::One) => d += Rail::One.detuning_sign() * delta1,
                _ => {}
            }
            let n_qr = a.qubits.iter().filter(|&&l| l == 2).count();
            d += cfg.qubit_detuning_shift * n_qr as f64;
            if a.buffer == 2 && !cfg.blockade[0].is_infinite() {
                d += cfg.blockade[0].value() * n_qr as f64;
            }
            if a.buffer == 3 && !cfg.blockade[1].is_infinite() {
                d += cfg.blockade[1].value() * n_qr as f64;
            }
            out[(i, i)] = c(d, 0.0);
            // couplings (upper triangle)
            for j in (i + 1)..n {
                let b = &states[j];
                let buffer_pair = (a.buffer.min(b.buffer), a.buffer.max(b.buffer));
                let q_same = a.qubits == b.qubits;
                let mut v = 0.0;
                if q_same
                    && ((buffer_pair == (0, 2) && rail_on(Rail::Zero))
                        || (buffer_pair == (1, 3) && rail_on(Rail::One)))
                {
                    v = omega_b / 2.0;
                } else if a.buffer == b.buffer {
                    let flips: Vec<usize> =
                        (0..2).filter(|&k| a.qubits[k] != b.qubits[k]).collect();
                    if flips.len() == 1 {
                        let k = flips[0];
                        let pair = (a.qubits[k].min(b.qubits[k]), a.qubits[k].max(b.qubits[k]));
                        if pair == (1, 2) {
                            v = omega_q / 2.0;
                        }
                    }
                }
                if v != 0.0 {
                    out[(i, j)] = c(v, 0.0);
                    out[(j, i)] = c(v, 0.0);
                }
            }
        }
        Ok(())
    }
}

struct JointSystemBatch<'a> {
    sys: &'a JointSystem,
    batch: Batch,
}

/// Run the full three-step protocol on the joint buffer⊗qubit space.
///
/// Builds (|0_b⟩ − i|1_b⟩)/√2 ⊗ input, evolves the joint Schrödinger
/// equation, applies the inverse of step Ⅰ's rotation (with the e^{−iη}
/// correction) and reads out every component. Structurally independent of
/// the per-block rail propagation it cross-checks.
pub fn protocol_end_to_end(
    config: &SystemConfig,
    input: &InputState,
    eta: f64,
    settings: &IntegratorSettings,
) -> Result<ProtocolOutcome> {
    config.validate()?;
    settings.validate(config.tau())?;
    let sys = JointSystem::new(config);
    let n = sys.states.len();
    let mut psi: StateVector = Array1::zeros(n);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for q in QubitState::ALL {
        let amp = input.0[q.index()];
        psi[sys.register_index(q, 0)] = amp * inv_sqrt2;
        psi[sys.register_index(q, 1)] = amp * c(0.0, -inv_sqrt2);
    }
    let half = config.tau() / 2.0;
    for &batch in config.batches() {
        let op = JointSystemBatch { sys: &sys, batch };
        psi = evolve_op(&op, &psi, (-half, half), settings)?;
    }
    // step Ⅲ: e^{−iη} on |1_b⟩, then the inverse of step Ⅰ's π/2 rotation
    let phase = C64::from_polar(1.0, -eta);
    let mut out = psi.clone();
    for q1 in 0..3 {
        for q2 in 0..3 {
            let find = |buffer: usize| {
                let s = JointState { buffer, qubits: [q1, q2] };
                sys.states.iter().position(|x| *x == s)
            };
            if let (Some(i0), Some(i1)) = (find(0), find(1)) {
                let a0 = psi[i0];
                let a1 = phase * psi[i1];
                out[i0] = (a0 + c(0.0, 1.0) * a1) * inv_sqrt2;
                out[i1] = (c(0.0, 1.0) * a0 + a1) * inv_sqrt2;
            }
        }
    }
    let mut heralded_register = [c(0.0, 0.0); 4];
    let mut error_register = [c(0.0, 0.0); 4];
    for q in QubitState::ALL {
        heralded_register[q.index()] = out[sys.register_index(q, 0)];
        error_register[q.index()] = out[sys.register_index(q, 1)];
    }
    let mut p_zero = 0.0;
    let mut p_one = 0.0;
    let mut buffer_leak = 0.0;
    for (i, s) in sys.states.iter().enumerate() {
        let p = out[i].norm_sqr();
        match s.buffer {
            0 => p_zero += p,
            1 => p_one += p,
            _ => buffer_leak += p,
        }
    }
    Ok(ProtocolOutcome { heralded_register, error_register, p_zero, p_one, buffer_leak })
}

/// Closed-form return amplitude of a constant two-level dressing drive
/// (Ω_r, Δ_r) over time T_r:
/// e^{−iΔ_rT_r/2}·[cos(Ω_gT_r/2) + i(Δ_r/Ω_g)·sin(Ω_gT_r/2)], Ω_g = √(Ω_r²+Δ_r²).
pub fn dressing_phase(omega_r: f64, delta_r: f64, t_r: f64) -> C64 {
    let omega_g = (omega_r * omega_r + delta_r * delta_r).sqrt();
    if omega_g == 0.0 {
        return c(1.0, 0.0);
    }
    let half = omega_g * t_r / 2.0;
    let amp = c(half.cos(), delta_r / omega_g * half.sin());
    C64::from_polar(1.0, -delta_r * t_r / 2.0) * amp
}

/// Same amplitude by direct integration of the constant-drive two-level
/// Schrödinger equation; cross-checks [`dressing_phase`].
pub fn dressing_phase_integrated(
    omega_r: f64,
    delta_r: f64,
    t_r: f64,
    settings: &IntegratorSettings,
) -> Result<C64> {
    let h = FnHamiltonian {
        dim: 2,
        f: move |_t| {
            ndarray::array![
                [c(0.0, 0.0), c(omega_r / 2.0, 0.0)],
                [c(omega_r / 2.0, 0.0), c(delta_r, 0.0)]
            ]
        },
    };
    let psi0: StateVector = ndarray::array![c(1.0, 0.0), c(0.0, 0.0)];
    let psi = evolve_op(&h, &psi0, (0.0, t_r), settings)?;
    Ok(psi[0])
}

/// Herald fidelity adjusted for buffer readout errors:
/// F_eff = [p̄(1−q_fn)F_herald + (1−p̄)q_fp·F_err] / [p̄(1−q_fn) + (1−p̄)q_fp].
pub fn readout_adjusted(
    f_herald: f64,
    p_herald: f64,
    f_error_branch: f64,
    readout: &ReadoutModel,
) -> Result<f64> {
    readout.validate()?;
    let w_true = p_herald * (1.0 - readout.false_one);
    let w_false = (1.0 - p_herald) * readout.false_zero;
    let denom = w_true + w_false;
    if denom < 1e-12 {
        return Err(Error::NoHerald);
    }
    Ok((w_true * f_herald + w_false * f_error_branch) / denom)
}

/// Default error-branch fidelity for [`readout_adjusted`]: the error branch
/// renormalized to unit average probability, scored against CZ. Zero when the
/// branch is empty.
pub fn error_branch_fidelity(h: &HeraldResult) -> f64 {
    let p_err: f64 = h.eh.diag().iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
    if p_err < 1e-30 {
        return 0.0;
    }
    let scale = p_err.sqrt();
    let normalized = GateMatrix::from_diag([
        h.eh.diag()[0] / scale,
        h.eh.diag()[1] / scale,
        h.eh.diag()[2] / scale,
        h.eh.diag()[3] / scale,
    ]);
    avg_gate_fidelity(&normalized, &GateMatrix::cz())
}

/// CZ diagnostics of one rail.
#[derive(Clone, Debug, Serialize)]
pub struct RailDiagnostics {
    pub populations: [f64; 4],
    pub conditional_phase: f64,
    pub max_leak: f64,
    pub cz_ok: bool,
}

impl RailDiagnostics {
    pub fn from_amplitudes(r: &RailAmplitudes) -> Self {
        let populations = [
            r.m[0].norm_sqr(),
            r.m[1].norm_sqr(),
            r.m[2].norm_sqr(),
            r.m[3].norm_sqr(),
        ];
        let conditional_phase = r.conditional_phase();
        let phase_err = wrap_angle(conditional_phase - PI).abs();
        let cz_ok =
            populations.iter().all(|&p| p >= CZ_MIN_RETURN_POP) && phase_err <= CZ_PHASE_TOL;
        Self { populations, conditional_phase, max_leak: r.max_leak(), cz_ok }
    }
}

/// PT consistency report: CZ diagnostics of the configured drive and of its
/// PT partner (the two rails carry (Ω, −Δ1) and (Ω, +Δ1) respectively) plus
/// the rail conjugacy residual and the herald summary.
#[derive(Clone, Debug)]
pub struct PtReport {
    pub evaluation: HeraldEvaluation,
    pub rail0: RailDiagnostics,
    pub rail1: RailDiagnostics,
}

pub fn pt_check(
    config: &SystemConfig,
    eta_mode: EtaMode,
    settings: &IntegratorSettings,
) -> Result<PtReport> {
    let evaluation = evaluate_herald(config, eta_mode, settings)?;
    let rail0 = RailDiagnostics::from_amplitudes(&evaluation.m0);
    let rail1 = RailDiagnostics::from_amplitudes(&evaluation.m1);
    Ok(PtReport { evaluation, rail0, rail1 })
}

/// Per-block state trajectory sampled on a uniform grid, for waveform and
/// population plots.
pub struct BlockTrajectory {
    pub q: QubitState,
    pub rail: Rail,
    pub labels: Vec<String>,
    /// (t, amplitudes) per sample.
    pub samples: Vec<(f64, Vec<C64>)>,
}

pub fn block_trajectory(
    config: &SystemConfig,
    q: QubitState,
    rail: Rail,
    n_samples: usize,
    settings: &IntegratorSettings,
) -> Result<BlockTrajectory> {
    settings.validate(config.tau())?;
    let hb = HamiltonianBlock::new(config, q, rail)?;
    let half = config.tau() / 2.0;
    let times: Vec<f64> = (0..n_samples)
        .map(|i| -half + config.tau() * i as f64 / (n_samples - 1) as f64)
        .collect();
    let mut psi: StateVector = Array1::zeros(hb.dim());
    psi[0] = c(1.0, 0.0);
    let mut samples: Vec<(f64, Vec<C64>)> = Vec::new();
    for (bi, &batch) in config.batches().iter().enumerate() {
        let op = crate::propagator::BlockHamiltonian { block: &hb, batch };
        let states = crate::propagator::evolve_sampled(&op, &psi, &times, settings)?;
        let t_offset = bi as f64 * config.tau();
        for (t, s) in times.iter().zip(states.iter()) {
            samples.push((t + t_offset, s.to_vec()));
        }
        psi = states.last().expect("nonempty").clone();
    }
    Ok(BlockTrajectory { q, rail, labels: hb.basis().labels(), samples })
}
