//! Numerical search for CZ-realizing drive waveforms.
//!
//! The search space is the cosine coefficient lists (Ω1, Δ1, Ω2); the qubit
//! detuning is held at zero, so every candidate is real and even in time and
//! its PT partner is automatically a valid solution candidate. Minimization
//! is a seeded multi-restart Nelder–Mead over the flattened coefficients;
//! results are bit-reproducible for a fixed (seed, spec) pair, with restart
//! ties broken by the lowest restart index.

use std::f64::consts::TAU as TWO_PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gate::{avg_gate_fidelity, rail_amplitudes, GateMatrix};
use crate::model::{Blockade, DriveMode, Layout, QubitState, Rail, SystemConfig, DEFAULT_TAU};
use crate::propagator::IntegratorSettings;
use crate::simplex::{nelder_mead, SimplexOptions};
use crate::waveform::{FourierWaveform, PulsePair};

/// Cost weights and search-space shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostSpec {
    /// Weight of the rail-0 raw infidelity against CZ (the trace formula
    /// forgives a global phase but not local ones). Must be > 0.
    pub w_fid: f64,
    /// Weight of the summed register leakage Σ_q leak_q.
    pub w_leak: f64,
    /// Weight of the peak-Rabi overshoot above `power_cap`.
    pub w_power: f64,
    /// Peak Rabi cap in rad/μs.
    pub power_cap: f64,
    /// Highest harmonic index N; every list carries N+1 coefficients.
    pub n: usize,
    /// Coefficient bound (2π×MHz units), enforced as a soft quadratic wall.
    pub bound: f64,
    pub layout: Layout,
    pub blockade: [Blockade; 2],
    pub mode: DriveMode,
    pub tau: f64,
    pub settings: IntegratorSettings,
}

impl CostSpec {
    pub fn new(layout: Layout, blockade: [Blockade; 2]) -> Self {
        Self {
            w_fid: 1.0,
            w_leak: 0.5,
            w_power: 1e-3,
            power_cap: TWO_PI * 30.0,
            n: 8,
            bound: 150.0,
            layout,
            blockade,
            mode: DriveMode::Simultaneous,
            tau: DEFAULT_TAU,
            settings: IntegratorSettings::coarse(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_fid > 0.0 && self.w_leak >= 0.0 && self.w_power >= 0.0) {
            return Err(crate::error::Error::InvalidConfig(
                "cost weights must be nonnegative with w_fid > 0".into(),
            ));
        }
        if self.n < 1 {
            return Err(crate::error::Error::InvalidConfig("need N ≥ 1 harmonics".into()));
        }
        self.settings.validate(self.tau)
    }
}

/// Candidate coefficient lists, paper-scale units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    pub omega1: Vec<f64>,
    pub delta1: Vec<f64>,
    pub omega2: Vec<f64>,
}

impl WaveformParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.omega1.clone();
        v.extend_from_slice(&self.delta1);
        v.extend_from_slice(&self.omega2);
        v
    }

    pub fn unflatten(x: &[f64], n: usize) -> Self {
        let m = n + 1;
        Self {
            omega1: x[..m].to_vec(),
            delta1: x[m..2 * m].to_vec(),
            omega2: x[2 * m..3 * m].to_vec(),
        }
    }

    /// Assemble a simulate-ready configuration for the spec's layout and mode.
    pub fn to_config(&self, spec: &CostSpec) -> Result<SystemConfig> {
        SystemConfig::new(
            spec.layout,
            spec.blockade,
            PulsePair::new(
                FourierWaveform::new(self.omega1.clone(), spec.tau)?,
                FourierWaveform::new(self.delta1.clone(), spec.tau)?,
            )?,
            PulsePair::new(
                FourierWaveform::new(self.omega2.clone(), spec.tau)?,
                FourierWaveform::zero(spec.tau),
            )?,
            spec.mode,
        )
    }
}

/// Penalty returned when a candidate cannot be propagated.
pub const FAILURE_PENALTY: f64 = 1e3;

/// Search objective: rail-0 raw infidelity (trace formula against CZ, global
/// phase free, local phases penalized) plus leakage and peak-power terms.
/// Keeping the local phases in the objective matters: the dual-rail herald
/// only accepts with high probability when the single-rail phase pattern is
/// real, so a solution that is merely locally-equivalent to CZ would gate
/// correctly but herald rarely. Propagation failures map to
/// [`FAILURE_PENALTY`].
pub fn cost(params: &WaveformParams, spec: &CostSpec) -> f64 {
    cost_checked(params, spec).0
}

fn cost_checked(params: &WaveformParams, spec: &CostSpec) -> (f64, bool) {
    let Ok(config) = params.to_config(spec) else {
        return (FAILURE_PENALTY, true);
    };
    let amps = match rail_amplitudes(&config, Rail::Zero, &[], &spec.settings) {
        Ok(a) => a,
        Err(_) => return (FAILURE_PENALTY, true),
    };
    let gate = GateMatrix::from_diag(amps.m);
    let f = avg_gate_fidelity(&gate, &GateMatrix::cz());
    let leak_sum: f64 = QubitState::ALL.iter().map(|&q| amps.leak(q).max(0.0)).sum();
    let peak = config
        .buffer_pulse
        .rabi
        .peak_abs(256)
        .max(config.qubit_pulse.rabi.peak_abs(256));
    let overshoot = (peak - spec.power_cap).max(0.0);
    // soft wall keeps the simplex inside the coefficient box
    let wall: f64 = params
        .flatten()
        .iter()
        .map(|a| {
            let over = (a.abs() - spec.bound).max(0.0);
            over * over
        })
        .sum::<f64>()
        * 1e-3;
    (spec.w_fid * (1.0 - f) + spec.w_leak * leak_sum + spec.w_power * overshoot + wall, false)
}

/// Outcome of one search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub params: WaveformParams,
    pub cost: f64,
    pub evals: usize,
    pub failures: usize,
    /// (evaluation index, best cost so far); nonincreasing in cost.
    pub history: Vec<(usize, f64)>,
    pub seed: u64,
}

struct RestartOutcome {
    params: WaveformParams,
    cost: f64,
    evals: usize,
    failures: usize,
    history: Vec<(usize, f64)>,
}

fn initial_point(spec: &CostSpec, rng: &mut ChaCha8Rng) -> WaveformParams {
    let m = spec.n + 1;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..m).map(|_| rng.random_range(-0.5..0.5) * spec.bound).collect()
    };
    // rescale each drive so its peak stays near (but under) the power cap,
    // comparable to experimentally plausible modulation depths
    let rescale = |coeffs: Vec<f64>, target: f64| -> Vec<f64> {
        let w = FourierWaveform::new(coeffs.clone(), spec.tau).expect("finite draw");
        let peak = w.peak_abs(128);
        if peak == 0.0 {
            return coeffs;
        }
        let s = target / peak;
        coeffs.into_iter().map(|a| a * s).collect()
    };
    let t1 = spec.power_cap * rng.random_range(0.4..0.9);
    let t2 = spec.power_cap * rng.random_range(0.4..0.9);
    let td = spec.power_cap * rng.random_range(0.3..1.2);
    WaveformParams {
        omega1: rescale(draw(rng), t1),
        delta1: rescale(draw(rng), td),
        omega2: rescale(draw(rng), t2),
    }
}

/// Costs above this after the probe phase indicate the search is stuck on
/// the identity plateau; the init is abandoned and the budget reused.
const PLATEAU_FRACTION: f64 = 0.55;

fn run_restart(spec: &CostSpec, seed: u64, restart: usize, budget: usize) -> RestartOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E3779B97F4A7C15));

    // budgets too small to build a simplex just score the initial point
    if budget < 3 * (spec.n + 1) + 2 {
        let start = initial_point(spec, &mut rng);
        let (c, failed) = cost_checked(&start, spec);
        return RestartOutcome {
            params: start,
            cost: c,
            evals: 1,
            failures: failed as usize,
            history: vec![(1, c)],
        };
    }

    let mut state = SearchState {
        evals: 0,
        failures: 0,
        best_cost: f64::INFINITY,
        best_x: Vec::new(),
        history: Vec::new(),
    };
    let plateau = PLATEAU_FRACTION * spec.w_fid;

    // fresh starts until one descends off the identity plateau
    while state.evals < budget {
        let start = initial_point(spec, &mut rng).flatten();
        let chunk = (budget - state.evals).min(5000);
        let abandon_after = 1800.min(chunk / 2);
        nm_round(spec, &mut state, &start, spec.bound * 0.08, chunk, Some((abandon_after, plateau)));
        if state.best_cost < plateau || state.evals >= budget {
            break;
        }
    }

    // polish the incumbent with a shrinking simplex
    let mut init_step = spec.bound * 0.01;
    while state.evals < budget && !state.best_x.is_empty() {
        let x = state.best_x.clone();
        let chunk = (budget - state.evals).min(4000);
        let converged = nm_round(spec, &mut state, &x, init_step, chunk, None);
        init_step = (init_step * 0.3).max(1e-4);
        if converged && init_step <= 1e-4 {
            break;
        }
    }

    RestartOutcome {
        params: WaveformParams::unflatten(&state.best_x, spec.n),
        cost: state.best_cost,
        evals: state.evals,
        failures: state.failures,
        history: state.history,
    }
}

struct SearchState {
    evals: usize,
    failures: usize,
    best_cost: f64,
    best_x: Vec<f64>,
    history: Vec<(usize, f64)>,
}

// One Nelder-Mead descent merged into the running search state; returns the
// convergence flag.
fn nm_round(
    spec: &CostSpec,
    state: &mut SearchState,
    x0: &[f64],
    init_step: f64,
    max_evals: usize,
    abandon: Option<(usize, f64)>,
) -> bool {
    let opts = SimplexOptions {
        init_step,
        f_tol: 1e-12,
        x_tol: 1e-8,
        max_evals,
        adaptive: false,
        abandon,
    };
    let mut round_evals = 0usize;
    let mut round_failures = 0usize;
    let mut round_best = f64::INFINITY;
    let mut round_best_x: Vec<f64> = Vec::new();
    let mut round_history: Vec<(usize, f64)> = Vec::new();
    let r = nelder_mead(
        |v: &[f64]| {
            let p = WaveformParams::unflatten(v, spec.n);
            let (c, failed) = cost_checked(&p, spec);
            if failed {
                round_failures += 1;
            }
            round_evals += 1;
            if c < round_best {
                round_best = c;
                round_best_x = v.to_vec();
                round_history.push((round_evals, c));
            }
            c
        },
        x0,
        &opts,
        |_| {},
    );
    for (i, c) in round_history {
        if c < state.best_cost {
            state.best_cost = c;
            state.history.push((state.evals + i, c));
        }
    }
    if round_best.is_finite() && round_best <= state.best_cost {
        state.best_x = round_best_x;
    }
    state.evals += round_evals;
    state.failures += round_failures;
    r.converged
}

/// Run `max_evals` cost evaluations split over seeded random restarts.
/// Restarts may execute concurrently; the reduction to the best result is
/// deterministic (ties broken by lowest restart index).
pub fn optimize(spec: &CostSpec, seed: u64, max_evals: usize) -> Result<SearchResult> {
    spec.validate()?;
    let max_evals = max_evals.max(1);
    let per_restart = 5000usize.min(max_evals);
    let restarts = max_evals.div_ceil(per_restart);
    let budgets: Vec<usize> = (0..restarts)
        .map(|r| {
            let lo = r * per_restart;
            let hi = ((r + 1) * per_restart).min(max_evals);
            hi - lo
        })
        .collect();

    let outcomes: Vec<RestartOutcome> = budgets
        .par_iter()
        .enumerate()
        .map(|(r, &budget)| run_restart(spec, seed, r, budget))
        .collect();

    // deterministic reduction and a restart-major global history
    let mut best_idx = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        if o.cost < outcomes[best_idx].cost {
            best_idx = i;
        }
    }
    let mut history: Vec<(usize, f64)> = Vec::new();
    let mut offset = 0usize;
    let mut global_best = f64::INFINITY;
    let mut evals = 0usize;
    let mut failures = 0usize;
    for o in &outcomes {
        for &(i, c) in &o.history {
            if c < global_best {
                global_best = c;
                history.push((offset + i, c));
            }
        }
        offset += o.evals;
        evals += o.evals;
        failures += o.failures;
    }
    let best = &outcomes[best_idx];
    Ok(SearchResult {
        params: best.params.clone(),
        cost: best.cost,
        evals,
        failures,
        history,
        seed,
    })
}

impl SearchResult {
    /// Search history as CSV (evaluation index, best cost).
    pub fn history_csv(&self) -> String {
        let mut out = String::from("eval,best_cost\n");
        for &(i, c) in &self.history {
            out.push_str(&format!("{i},{c:.11e}\n"));
        }
        out
    }
}
