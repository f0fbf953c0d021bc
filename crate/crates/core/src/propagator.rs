//! Time-dependent Schrödinger integration, i·dψ/dt = H(t)ψ.
//!
//! Two independent integrators are provided. The default is an adaptive
//! Dormand–Prince 5(4) stepper with dense analytic evaluation of H at the
//! stage times (no precomputed sample grid). A deliberately low-tech
//! fixed-step classical RK4 ships alongside it as an in-repo cross-check;
//! the two share no stepping code. Neither renormalizes the state during
//! integration — norm drift is a quality signal.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Batch, HamiltonianBlock};

/// Complex amplitudes over a block's ordered basis.
pub type StateVector = Array1<C64>;

/// Integration method tag; the tag names the nominal convergence order.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4).
    Dopri5,
    /// Fixed-step classical 4th-order Runge–Kutta with `steps` steps.
    Rk4 { steps: usize },
}

impl Method {
    pub fn order(self) -> usize {
        match self {
            Method::Dopri5 => 5,
            Method::Rk4 { .. } => 4,
        }
    }
}

/// Default step count of the fixed-step oracle integrator.
pub const ORACLE_STEPS: usize = 100_000;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum step size in μs; must not exceed τ/100.
    pub max_step: f64,
    pub method: Method,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_step: 0.0025, method: Method::Dopri5 }
    }
}

impl IntegratorSettings {
    /// The oracle configuration: fixed-step RK4, 10⁵ steps.
    pub fn oracle() -> Self {
        Self { method: Method::Rk4 { steps: ORACLE_STEPS }, ..Self::default() }
    }

    /// Loosened tolerances for search loops where 1e−12 is wasted effort.
    pub fn coarse() -> Self {
        Self { rtol: 1e-9, atol: 1e-11, ..Self::default() }
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite()) {
            return Err(Error::InvalidConfig("integrator tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0 && self.max_step <= tau / 100.0) {
            return Err(Error::InvalidConfig(format!(
                "max step {} μs must lie in (0, τ/100 = {}]",
                self.max_step,
                tau / 100.0
            )));
        }
        if let Method::Rk4 { steps } = self.method {
            if steps == 0 {
                return Err(Error::InvalidConfig("rk4 step count must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A time-dependent Hermitian generator evaluated into a caller buffer.
pub trait HamiltonianOp {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut Array2<C64>) -> Result<()>;
}

/// One pulse window of a block Hamiltonian.
pub struct BlockHamiltonian<'a> {
    pub block: &'a HamiltonianBlock,
    pub batch: Batch,
}

impl HamiltonianOp for BlockHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.block.dim()
    }

    fn eval_into(&self, t: f64, out: &mut Array2<C64>) -> Result<()> {
        self.block.eval_into(t, self.batch, out)
    }
}

/// Arbitrary matrix-valued function of time, mostly for tests and closed-form
/// cross-checks.
pub struct FnHamiltonian<F: Fn(f64) -> Array2<C64>> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64) -> Array2<C64>> HamiltonianOp for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut Array2<C64>) -> Result<()> {
        out.assign(&(self.f)(t));
        Ok(())
    }
}

// rhs of the Schrödinger equation: out = −i H y
fn rhs_into(h: &Array2<C64>, y: &StateVector, out: &mut StateVector) {
    let n = y.len();
    for i in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += h[(i, j)] * y[j];
        }
        out[i] = C64::new(acc.im, -acc.re); // −i · acc
    }
}

pub fn norm(psi: &StateVector) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Evolve `psi0` over `span` under the given generator and settings.
pub fn evolve_op<H: HamiltonianOp>(
    h: &H,
    psi0: &StateVector,
    span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::InvalidConfig(format!("bad integration span [{t0}, {t1}]")));
    }
    match settings.method {
        Method::Dopri5 => dopri5(h, psi0, span, settings),
        Method::Rk4 { steps } => fixed_rk4(h, psi0, span, steps),
    }
}

/// Evolve one block over `span` within pulse window `batch`.
pub fn evolve(
    block: &HamiltonianBlock,
    batch: Batch,
    psi0: &StateVector,
    span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    settings.validate(block.tau())?;
    evolve_op(&BlockHamiltonian { block, batch }, psi0, span, settings)
}

/// Column-by-column propagator matrix over `span`: column j is the evolution
/// of basis vector j. Unitary to integrator accuracy for Hermitian blocks.
pub fn propagate_unitary_op<H: HamiltonianOp>(
    h: &H,
    span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<Array2<C64>> {
    let n = h.dim();
    let mut u = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = C64::new(1.0, 0.0);
        let col = evolve_op(h, &e, span, settings)?;
        for i in 0..n {
            u[(i, j)] = col[i];
        }
    }
    Ok(u)
}

/// Propagator matrix of one block pulse window.
pub fn propagate_block_unitary(
    block: &HamiltonianBlock,
    batch: Batch,
    span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<Array2<C64>> {
    settings.validate(block.tau())?;
    propagate_unitary_op(&BlockHamiltonian { block, batch }, span, settings)
}

/// Evolve and report the state at each requested sample time (the first
/// sample must equal `span.0`). Used for trajectory dumps.
pub fn evolve_sampled<H: HamiltonianOp>(
    h: &H,
    psi0: &StateVector,
    samples: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<StateVector>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut psi = psi0.clone();
    out.push(psi.clone());
    for w in samples.windows(2) {
        psi = evolve_op(h, &psi, (w[0], w[1]), settings)?;
        out.push(psi.clone());
    }
    Ok(out)
}

// Dormand–Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri5<H: HamiltonianOp>(
    h_op: &H,
    psi0: &StateVector,
    (t0, t1): (f64, f64),
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    let n = h_op.dim();
    let mut hbuf: Array2<C64> = Array2::zeros((n, n));
    let mut k: Vec<StateVector> = (0..7).map(|_| Array1::zeros(n)).collect();
    let mut stage: StateVector = Array1::zeros(n);
    let mut y = psi0.clone();
    let mut y5: StateVector = Array1::zeros(n);

    let mut t = t0;
    let mut h = settings.max_step.min(t1 - t0);
    let h_min = (t1 - t0) * 1e-14;

    // FSAL seed
    h_op.eval_into(t, &mut hbuf)?;
    {
        let (k1, _) = k.split_at_mut(1);
        rhs_into(&hbuf, &y, &mut k1[0]);
    }

    while t < t1 {
        h = h.min(t1 - t);
        // stages 2..7 (stage 1 comes from FSAL)
        for s in 1..7 {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        acc += kj[i] * a;
                    }
                }
                stage[i] = y[i] + acc * h;
            }
            h_op.eval_into(t + C[s] * h, &mut hbuf)?;
            rhs_into(&hbuf, &stage, &mut k[s]);
        }
        // 5th-order solution and embedded error estimate
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut acc5 = C64::new(0.0, 0.0);
            let mut acce = C64::new(0.0, 0.0);
            for (j, kj) in k.iter().enumerate() {
                if B5[j] != 0.0 {
                    acc5 += kj[i] * B5[j];
                }
                let d = B5[j] - B4[j];
                if d != 0.0 {
                    acce += kj[i] * d;
                }
            }
            y5[i] = y[i] + acc5 * h;
            let sc = settings.atol + settings.rtol * y[i].norm().max(y5[i].norm());
            let e = (acce * h).norm() / sc;
            err_sq += e * e;
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            // non-finite amplitudes: shrink hard, fail on underflow
            h *= 0.1;
            if h < h_min {
                return Err(Error::IntegrationFailure { t, msg: "non-finite amplitudes".into() });
            }
            h_op.eval_into(t, &mut hbuf)?;
            let (k1, _) = k.split_at_mut(1);
            rhs_into(&hbuf, &y, &mut k1[0]);
            continue;
        }

        if err <= 1.0 {
            t += h;
            y.assign(&y5);
            k.swap(0, 6); // FSAL: k7 at the accepted point is next step's k1
            let factor = if err < 1e-30 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(settings.max_step);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
        }
        if h < h_min && t < t1 {
            return Err(Error::IntegrationFailure { t, msg: "step size underflow".into() });
        }
    }
    Ok(y)
}

/// Fixed-step classical RK4. Independent of the adaptive path; used as the
/// brute-force oracle for derived values.
pub fn fixed_rk4<H: HamiltonianOp>(
    h_op: &H,
    psi0: &StateVector,
    (t0, t1): (f64, f64),
    steps: usize,
) -> Result<StateVector> {
    let n = h_op.dim();
    let dt = (t1 - t0) / steps as f64;
    let mut hbuf: Array2<C64> = Array2::zeros((n, n));
    let mut y = psi0.clone();
    let mut k1: StateVector = Array1::zeros(n);
    let mut k2: StateVector = Array1::zeros(n);
    let mut k3: StateVector = Array1::zeros(n);
    let mut k4: StateVector = Array1::zeros(n);
    let mut tmp: StateVector = Array1::zeros(n);
    for step in 0..steps {
        let t = t0 + dt * step as f64;
        h_op.eval_into(t, &mut hbuf)?;
        rhs_into(&hbuf, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (dt / 2.0);
        }
        h_op.eval_into(t + dt / 2.0, &mut hbuf)?;
        rhs_into(&hbuf, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + k2[i] * (dt / 2.0);
        }
        rhs_into(&hbuf, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + k3[i] * dt;
        }
        h_op.eval_into(t + dt, &mut hbuf)?;
        rhs_into(&hbuf, &tmp, &mut k4);
        for i in 0..n {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        if step % 4096 == 0 && y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::IntegrationFailure { t, msg: "non-finite amplitudes".into() });
        }
    }
    Ok(y)
}
