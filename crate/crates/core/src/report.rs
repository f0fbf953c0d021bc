//! JSON report rendering with a pinned numeric format: complex numbers as
//! `[re, im]` pairs, every float rounded to 12 significant digits so repeated
//! runs serialize byte-identically.

use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use crate::gate::{GateMatrix, HeraldEvaluation, PtReport, RailDiagnostics};
use crate::model::{build_basis, QubitState, Rail, SystemConfig};

/// Round to 12 significant digits through the decimal representation.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float reparses")
}

pub fn complex_pair(z: C64) -> Value {
    json!([sig12(z.re), sig12(z.im)])
}

fn amplitude_list(m: &[C64; 4]) -> Value {
    Value::Array(m.iter().map(|&z| complex_pair(z)).collect())
}

fn diag_list(g: &GateMatrix) -> Value {
    amplitude_list(g.diag())
}

/// Shared report body of herald and pt-check results. Keys: m0, m1, Mh, Eh,
/// eta, p_herald, F_raw, F_herald, conjugacy_residual.
pub fn herald_json(eval: &HeraldEvaluation, config_hash: u64) -> Value {
    json!({
        "m0": amplitude_list(&eval.m0.m),
        "m1": amplitude_list(&eval.m1.m),
        "Mh": diag_list(&eval.result.mh),
        "Eh": diag_list(&eval.result.eh),
        "eta": sig12(eval.result.eta),
        "p_herald": sig12(eval.stats.p_herald),
        "F_raw": sig12(eval.stats.f_raw),
        "F_herald": sig12(eval.stats.f_herald),
        "conjugacy_residual": sig12(eval.result.conjugacy_residual),
        "config_hash": format!("{config_hash:016x}"),
        "code_version": env!("CARGO_PKG_VERSION"),
    })
}

fn rail_diag_json(d: &RailDiagnostics) -> Value {
    json!({
        "populations": d.populations.iter().map(|&p| sig12(p)).collect::<Vec<_>>(),
        "conditional_phase": sig12(d.conditional_phase),
        "max_leak": sig12(d.max_leak),
        "cz_ok": d.cz_ok,
    })
}

/// Herald body plus per-rail CZ diagnostics for the configured drive and its
/// PT partner, with the block basis labels for debugging.
pub fn pt_check_json(report: &PtReport, system: &SystemConfig, config_hash: u64) -> Value {
    let mut v = herald_json(&report.evaluation, config_hash);
    v["diagnostics"] = json!({
        "rail0": rail_diag_json(&report.rail0),
        "rail1": rail_diag_json(&report.rail1),
    });
    let mut basis = serde_json::Map::new();
    for rail in Rail::BOTH {
        let mut blocks = serde_json::Map::new();
        for q in QubitState::ALL {
            let block = build_basis(system, q, rail);
            blocks.insert(format!("q{}", q.index()), json!(block.labels()));
        }
        basis.insert(format!("rail{}", rail.index()), Value::Object(blocks));
    }
    v["basis"] = Value::Object(basis);
    v
}
