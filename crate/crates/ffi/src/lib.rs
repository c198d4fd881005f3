//! C ABI over the optimizer.
//!
//! Objects cross the boundary as opaque pointers created and freed by this
//! library. Every fallible function returns a [`CircoptStatus`] and writes its
//! result through an out-pointer; the message of the last failure on the
//! calling thread is available from [`circopt_last_error`]. Strings returned
//! by the library must be released with [`circopt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use circopt::agent::Agent;
use circopt::circuit::{emit_qasm, equivalent_up_to_phase, parse_qasm, Circuit, CostMetric, GateSet};
use circopt::config::{Profile, ProfileName};
use circopt::search::optimize;
use circopt::xfer::{generate_ruleset, load_ruleset, GenConfig, RuleSet};
use circopt::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircoptStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    InvalidInput = 5,
    Verification = 6,
    Internal = 7,
}

/// Opaque circuit handle.
pub struct CircoptCircuit(Circuit);

/// Opaque rule-set handle.
pub struct CircoptRuleSet(RuleSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CircoptStatus {
    match e {
        Error::Syntax { .. } | Error::UnknownGate { .. } | Error::RuleFormat { .. } | Error::Json(_) => CircoptStatus::Parse,
        Error::Io(_) => CircoptStatus::Io,
        Error::RuleVerification { .. } => CircoptStatus::Verification,
        _ => CircoptStatus::InvalidInput,
    }
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CircoptStatus, String)>) -> CircoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CircoptStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CircoptStatus::Internal
        }
    }
}

fn lib(e: Error) -> (CircoptStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (CircoptStatus, String) {
    (CircoptStatus::NullArgument, "null pointer argument".into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (CircoptStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CircoptStatus::InvalidUtf8, "string is not UTF-8".into()))
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), (CircoptStatus, String)> {
    let c = CString::new(s).map_err(|_| (CircoptStatus::Internal, "string contains a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn circopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn circopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse OpenQASM 2.0 text.
///
/// # Safety
/// `qasm` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuit_from_qasm(qasm: *const c_char, out: *mut *mut CircoptCircuit) -> CircoptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let c = parse_qasm(str_arg(qasm)?).map_err(lib)?;
        *out = Box::into_raw(Box::new(CircoptCircuit(c)));
        Ok(())
    })
}

/// Release a circuit. Null is ignored.
///
/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuit_free(c: *mut CircoptCircuit) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Emit OpenQASM 2.0 text; free it with `circopt_string_free`.
///
/// # Safety
/// `c` must be a live circuit; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuit_to_qasm(c: *const CircoptCircuit, out: *mut *mut c_char) -> CircoptStatus {
    guard(|| {
        if c.is_null() || out.is_null() {
            return Err(null());
        }
        out_string(out, emit_qasm(&(*c).0))
    })
}

/// Number of gates.
///
/// # Safety
/// `c` must be a live circuit; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuit_gate_count(c: *const CircoptCircuit, out: *mut usize) -> CircoptStatus {
    guard(|| {
        if c.is_null() || out.is_null() {
            return Err(null());
        }
        *out = (*c).0.len();
        Ok(())
    })
}

/// Cost under `metric`: `total`, `cnot` or `depth`.
///
/// # Safety
/// `c` must be a live circuit, `metric` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuit_cost(
    c: *const CircoptCircuit,
    metric: *const c_char,
    out: *mut f64,
) -> CircoptStatus {
    guard(|| {
        if c.is_null() || out.is_null() {
            return Err(null());
        }
        let m: CostMetric = str_arg(metric)?.parse().map_err(lib)?;
        if matches!(m, CostMetric::Fidelity(_)) {
            return Err((CircoptStatus::InvalidInput, "fidelity needs an error model; not available here".into()));
        }
        *out = circopt::circuit::cost(&(*c).0, &m).map_err(lib)?;
        Ok(())
    })
}

/// Whether two circuits have equal unitaries up to global phase (1) or not (0).
///
/// # Safety
/// `a` and `b` must be live circuits; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_circuits_equivalent(
    a: *const CircoptCircuit,
    b: *const CircoptCircuit,
    out: *mut i32,
) -> CircoptStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null());
        }
        *out = i32::from(equivalent_up_to_phase(&(*a).0, &(*b).0, 4).map_err(lib)?);
        Ok(())
    })
}

/// Load and verify a rule file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_ruleset_load(path: *const c_char, out: *mut *mut CircoptRuleSet) -> CircoptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let set = load_ruleset(Path::new(str_arg(path)?), false).map_err(lib)?;
        *out = Box::into_raw(Box::new(CircoptRuleSet(set)));
        Ok(())
    })
}

/// Generate a verified rule set over `gate_set` (`nam` or `ibm`).
///
/// # Safety
/// `gate_set` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_ruleset_generate(
    gate_set: *const c_char,
    max_qubits: usize,
    max_gates: usize,
    param_exprs: i32,
    out: *mut *mut CircoptRuleSet,
) -> CircoptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let name = str_arg(gate_set)?;
        let gs = GateSet::by_name(name)
            .ok_or_else(|| (CircoptStatus::InvalidInput, format!("unknown gate set `{name}`")))?;
        let mut cfg = GenConfig::new(gs, max_qubits, max_gates);
        cfg.param_exprs = param_exprs != 0;
        let (set, _) = generate_ruleset(&cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(CircoptRuleSet(set)));
        Ok(())
    })
}

/// Number of actions (rules plus NOP).
///
/// # Safety
/// `r` must be a live rule set; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_ruleset_len(r: *const CircoptRuleSet, out: *mut usize) -> CircoptStatus {
    guard(|| {
        if r.is_null() || out.is_null() {
            return Err(null());
        }
        *out = (*r).0.len();
        Ok(())
    })
}

/// Release a rule set. Null is ignored.
///
/// # Safety
/// `r` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn circopt_ruleset_free(r: *mut CircoptRuleSet) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Optimize total gate count with the desk profile, a freshly initialized
/// agent seeded by `seed`, and `steps` environment steps.
///
/// # Safety
/// `c` and `r` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circopt_optimize(
    c: *const CircoptCircuit,
    r: *const CircoptRuleSet,
    steps: usize,
    seed: u64,
    out: *mut *mut CircoptCircuit,
) -> CircoptStatus {
    guard(|| {
        if c.is_null() || r.is_null() || out.is_null() {
            return Err(null());
        }
        let (circuit, rules) = (&(*c).0, &(*r).0);
        let profile = Profile::named(ProfileName::Desk);
        let agent = Agent::new(profile.agent.clone(), &rules.gate_set, rules.len(), seed).map_err(lib)?;
        let search = circopt::search::SearchConfig { step_budget: steps, ..profile.search };
        let o = optimize(circuit, &agent, rules, &CostMetric::TotalGates, &profile.finetune, &search, seed)
            .map_err(lib)?;
        *out = Box::into_raw(Box::new(CircoptCircuit(o.circuit)));
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let q = CString::new("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\nh q[0];\nh q[0];\n").unwrap();
        let mut c = ptr::null_mut();
        unsafe {
            assert_eq!(circopt_circuit_from_qasm(q.as_ptr(), &mut c), CircoptStatus::Ok);
            let mut n = 0;
            assert_eq!(circopt_circuit_gate_count(c, &mut n), CircoptStatus::Ok);
            assert_eq!(n, 2);
            let mut s = ptr::null_mut();
            assert_eq!(circopt_circuit_to_qasm(c, &mut s), CircoptStatus::Ok);
            assert!(CStr::from_ptr(s).to_str().unwrap().contains("h q[0];"));
            circopt_string_free(s);
            let bad = CString::new("qreg q[1]; foo q[0];").unwrap();
            let mut d = ptr::null_mut();
            assert_eq!(circopt_circuit_from_qasm(bad.as_ptr(), &mut d), CircoptStatus::Parse);
            assert!(!circopt_last_error().is_null());
            assert_eq!(circopt_circuit_gate_count(ptr::null(), &mut n), CircoptStatus::NullArgument);
            circopt_circuit_free(c);
        }
    }
}
