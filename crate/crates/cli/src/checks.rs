//! Post-hoc checks on simulated schedules, and the `validate` suite.

use std::collections::BTreeMap;

use arsched::oracle::{check_admission, check_state_sequences, DifferentialConfig, DifferentialReport};
use arsched::{JobOutcome, Policy, Time};

/// Checks an accepted schedule against its requests: windows are respected,
/// PE counts match and no PE is booked twice at any instant.
pub fn replay_schedule(outcomes: &[JobOutcome], n_pes: usize) -> Result<(), String> {
    // time -> per-PE delta
    let mut deltas: BTreeMap<Time, Vec<i32>> = BTreeMap::new();
    for o in outcomes {
        let Some(a) = &o.admission else { continue };
        let r = &o.request;
        let end = a.start + r.duration;
        if a.start < r.ready || end > r.deadline {
            return Err(format!("job {} runs [{}, {}) outside [{}, {})", r.id, a.start, end, r.ready, r.deadline));
        }
        if a.pes.len() != r.n_pe {
            return Err(format!("job {} got {} PEs, asked for {}", r.id, a.pes.len(), r.n_pe));
        }
        for pe in a.pes.iter() {
            if pe.0 >= n_pes {
                return Err(format!("job {} placed on PE {} of {}", r.id, pe.0, n_pes));
            }
            deltas.entry(a.start).or_insert_with(|| vec![0; n_pes])[pe.0] += 1;
            deltas.entry(end).or_insert_with(|| vec![0; n_pes])[pe.0] -= 1;
        }
    }
    let mut load = vec![0i32; n_pes];
    for (t, delta) in deltas {
        for (pe, d) in delta.into_iter().enumerate() {
            load[pe] += d;
            if load[pe] > 1 {
                return Err(format!("PE {pe} double-booked at t={t}"));
            }
        }
    }
    Ok(())
}

/// One named check of the validate suite.
#[derive(Debug)]
pub struct SuiteResult {
    pub name: String,
    pub report: DifferentialReport,
}

/// Oracle differential suites: calendar state sequences, then admission for
/// every policy.
pub fn validation_suite(cases: usize, seed: u64) -> Vec<SuiteResult> {
    let cfg = DifferentialConfig {
        cases,
        seed,
        ..DifferentialConfig::default()
    };
    let mut out = vec![SuiteResult {
        name: "calendar state vs dense oracle".into(),
        report: check_state_sequences(&cfg),
    }];
    for policy in Policy::ALL {
        out.push(SuiteResult {
            name: format!("admission {policy} vs dense oracle"),
            report: check_admission(&cfg, policy),
        });
    }
    out
}
