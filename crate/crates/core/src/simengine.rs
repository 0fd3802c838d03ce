//! Discrete-event admission loop.
//!
//! Requests are admitted or declined once, at their arrival instant. An
//! accepted reservation is committed to the calendar immediately and released
//! by a completion event at its end time. At equal timestamps completions run
//! before arrivals, and arrivals keep their input order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use thiserror::Error;

use crate::availability::{AvailabilityCalendar, CalendarError, Placement};
use crate::pes::{ClusterConfig, PeSet};
use crate::policies::Policy;
use crate::workload::ArRequest;
use crate::Time;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("requests not sorted by arrival: job {id} arrives at {arrival} after {previous}")]
    Unsorted { id: u64, arrival: Time, previous: Time },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("calendar rejected job {job} at t={time}: {source}")]
    Calendar {
        job: u64,
        time: Time,
        #[source]
        source: CalendarError,
    },
    #[error("admitted job {job} violates its window: start {start}")]
    WindowViolation { job: u64, start: Time },
    #[error("calendar not drained after the last completion:\n{0}")]
    NotDrained(String),
}

/// A committed reservation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Admission {
    pub start: Time,
    pub pes: PeSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobOutcome {
    pub request: ArRequest,
    pub admission: Option<Admission>,
}

impl JobOutcome {
    pub fn accepted(&self) -> bool {
        self.admission.is_some()
    }

    pub fn start(&self) -> Option<Time> {
        self.admission.as_ref().map(|a| a.start)
    }

    /// Time from ready to actual start.
    pub fn wait(&self) -> Option<Time> {
        self.start().map(|s| s - self.request.ready)
    }

    /// `(wait + runtime) / runtime`.
    pub fn slowdown(&self) -> Option<f64> {
        self.wait()
            .map(|w| (w + self.request.duration) as f64 / self.request.duration as f64)
    }
}

/// What the engine saw and decided for one arrival.
pub struct AdmissionEvent<'a> {
    pub now: Time,
    pub request: &'a ArRequest,
    /// Calendar state just before the decision.
    pub calendar: &'a AvailabilityCalendar,
    pub decision: Option<&'a Placement>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Completion,
    Arrival,
}

/// Ordered by time, then kind (completions first), then insertion sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct SimEvent {
    time: Time,
    kind: EventKind,
    seq: u64,
    job: usize,
}

pub struct Simulator {
    cluster: ClusterConfig,
    policy: Policy,
    calendar: AvailabilityCalendar,
}

impl Simulator {
    pub fn new(cluster: ClusterConfig, policy: Policy) -> Self {
        Self {
            cluster,
            policy,
            calendar: AvailabilityCalendar::new(cluster.n_pes()),
        }
    }

    pub fn calendar(&self) -> &AvailabilityCalendar {
        &self.calendar
    }

    pub fn run(&mut self, requests: &[ArRequest]) -> Result<Vec<JobOutcome>, SimError> {
        self.run_observed(requests, |_| {})
    }

    /// Runs the whole event loop, calling `observe` after every admission decision.
    pub fn run_observed<F>(&mut self, requests: &[ArRequest], mut observe: F) -> Result<Vec<JobOutcome>, SimError>
    where
        F: FnMut(&AdmissionEvent<'_>),
    {
        let mut previous = 0;
        for r in requests {
            if r.arrival < previous {
                return Err(SimError::Unsorted {
                    id: r.id,
                    arrival: r.arrival,
                    previous,
                });
            }
            previous = r.arrival;
            r.check(self.cluster.n_pes()).map_err(SimError::InvalidRequest)?;
        }

        let mut outcomes: Vec<JobOutcome> = requests
            .iter()
            .map(|r| JobOutcome {
                request: r.clone(),
                admission: None,
            })
            .collect();
        let mut queue = BinaryHeap::new();
        let mut seq = 0u64;
        for (job, r) in requests.iter().enumerate() {
            queue.push(Reverse(SimEvent {
                time: r.arrival,
                kind: EventKind::Arrival,
                seq,
                job,
            }));
            seq += 1;
        }

        while let Some(Reverse(event)) = queue.pop() {
            let request = &requests[event.job];
            let calendar_err = |source| SimError::Calendar {
                job: request.id,
                time: event.time,
                source,
            };
            match event.kind {
                EventKind::Arrival => {
                    let decision = self
                        .calendar
                        .find_allocation(request.ready, request.duration, request.deadline, request.n_pe, self.policy)
                        .map_err(calendar_err)?;
                    observe(&AdmissionEvent {
                        now: event.time,
                        request,
                        calendar: &self.calendar,
                        decision: decision.as_ref(),
                    });
                    let Some(placement) = decision else { continue };
                    let end = placement.start + request.duration;
                    if placement.start < request.ready || end > request.deadline {
                        return Err(SimError::WindowViolation {
                            job: request.id,
                            start: placement.start,
                        });
                    }
                    self.calendar
                        .add_allocation(placement.start, end, &placement.pes)
                        .map_err(calendar_err)?;
                    queue.push(Reverse(SimEvent {
                        time: end,
                        kind: EventKind::Completion,
                        seq,
                        job: event.job,
                    }));
                    seq += 1;
                    outcomes[event.job].admission = Some(Admission {
                        start: placement.start,
                        pes: placement.pes,
                    });
                }
                EventKind::Completion => {
                    let admission = outcomes[event.job]
                        .admission
                        .as_ref()
                        .expect("completion scheduled only for admitted jobs");
                    self.calendar
                        .delete_allocation(admission.start, event.time, &admission.pes)
                        .map_err(calendar_err)?;
                }
            }
        }

        if !self.calendar.is_empty() {
            return Err(SimError::NotDrained(self.calendar.to_string()));
        }
        Ok(outcomes)
    }
}

/// Runs `requests` through a fresh simulator.
pub fn run(requests: &[ArRequest], cluster: ClusterConfig, policy: Policy) -> Result<Vec<JobOutcome>, SimError> {
    Simulator::new(cluster, policy).run(requests)
}

/// Tab-separated `id accepted start wait slowdown` lines; rejected jobs leave
/// the last three columns empty.
pub fn write_outcomes<W: Write>(outcomes: &[JobOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "id\taccepted\tstart\twait\tslowdown")?;
    for o in outcomes {
        match (&o.admission, o.wait(), o.slowdown()) {
            (Some(a), Some(wait), Some(slowdown)) => {
                writeln!(out, "{}\t1\t{}\t{}\t{:.6}", o.request.id, a.start, wait, slowdown)?
            }
            _ => writeln!(out, "{}\t0\t\t\t", o.request.id)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: u64, arrival: Time, ready: Time, duration: Time, deadline: Time, n_pe: usize) -> ArRequest {
        ArRequest {
            id,
            arrival,
            ready,
            duration,
            deadline,
            n_pe,
        }
    }

    #[test]
    fn lone_request_starts_at_ready_time() {
        let out = run(&[req(0, 0, 5, 10, 40, 4)], ClusterConfig::new(8).unwrap(), Policy::PeBestFit).unwrap();
        assert_eq!(out[0].start(), Some(5));
        assert_eq!(out[0].wait(), Some(0));
        assert_eq!(out[0].slowdown(), Some(1.0));
    }

    #[test]
    fn worked_example_through_the_engine() {
        // job1 on {0,1} over [0,3), job2 on {2,3} over [0,1), job3 on {0} over
        // [8,10), then the new request (ready 2, duration 2, deadline 9, 2 PEs).
        let requests = [
            req(1, 0, 0, 3, 3, 2),
            req(2, 0, 0, 1, 1, 2),
            req(3, 0, 8, 2, 10, 1),
            req(4, 0, 2, 2, 9, 2),
        ];
        let cluster = ClusterConfig::new(8).unwrap();
        let mut sim = Simulator::new(cluster, Policy::PeWorstFit);
        let mut snapshot = None;
        let out = sim
            .run_observed(&requests, |ev| {
                if ev.request.id == 4 {
                    snapshot = Some(ev.calendar.to_string());
                }
            })
            .unwrap();
        assert_eq!(snapshot.unwrap(), "0\t0,1,2,3\n1\t0,1\n3\t-\n8\t0\n10\t-\n");
        assert_eq!(out[3].start(), Some(3));
        assert_eq!(out[3].admission.as_ref().unwrap().pes.ids(), vec![0, 1]);
        assert!(sim.calendar().is_empty());
    }

    #[test]
    fn second_full_machine_request_is_rejected() {
        let requests = [req(0, 0, 0, 10, 10, 4), req(1, 0, 0, 10, 10, 4)];
        let out = run(&requests, ClusterConfig::new(4).unwrap(), Policy::FirstFit).unwrap();
        assert!(out[0].accepted());
        assert!(!out[1].accepted());
    }

    #[test]
    fn completion_frees_pes_before_simultaneous_arrival() {
        let requests = [req(0, 0, 0, 10, 10, 4), req(1, 10, 10, 5, 15, 4)];
        let out = run(&requests, ClusterConfig::new(4).unwrap(), Policy::FirstFit).unwrap();
        assert!(out.iter().all(JobOutcome::accepted));
    }

    #[test]
    fn rejects_unsorted_and_invalid_input() {
        let cluster = ClusterConfig::new(4).unwrap();
        assert!(matches!(
            run(&[req(0, 5, 5, 1, 6, 1), req(1, 2, 2, 1, 3, 1)], cluster, Policy::FirstFit),
            Err(SimError::Unsorted { id: 1, .. })
        ));
        assert!(matches!(
            run(&[req(0, 5, 4, 1, 6, 1)], cluster, Policy::FirstFit),
            Err(SimError::InvalidRequest(_))
        ));
        assert!(matches!(
            run(&[req(0, 0, 0, 1, 6, 5)], cluster, Policy::FirstFit),
            Err(SimError::InvalidRequest(_))
        ));
    }

    #[test]
    fn outcome_export_format() {
        let requests = [req(0, 0, 0, 60, 200, 4), req(1, 0, 0, 60, 60, 4)];
        let out = run(&requests, ClusterConfig::new(4).unwrap(), Policy::FirstFit).unwrap();
        let mut buf = Vec::new();
        write_outcomes(&out, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "id\taccepted\tstart\twait\tslowdown\n0\t1\t0\t0\t1.000000\n1\t0\t\t\t\n"
        );
    }
}
