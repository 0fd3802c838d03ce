//! Brute-force reference model of the availability calendar.
//!
//! A [`DenseTimeline`] stores one boolean per (PE, tick). Every query is
//! answered by scanning cells, with no shared code path with the slot-record
//! calendar, so the two can be compared on small instances. The differential
//! drivers at the bottom of this module run randomized comparisons and are
//! used by the test suites and by the `validate` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::availability::{AvailabilityCalendar, EndTime};
use crate::pes::PeSet;
use crate::policies::Policy;
use crate::Time;

pub const MAX_PES: usize = 64;
pub const MAX_HORIZON: Time = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("timeline of {n_pes} PEs x {horizon} ticks exceeds {MAX_PES} x {MAX_HORIZON}")]
    TooLarge { n_pes: usize, horizon: Time },
    #[error("interval [{start}, {end}) outside horizon {horizon}")]
    OutOfRange { start: Time, end: Time, horizon: Time },
    #[error("cell pe={pe} tick={tick} is {}", if *.busy { "already busy" } else { "not busy" })]
    Cell { pe: usize, tick: Time, busy: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseTimeline {
    n_pes: usize,
    horizon: Time,
    busy: Vec<Vec<bool>>,
}

/// Rectangle as computed by the oracle; `t_end == None` means it runs past the horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseRectangle {
    pub start: Time,
    pub t_begin: Time,
    pub t_end: Option<Time>,
    pub free: Vec<usize>,
}

/// Which start times [`DenseTimeline::find`] considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartScan {
    /// Every integer start in the window.
    Exhaustive,
    /// Window ends plus occupancy change points, and change points shifted
    /// back by the duration.
    ChangePoints,
}

impl DenseTimeline {
    pub fn new(n_pes: usize, horizon: Time) -> Result<Self, OracleError> {
        if n_pes == 0 || n_pes > MAX_PES || horizon > MAX_HORIZON {
            return Err(OracleError::TooLarge { n_pes, horizon });
        }
        Ok(Self {
            n_pes,
            horizon,
            busy: vec![vec![false; horizon as usize]; n_pes],
        })
    }

    /// Samples `calendar` at every tick below `horizon`.
    pub fn from_calendar(calendar: &AvailabilityCalendar, horizon: Time) -> Result<Self, OracleError> {
        let mut timeline = Self::new(calendar.n_pes(), horizon)?;
        for tick in 0..horizon {
            for pe in calendar.busy_at(tick).ids() {
                timeline.busy[pe][tick as usize] = true;
            }
        }
        Ok(timeline)
    }

    pub fn n_pes(&self) -> usize {
        self.n_pes
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn is_busy(&self, pe: usize, tick: Time) -> bool {
        tick < self.horizon && self.busy[pe][tick as usize]
    }

    pub fn add(&mut self, start: Time, end: Time, pes: &[usize]) -> Result<(), OracleError> {
        self.set(start, end, pes, true)
    }

    pub fn delete(&mut self, start: Time, end: Time, pes: &[usize]) -> Result<(), OracleError> {
        self.set(start, end, pes, false)
    }

    fn set(&mut self, start: Time, end: Time, pes: &[usize], value: bool) -> Result<(), OracleError> {
        if start >= end || end > self.horizon || pes.iter().any(|&p| p >= self.n_pes) {
            return Err(OracleError::OutOfRange {
                start,
                end,
                horizon: self.horizon,
            });
        }
        for &pe in pes {
            for tick in start..end {
                if self.busy[pe][tick as usize] == value {
                    return Err(OracleError::Cell { pe, tick, busy: value });
                }
            }
        }
        for &pe in pes {
            for tick in start..end {
                self.busy[pe][tick as usize] = value;
            }
        }
        Ok(())
    }

    pub fn is_idle(&self) -> bool {
        self.busy.iter().all(|row| row.iter().all(|b| !b))
    }

    pub fn busy_at(&self, tick: Time) -> Vec<usize> {
        (0..self.n_pes).filter(|&pe| self.is_busy(pe, tick)).collect()
    }

    /// Ticks at which the busy column differs from the previous tick's
    /// (everything is idle before 0 and from the horizon on).
    pub fn change_points(&self) -> Vec<Time> {
        (0..=self.horizon)
            .filter(|&t| {
                (0..self.n_pes).any(|pe| {
                    let before = t > 0 && self.is_busy(pe, t - 1);
                    before != self.is_busy(pe, t)
                })
            })
            .collect()
    }

    pub fn free_pes(&self, start: Time, end: Time) -> Vec<usize> {
        (0..self.n_pes)
            .filter(|&pe| (start..end).all(|t| !self.is_busy(pe, t)))
            .collect()
    }

    pub fn max_rectangle(&self, start: Time, duration: Time) -> DenseRectangle {
        let free = self.free_pes(start, start + duration);
        let all_free = |t: Time| free.iter().all(|&pe| !self.is_busy(pe, t));
        let mut t_begin = start;
        while t_begin > 0 && all_free(t_begin - 1) {
            t_begin -= 1;
        }
        let mut t_end = start + duration;
        while t_end < self.horizon && all_free(t_end) {
            t_end += 1;
        }
        DenseRectangle {
            start,
            t_begin,
            t_end: (t_end < self.horizon).then_some(t_end),
            free,
        }
    }

    pub fn candidate_starts(&self, ready: Time, duration: Time, deadline: Time) -> Vec<Time> {
        let latest = deadline - duration;
        let points = self.change_points();
        let mut starts: Vec<Time> = vec![ready, latest];
        starts.extend(points.iter().copied().filter(|&t| ready <= t && t <= latest));
        starts.extend(
            points
                .iter()
                .filter(|&&t| t >= ready + duration && t <= deadline)
                .map(|&t| t - duration),
        );
        starts.sort_unstable();
        starts.dedup();
        starts
    }

    /// Exhaustive admission decision: `(start, lowest n_pe free ids)`, or `None`.
    pub fn find(
        &self,
        ready: Time,
        duration: Time,
        deadline: Time,
        n_pe: usize,
        policy: Policy,
        scan: StartScan,
    ) -> Option<(Time, Vec<usize>)> {
        if self.is_idle() {
            return Some((ready, (0..n_pe).collect()));
        }
        let starts: Vec<Time> = match scan {
            StartScan::Exhaustive => (ready..=deadline - duration).collect(),
            StartScan::ChangePoints => self.candidate_starts(ready, duration, deadline),
        };
        let mut best: Option<DenseRectangle> = None;
        for start in starts {
            let rect = self.max_rectangle(start, duration);
            if rect.free.len() < n_pe {
                continue;
            }
            let replace = match &best {
                None => true,
                Some(current) => strictly_preferred(policy, &rect, current),
            };
            if replace {
                best = Some(rect);
            }
        }
        best.map(|r| (r.start, r.free[..n_pe].to_vec()))
    }
}

fn rect_duration(r: &DenseRectangle) -> Option<u128> {
    r.t_end.map(|e| u128::from(e - r.t_begin))
}

/// `None` is infinite.
fn cmp_unbounded(a: Option<u128>, b: Option<u128>) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    match (a, b) {
        (None, None) => Equal,
        (None, Some(_)) => Greater,
        (Some(_), None) => Less,
        (Some(x), Some(y)) => x.cmp(&y),
    }
}

/// Whether `a` beats `b` outright; candidates arrive in ascending start order,
/// so keeping the incumbent on equality realises the earliest-start rule.
fn strictly_preferred(policy: Policy, a: &DenseRectangle, b: &DenseRectangle) -> bool {
    use std::cmp::Ordering::*;
    let area = |r: &DenseRectangle| rect_duration(r).map(|d| d * r.free.len() as u128);
    let ord = match policy {
        Policy::FirstFit => return a.start < b.start,
        Policy::PeBestFit => a.free.len().cmp(&b.free.len()),
        Policy::PeWorstFit => b.free.len().cmp(&a.free.len()),
        Policy::DurationBestFit => cmp_unbounded(rect_duration(a), rect_duration(b)),
        Policy::DurationWorstFit => cmp_unbounded(rect_duration(b), rect_duration(a)),
        Policy::PeDurationBestFit => cmp_unbounded(area(a), area(b)),
        Policy::PeDurationWorstFit => cmp_unbounded(area(b), area(a)),
    };
    ord == Less || (ord == Equal && a.start < b.start)
}

/// Converts a calendar rectangle end into the oracle's representation.
pub fn end_as_option(end: EndTime) -> Option<Time> {
    match end {
        EndTime::At(t) => Some(t),
        EndTime::Open => None,
    }
}

/// Settings for the randomized differential drivers.
#[derive(Clone, Copy, Debug)]
pub struct DifferentialConfig {
    pub cases: usize,
    pub max_pes: usize,
    pub horizon: Time,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DifferentialConfig {
    fn default() -> Self {
        Self {
            cases: 1000,
            max_pes: 16,
            horizon: 256,
            steps: 40,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DifferentialReport {
    pub cases: usize,
    pub checks: usize,
    pub mismatches: Vec<String>,
    /// Queries the calendar rejected while some non-candidate integer start was feasible.
    pub candidate_gaps: usize,
    /// Queries where an exhaustive scan picked a different start than the candidate scan.
    pub exhaustive_disagreements: usize,
}

impl DifferentialReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn fail(&mut self, msg: String) {
        // Keep the report readable on a badly broken build.
        if self.mismatches.len() < 20 {
            self.mismatches.push(msg);
        }
    }
}

struct Live {
    start: Time,
    end: Time,
    pes: Vec<usize>,
}

/// Random valid reservation against the oracle's current state, if one is found.
fn random_reservation(rng: &mut ChaCha8Rng, timeline: &DenseTimeline, max_len: Time) -> Option<Live> {
    for _ in 0..8 {
        let start = rng.random_range(0..timeline.horizon() - 1);
        let len = rng.random_range(1..=max_len.min(timeline.horizon() - start));
        let mut free = timeline.free_pes(start, start + len);
        if free.is_empty() {
            continue;
        }
        let want = rng.random_range(1..=free.len());
        while free.len() > want {
            free.remove(rng.random_range(0..free.len()));
        }
        return Some(Live {
            start,
            end: start + len,
            pes: free,
        });
    }
    None
}

fn pe_set(n_pes: usize, ids: &[usize]) -> PeSet {
    PeSet::from_ids(n_pes, ids.iter().copied()).expect("oracle ids are in range")
}

/// Compares calendar state and read queries against the oracle at one step.
fn compare_state(
    rng: &mut ChaCha8Rng,
    calendar: &AvailabilityCalendar,
    timeline: &DenseTimeline,
    report: &mut DifferentialReport,
    context: &str,
) {
    report.checks += 1;
    if let Err(e) = calendar.check_invariants() {
        report.fail(format!("{context}: {e}"));
    }
    match DenseTimeline::from_calendar(calendar, timeline.horizon()) {
        Ok(snapshot) if snapshot == *timeline => {}
        _ => report.fail(format!("{context}: occupancy differs\n{calendar}")),
    }
    let times: Vec<Time> = calendar.times().iter().copied().collect();
    if times != timeline.change_points() {
        report.fail(format!("{context}: record times {times:?} != change points {:?}", timeline.change_points()));
    }
    let horizon = timeline.horizon();
    for _ in 0..4 {
        let start = rng.random_range(0..horizon);
        let end = rng.random_range(start + 1..=horizon);
        let (got, want) = (calendar.free_pes(start, end).ids(), timeline.free_pes(start, end));
        if got != want {
            report.fail(format!("{context}: free_pes({start},{end}) {got:?} != {want:?}"));
        }
        let duration = end - start;
        let rect = calendar.max_rectangle(start, duration);
        let dense = timeline.max_rectangle(start, duration);
        let got = (rect.t_begin, end_as_option(rect.t_end), rect.free.ids());
        let want = (dense.t_begin, dense.t_end, dense.free.clone());
        if got != want {
            report.fail(format!("{context}: max_rectangle({start},{duration}) {got:?} != {want:?}"));
        }
    }
}

/// Random add/delete sequences applied to both models, comparing state,
/// `free_pes` and `max_rectangle` after every step.
pub fn check_state_sequences(config: &DifferentialConfig) -> DifferentialReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = DifferentialReport::default();
    for case in 0..config.cases {
        report.cases += 1;
        let n_pes = rng.random_range(1..=config.max_pes);
        let mut timeline = DenseTimeline::new(n_pes, config.horizon).expect("bounded config");
        let mut calendar = AvailabilityCalendar::new(n_pes);
        let mut live: Vec<Live> = Vec::new();

        for step in 0..config.steps {
            let context = format!("case {case} step {step}");
            let delete = !live.is_empty() && rng.random_bool(0.4);
            if delete {
                let a = live.swap_remove(rng.random_range(0..live.len()));
                timeline.delete(a.start, a.end, &a.pes).expect("live allocation");
                if let Err(e) = calendar.delete_allocation(a.start, a.end, &pe_set(n_pes, &a.pes)) {
                    report.fail(format!("{context}: delete failed: {e}"));
                }
            } else if let Some(a) = random_reservation(&mut rng, &timeline, 64) {
                timeline.add(a.start, a.end, &a.pes).expect("free cells");
                if let Err(e) = calendar.add_allocation(a.start, a.end, &pe_set(n_pes, &a.pes)) {
                    report.fail(format!("{context}: add failed: {e}"));
                }
                live.push(a);
            }

            // An overlapping add must be refused without side effects.
            if let Some(a) = live.first() {
                let before = calendar.clone();
                let clash = pe_set(n_pes, &a.pes[..1]);
                if calendar.add_allocation(a.start, a.end, &clash).is_ok() || calendar != before {
                    report.fail(format!("{context}: overlapping add accepted or mutated state"));
                    calendar = before;
                }
            }
            compare_state(&mut rng, &calendar, &timeline, &mut report, &context);
        }
    }
    report
}

/// Random admission queries on random occupancy, comparing
/// [`AvailabilityCalendar::find_allocation`] with the candidate-restricted oracle.
pub fn check_admission(config: &DifferentialConfig, policy: Policy) -> DifferentialReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (policy.rank() as u64 + 1).wrapping_mul(0x9e37_79b9));
    let mut report = DifferentialReport::default();
    let horizon = config.horizon;
    for case in 0..config.cases {
        report.cases += 1;
        report.checks += 1;
        let n_pes = rng.random_range(1..=config.max_pes);
        let mut timeline = DenseTimeline::new(n_pes, horizon).expect("bounded config");
        let mut calendar = AvailabilityCalendar::new(n_pes);
        let reservations = rng.random_range(0..=config.steps);
        for _ in 0..reservations {
            if let Some(a) = random_reservation(&mut rng, &timeline, 48) {
                timeline.add(a.start, a.end, &a.pes).expect("free cells");
                calendar
                    .add_allocation(a.start, a.end, &pe_set(n_pes, &a.pes))
                    .expect("valid reservation");
            }
        }

        let duration = rng.random_range(1..=48);
        let ready = rng.random_range(0..=horizon - duration);
        let deadline = rng.random_range(ready + duration..=(ready + duration + 96).min(horizon));
        let n_pe = rng.random_range(1..=n_pes);

        let before = calendar.clone();
        let got = match calendar.find_allocation(ready, duration, deadline, n_pe, policy) {
            Ok(p) => p.map(|p| (p.start, p.pes.ids())),
            Err(e) => {
                report.fail(format!("case {case}: find_allocation error {e}"));
                continue;
            }
        };
        if calendar != before {
            report.fail(format!("case {case}: find_allocation mutated the calendar"));
        }
        let want = timeline.find(ready, duration, deadline, n_pe, policy, StartScan::ChangePoints);
        if got != want {
            report.fail(format!(
                "case {case} ({policy}, ready {ready}, duration {duration}, deadline {deadline}, n_pe {n_pe}): \
                 calendar {got:?} != oracle {want:?}\n{calendar}"
            ));
        }
        if let Some((start, pes)) = &got {
            let end = start + duration;
            if *start < ready || end > deadline || pes.len() != n_pe {
                report.fail(format!("case {case}: placement outside window or wrong size"));
            }
            if pes.iter().any(|&pe| (*start..end).any(|t| timeline.is_busy(pe, t))) {
                report.fail(format!("case {case}: placement uses busy PEs"));
            }
        }
        let exhaustive = timeline.find(ready, duration, deadline, n_pe, policy, StartScan::Exhaustive);
        if got.is_none() && exhaustive.is_some() {
            report.candidate_gaps += 1;
        }
        if got.as_ref().map(|g| g.0) != exhaustive.as_ref().map(|e| e.0) {
            report.exhaustive_disagreements += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_sets_exact_cells_and_delete_restores() {
        let mut t = DenseTimeline::new(2, 4).unwrap();
        let blank = t.clone();
        t.add(0, 3, &[1]).unwrap();
        assert!((0..3).all(|tick| t.is_busy(1, tick)));
        assert!(!t.is_busy(1, 3));
        assert!((0..4).all(|tick| !t.is_busy(0, tick)));
        t.delete(0, 3, &[1]).unwrap();
        assert_eq!(t, blank);
    }

    #[test]
    fn precondition_violations_report_cells() {
        let mut t = DenseTimeline::new(2, 4).unwrap();
        t.add(1, 3, &[0]).unwrap();
        assert_eq!(t.add(2, 4, &[0]), Err(OracleError::Cell { pe: 0, tick: 2, busy: true }));
        assert_eq!(t.delete(0, 2, &[0]), Err(OracleError::Cell { pe: 0, tick: 0, busy: false }));
        assert!(matches!(t.add(3, 5, &[1]), Err(OracleError::OutOfRange { .. })));
        assert!(DenseTimeline::new(65, 10).is_err());
        assert!(DenseTimeline::new(4, 5000).is_err());
    }

    fn sample_calendar() -> DenseTimeline {
        let mut t = DenseTimeline::new(8, 16).unwrap();
        t.add(0, 3, &[0, 1]).unwrap();
        t.add(0, 1, &[2, 3]).unwrap();
        t.add(8, 10, &[4]).unwrap();
        t
    }

    #[test]
    fn change_points_of_worked_example() {
        assert_eq!(sample_calendar().change_points(), vec![0, 1, 3, 8, 10]);
        assert_eq!(sample_calendar().candidate_starts(2, 2, 9), vec![2, 3, 6, 7]);
    }

    #[test]
    fn empty_timeline_admits_at_ready_time() {
        let t = DenseTimeline::new(8, 64).unwrap();
        for policy in Policy::ALL {
            assert_eq!(
                t.find(5, 10, 30, 3, policy, StartScan::Exhaustive),
                Some((5, vec![0, 1, 2]))
            );
        }
    }

    #[test]
    fn worked_example_pe_worst_fit() {
        let t = sample_calendar();
        let r = t.max_rectangle(3, 2);
        assert_eq!((r.t_begin, r.t_end, r.free.len()), (3, Some(8), 8));
        for scan in [StartScan::Exhaustive, StartScan::ChangePoints] {
            assert_eq!(t.find(2, 2, 9, 2, Policy::PeWorstFit, scan), Some((3, vec![0, 1])));
        }
    }

    #[test]
    fn small_differential_runs_clean() {
        let config = DifferentialConfig {
            cases: 30,
            ..Default::default()
        };
        let report = check_state_sequences(&config);
        assert!(report.passed(), "{:#?}", report.mismatches);
        for policy in Policy::ALL {
            let report = check_admission(&config, policy);
            assert!(report.passed(), "{:#?}", report.mismatches);
        }
    }
}
