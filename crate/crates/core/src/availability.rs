//! Slot-record availability calendar.
//!
//! The cluster state is a time-ordered list of `{time, busy}` records. Each
//! record states which PEs are reserved from its time up to the next record's
//! time; the last record always has an empty busy set. A parallel sorted time
//! set mirrors the record times and serves range queries when generating
//! candidate start times.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::pes::PeSet;
use crate::policies::{self, Policy, PolicyError};
use crate::Time;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalendarError {
    #[error("empty interval [{start}, {end})")]
    EmptyInterval { start: Time, end: Time },
    #[error("allocation has no PEs")]
    NoPes,
    #[error("PE set drawn from a cluster of {found} PEs, calendar has {expected}")]
    ClusterMismatch { expected: usize, found: usize },
    #[error("PEs {pes} are already reserved at time {time}")]
    Overlap { time: Time, pes: PeSet },
    #[error("PEs {pes} are not reserved at time {time}")]
    NotPresent { time: Time, pes: PeSet },
    #[error("empty scheduling window: ready {ready} + duration {duration} > deadline {deadline}")]
    EmptyWindow { ready: Time, duration: Time, deadline: Time },
    #[error("job duration must be positive")]
    ZeroDuration,
    #[error("request for {requested} PEs on a cluster of {n_pes}")]
    InvalidPeCount { requested: usize, n_pes: usize },
    #[error("calendar invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One `{time, busy}` pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotRecord {
    pub time: Time,
    pub busy: PeSet,
}

/// Right edge of an availability rectangle.
///
/// `Open` means no later reservation touches the rectangle's PEs; it orders
/// after every finite time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndTime {
    At(Time),
    Open,
}

/// A candidate start time together with the maximal free region around it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvailabilityRectangle {
    pub start: Time,
    /// Earliest time from which every PE in `free` stays free up to `start`.
    pub t_begin: Time,
    /// First time after the job window at which a PE of `free` becomes busy.
    pub t_end: EndTime,
    /// PEs free throughout `[start, start + duration)`.
    pub free: PeSet,
}

/// Result of a successful search: where and on which PEs the job runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub start: Time,
    pub pes: PeSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvailabilityCalendar {
    n_pes: usize,
    records: Vec<SlotRecord>,
    times: BTreeSet<Time>,
}

impl AvailabilityCalendar {
    pub fn new(n_pes: usize) -> Self {
        Self {
            n_pes,
            records: Vec::new(),
            times: BTreeSet::new(),
        }
    }

    /// Builds a calendar from explicit records, rejecting any list that breaks
    /// the calendar invariants.
    pub fn from_records(n_pes: usize, records: Vec<SlotRecord>) -> Result<Self, CalendarError> {
        let times = records.iter().map(|r| r.time).collect();
        let calendar = Self {
            n_pes,
            records,
            times,
        };
        calendar.check_invariants()?;
        Ok(calendar)
    }

    pub fn n_pes(&self) -> usize {
        self.n_pes
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    /// Sorted set of record times.
    pub fn times(&self) -> &BTreeSet<Time> {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// PEs reserved at instant `t`.
    pub fn busy_at(&self, t: Time) -> PeSet {
        match self.index_at(t) {
            Some(i) => self.records[i].busy.clone(),
            None => PeSet::empty(self.n_pes),
        }
    }

    /// Reserves `pes` over `[start, end)`.
    ///
    /// The caller is expected to have found the slot with [`find_allocation`];
    /// any overlap with an existing reservation is reported and leaves the
    /// calendar untouched.
    ///
    /// [`find_allocation`]: AvailabilityCalendar::find_allocation
    pub fn add_allocation(&mut self, start: Time, end: Time, pes: &PeSet) -> Result<(), CalendarError> {
        self.check_interval(start, end, pes)?;
        for i in self.covering(start, end) {
            let record = &self.records[i];
            if record.busy.intersects(pes) {
                let mut clash = record.busy.clone();
                clash.intersect_with(pes);
                return Err(CalendarError::Overlap {
                    time: record.time.max(start),
                    pes: clash,
                });
            }
        }
        self.update(start, end, |busy| busy.union_with(pes));
        Ok(())
    }

    /// Releases `pes` over `[start, end)`; the exact inverse of
    /// [`add_allocation`](AvailabilityCalendar::add_allocation) on the same arguments.
    pub fn delete_allocation(&mut self, start: Time, end: Time, pes: &PeSet) -> Result<(), CalendarError> {
        self.check_interval(start, end, pes)?;
        if self.index_at(start).is_none() {
            return Err(CalendarError::NotPresent {
                time: start,
                pes: pes.clone(),
            });
        }
        for i in self.covering(start, end) {
            let record = &self.records[i];
            if !pes.is_subset(&record.busy) {
                let mut missing = pes.clone();
                missing.difference_with(&record.busy);
                return Err(CalendarError::NotPresent {
                    time: record.time.max(start),
                    pes: missing,
                });
            }
        }
        self.update(start, end, |busy| busy.difference_with(pes));
        Ok(())
    }

    /// Candidate start times for a job in `[ready, deadline - duration]`:
    /// both window ends, every record time inside the window, and every record
    /// time in `[ready + duration, deadline]` shifted back by the duration.
    pub fn candidate_start_times(&self, ready: Time, duration: Time, deadline: Time) -> Result<Vec<Time>, CalendarError> {
        let latest = window_latest_start(ready, duration, deadline)?;
        let mut starts = BTreeSet::from([ready, latest]);
        starts.extend(self.times.range(ready..=latest).copied());
        starts.extend(
            self.times
                .range(ready + duration..=deadline)
                .map(|&t| t - duration),
        );
        Ok(starts.into_iter().collect())
    }

    /// PEs free during the whole of `[start, end)`.
    pub fn free_pes(&self, start: Time, end: Time) -> PeSet {
        let mut busy = PeSet::empty(self.n_pes);
        for i in self.covering(start, end) {
            busy.union_with(&self.records[i].busy);
        }
        busy.complement()
    }

    /// The maximal availability rectangle for a job of `duration` starting at `start`.
    pub fn max_rectangle(&self, start: Time, duration: Time) -> AvailabilityRectangle {
        let free = self.free_pes(start, start + duration);

        // Records at or before `start` in reverse; the first one touching `free`
        // ends where its successor begins.
        let at_or_before = self.records.partition_point(|r| r.time <= start);
        let t_begin = self.records[..at_or_before]
            .iter()
            .rposition(|r| r.busy.intersects(&free))
            .map_or(0, |i| self.records[i + 1].time.min(start));

        // Records inside the job window never touch `free`.
        let t_end = self.records[at_or_before..]
            .iter()
            .find(|r| r.busy.intersects(&free))
            .map_or(EndTime::Open, |r| EndTime::At(r.time));

        AvailabilityRectangle {
            start,
            t_begin,
            t_end,
            free,
        }
    }

    /// Searches for a placement of `n_pe` PEs for `duration` inside
    /// `[ready, deadline]`, choosing among feasible candidate starts with `policy`.
    ///
    /// Returns `Ok(None)` when no candidate start has enough free PEs. The
    /// calendar is not modified.
    pub fn find_allocation(
        &self,
        ready: Time,
        duration: Time,
        deadline: Time,
        n_pe: usize,
        policy: Policy,
    ) -> Result<Option<Placement>, CalendarError> {
        window_latest_start(ready, duration, deadline)?;
        if n_pe == 0 || n_pe > self.n_pes {
            return Err(CalendarError::InvalidPeCount {
                requested: n_pe,
                n_pes: self.n_pes,
            });
        }
        if self.is_empty() {
            return Ok(PeSet::full(self.n_pes)
                .lowest(n_pe)
                .map(|pes| Placement { start: ready, pes }));
        }

        let rectangles: Vec<AvailabilityRectangle> = self
            .candidate_start_times(ready, duration, deadline)?
            .into_iter()
            .map(|start| self.max_rectangle(start, duration))
            .filter(|rect| rect.free.len() >= n_pe)
            .collect();
        if rectangles.is_empty() {
            return Ok(None);
        }
        let winner = policies::select(&rectangles, policy)?;
        let pes = winner
            .free
            .lowest(n_pe)
            .expect("feasible rectangles hold at least n_pe free PEs");
        Ok(Some(Placement {
            start: winner.start,
            pes,
        }))
    }

    /// Verifies every structural invariant of the calendar.
    pub fn check_invariants(&self) -> Result<(), CalendarError> {
        let fail = |msg: String| Err(CalendarError::Invariant(msg));
        if self.times.len() != self.records.len()
            || !self.records.iter().zip(&self.times).all(|(r, t)| r.time == *t)
        {
            return fail("record times and time set disagree".into());
        }
        for pair in self.records.windows(2) {
            if pair[0].time >= pair[1].time {
                return fail(format!("records not strictly ascending at {}", pair[1].time));
            }
            if pair[0].busy == pair[1].busy {
                return fail(format!("redundant record at {}", pair[1].time));
            }
        }
        for record in &self.records {
            if record.busy.capacity() != self.n_pes {
                return fail(format!("record at {} has a foreign PE set", record.time));
            }
        }
        if let Some(head) = self.records.first() {
            if head.busy.is_empty() {
                return fail(format!("head record at {} is empty", head.time));
            }
        }
        if let Some(last) = self.records.last() {
            if !last.busy.is_empty() {
                return fail(format!("last record at {} is not empty", last.time));
            }
        }
        Ok(())
    }

    fn check_interval(&self, start: Time, end: Time, pes: &PeSet) -> Result<(), CalendarError> {
        if start >= end {
            return Err(CalendarError::EmptyInterval { start, end });
        }
        if pes.capacity() != self.n_pes {
            return Err(CalendarError::ClusterMismatch {
                expected: self.n_pes,
                found: pes.capacity(),
            });
        }
        if pes.is_empty() {
            return Err(CalendarError::NoPes);
        }
        Ok(())
    }

    /// Index of the last record with `time <= t`.
    fn index_at(&self, t: Time) -> Option<usize> {
        self.records.partition_point(|r| r.time <= t).checked_sub(1)
    }

    /// Indices of records whose span overlaps `[start, end)`.
    fn covering(&self, start: Time, end: Time) -> Range<usize> {
        let first = self.index_at(start).unwrap_or(0);
        let last = self.records.partition_point(|r| r.time < end);
        first..last.max(first)
    }

    /// Ensures a record exists at `t`, copying the busy set in force there.
    fn split_at(&mut self, t: Time) {
        if self.times.contains(&t) {
            return;
        }
        let busy = self.busy_at(t);
        let pos = self.records.partition_point(|r| r.time < t);
        self.records.insert(pos, SlotRecord { time: t, busy });
        self.times.insert(t);
    }

    fn update(&mut self, start: Time, end: Time, mut apply: impl FnMut(&mut PeSet)) {
        self.split_at(start);
        self.split_at(end);
        let from = self.records.partition_point(|r| r.time < start);
        let to = self.records.partition_point(|r| r.time < end);
        for record in &mut self.records[from..to] {
            apply(&mut record.busy);
        }
        self.clean();
    }

    /// Drops records equal to their predecessor and empty leading records.
    fn clean(&mut self) {
        let times = &mut self.times;
        let mut kept: Vec<SlotRecord> = Vec::with_capacity(self.records.len());
        for record in self.records.drain(..) {
            let redundant = match kept.last() {
                Some(prev) => prev.busy == record.busy,
                None => record.busy.is_empty(),
            };
            if redundant {
                times.remove(&record.time);
            } else {
                kept.push(record);
            }
        }
        self.records = kept;
    }
}

/// Debug dump: one `time<TAB>ids` line per record, ascending, `-` for an empty set.
impl fmt::Display for AvailabilityCalendar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for record in &self.records {
            writeln!(f, "{}\t{}", record.time, record.busy)?;
        }
        Ok(())
    }
}

fn window_latest_start(ready: Time, duration: Time, deadline: Time) -> Result<Time, CalendarError> {
    if duration == 0 {
        return Err(CalendarError::ZeroDuration);
    }
    match ready.checked_add(duration) {
        Some(end) if end <= deadline => Ok(deadline - duration),
        _ => Err(CalendarError::EmptyWindow {
            ready,
            duration,
            deadline,
        }),
    }
}
