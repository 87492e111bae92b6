//! Spatiotemporal events: PRESENCE and PATTERN as region-mask sequences over
//! a consecutive time window, plus the general Boolean-expression form that
//! only the naive oracle evaluates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::CellIndex;
use crate::markov::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("event window [{start}, {end}] is invalid (need 1 <= start <= end)")]
    BadWindow { start: usize, end: usize },
    #[error("expected {expected} region masks, got {got}")]
    WrongRegionCount { expected: usize, got: usize },
    #[error("region mask length {got} does not match state count {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("timestamp {t} outside trajectory of length {len}")]
    TimestampOutOfRange { t: usize, len: usize },
}

/// Subset of the m states, one bit per cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct RegionMask {
    bits: Vec<bool>,
}

impl RegionMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn empty(m: usize) -> Self {
        Self { bits: vec![false; m] }
    }

    pub fn full(m: usize) -> Self {
        Self { bits: vec![true; m] }
    }

    pub fn from_cells(m: usize, cells: &[usize]) -> Self {
        let mut bits = vec![false; m];
        for &c in cells {
            bits[c] = true;
        }
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        self.bits[cell.index()]
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| CellIndex(i))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// 0/1 indicator vector, used as the diagonal lift s^D.
    pub fn indicator(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl From<RegionMask> for Vec<u8> {
    fn from(mask: RegionMask) -> Self {
        mask.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

impl TryFrom<Vec<u8>> for RegionMask {
    type Error = String;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        if v.iter().any(|b| *b > 1) {
            return Err("region mask entries must be 0 or 1".into());
        }
        Ok(Self { bits: v.into_iter().map(|b| b == 1).collect() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Presence,
    Pattern,
}

/// A PRESENCE or PATTERN event over the consecutive window `[start, end]`.
///
/// PRESENCE carries a single mask broadcast over the window; PATTERN carries
/// one mask per window timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventWire", into = "EventWire")]
pub struct Event {
    kind: EventKind,
    regions: Vec<RegionMask>,
    start: usize,
    end: usize,
}

/// Wire form matching the event JSON interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EventWire {
    kind: EventKind,
    regions: Vec<RegionMask>,
    start: usize,
    end: usize,
}

impl From<Event> for EventWire {
    fn from(e: Event) -> Self {
        Self { kind: e.kind, regions: e.regions, start: e.start, end: e.end }
    }
}

impl TryFrom<EventWire> for Event {
    type Error = EventError;

    fn try_from(w: EventWire) -> Result<Self, Self::Error> {
        match w.kind {
            EventKind::Presence => {
                let mask = w.regions.into_iter().next().ok_or(EventError::WrongRegionCount {
                    expected: 1,
                    got: 0,
                })?;
                Event::presence(mask, w.start, w.end)
            }
            EventKind::Pattern => Event::pattern(w.regions, w.start, w.end),
        }
    }
}

impl Event {
    pub fn presence(region: RegionMask, start: usize, end: usize) -> Result<Self, EventError> {
        if start < 1 || end < start {
            return Err(EventError::BadWindow { start, end });
        }
        Ok(Self { kind: EventKind::Presence, regions: vec![region], start, end })
    }

    pub fn pattern(regions: Vec<RegionMask>, start: usize, end: usize) -> Result<Self, EventError> {
        if start < 1 || end < start {
            return Err(EventError::BadWindow { start, end });
        }
        let expected = end - start + 1;
        if regions.len() != expected {
            return Err(EventError::WrongRegionCount { expected, got: regions.len() });
        }
        if let Some(first) = regions.first() {
            if regions.iter().any(|r| r.len() != first.len()) {
                return Err(EventError::MaskLength { expected: first.len(), got: 0 });
            }
        }
        Ok(Self { kind: EventKind::Pattern, regions, start, end })
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn window_len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn regions(&self) -> &[RegionMask] {
        &self.regions
    }

    /// State count the masks are defined over.
    pub fn m(&self) -> usize {
        self.regions[0].len()
    }

    /// Region mask in force at window timestamp `t` (start ≤ t ≤ end).
    pub fn mask_at(&self, t: usize) -> &RegionMask {
        debug_assert!((self.start..=self.end).contains(&t));
        match self.kind {
            EventKind::Presence => &self.regions[0],
            EventKind::Pattern => &self.regions[t - self.start],
        }
    }

    /// Direct set-membership semantics on a trajectory.
    pub fn holds_on(&self, trajectory: &Trajectory) -> Result<bool, EventError> {
        if trajectory.len() < self.end {
            return Err(EventError::TimestampOutOfRange { t: self.end, len: trajectory.len() });
        }
        Ok(match self.kind {
            EventKind::Presence => (self.start..=self.end)
                .any(|t| self.regions[0].contains(trajectory.at(t))),
            EventKind::Pattern => (self.start..=self.end)
                .all(|t| self.mask_at(t).contains(trajectory.at(t))),
        })
    }

    /// Lower to the Boolean-expression form: PRESENCE becomes an OR over all
    /// (t, cell) pairs in the window; PATTERN an AND over timestamps of ORs.
    pub fn lower(&self) -> BoolEvent {
        match self.kind {
            EventKind::Presence => BoolEvent::Or(
                (self.start..=self.end)
                    .flat_map(|t| {
                        self.regions[0].cells().map(move |c| BoolEvent::Pred { t, cell: c })
                    })
                    .collect(),
            ),
            EventKind::Pattern => BoolEvent::And(
                (self.start..=self.end)
                    .map(|t| {
                        BoolEvent::Or(
                            self.mask_at(t)
                                .cells()
                                .map(|c| BoolEvent::Pred { t, cell: c })
                                .collect(),
                        )
                    })
                    .collect(),
            ),
        }
    }
}

/// General Boolean expression over (location, time) predicates u^t = s_i.
///
/// Only the naive oracle evaluates these; the linear-time two-world machinery
/// covers PRESENCE/PATTERN exclusively.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolEvent {
    Pred { t: usize, cell: CellIndex },
    And(Vec<BoolEvent>),
    Or(Vec<BoolEvent>),
    Not(Box<BoolEvent>),
}

impl BoolEvent {
    /// Largest timestamp referenced by any predicate (0 for empty And/Or).
    pub fn max_timestamp(&self) -> usize {
        match self {
            BoolEvent::Pred { t, .. } => *t,
            BoolEvent::And(xs) | BoolEvent::Or(xs) => {
                xs.iter().map(BoolEvent::max_timestamp).max().unwrap_or(0)
            }
            BoolEvent::Not(x) => x.max_timestamp(),
        }
    }

    pub fn evaluate(&self, trajectory: &Trajectory) -> Result<bool, EventError> {
        let needed = self.max_timestamp();
        if needed > trajectory.len() {
            return Err(EventError::TimestampOutOfRange { t: needed, len: trajectory.len() });
        }
        Ok(self.eval_unchecked(trajectory))
    }

    fn eval_unchecked(&self, trajectory: &Trajectory) -> bool {
        match self {
            BoolEvent::Pred { t, cell } => trajectory.at(*t) == *cell,
            BoolEvent::And(xs) => xs.iter().all(|x| x.eval_unchecked(trajectory)),
            BoolEvent::Or(xs) => xs.iter().any(|x| x.eval_unchecked(trajectory)),
            BoolEvent::Not(x) => !x.eval_unchecked(trajectory),
        }
    }
}
