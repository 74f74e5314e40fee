//! Event-sourced annotation state.
//!
//! Every change is an [`Event`]; [`AnnotationState::apply`] is the only
//! mutator, so replaying a log of events rebuilds the exact state.

use std::collections::{BTreeMap, HashMap};

use biaseval_core::bws::{self, BwsError, ComparisonPair, Judgment, Tuple};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primary annotators per tuple.
pub const PRIMARIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// A tuple was handed to an annotator, reserving one primary slot.
    Served { tuple_id: u32, annotator_id: String },
    Judged(Judgment),
    Arbitrated(Judgment),
}

/// Why a request was refused; `code()` is the stable wire identifier.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("tuple {0} does not exist")]
    UnknownTuple(u32),
    #[error("best and worst must be different texts")]
    DistinctRequired,
    #[error("`{0}` is not part of the tuple")]
    NotInTuple(String),
    #[error("this annotator already judged tuple {0}")]
    Duplicate(u32),
    #[error("tuple {0} already has two primary annotators")]
    TupleComplete(u32),
    #[error("tuple {tuple_id} belongs to round {round}, session is assigned round {assigned}")]
    WrongRound { tuple_id: u32, round: u32, assigned: u32 },
    #[error("tuple {0} has no open conflict")]
    NoConflict(u32),
    #[error("the conflict on tuple {0} is already resolved")]
    AlreadyResolved(u32),
    #[error("annotators cannot arbitrate their own conflict (tuple {0})")]
    OwnConflict(u32),
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::UnknownTuple(_) => "unknown-tuple",
            Rejection::DistinctRequired => "distinct-required",
            Rejection::NotInTuple(_) => "not-in-tuple",
            Rejection::Duplicate(_) => "duplicate",
            Rejection::TupleComplete(_) => "tuple-complete",
            Rejection::WrongRound { .. } => "wrong-round",
            Rejection::NoConflict(_) => "no-conflict",
            Rejection::AlreadyResolved(_) => "already-resolved",
            Rejection::OwnConflict(_) => "own-conflict",
        }
    }
}

impl From<BwsError> for Rejection {
    fn from(e: BwsError) -> Self {
        match e {
            BwsError::NotInTuple(id) => Rejection::NotInTuple(id),
            BwsError::WrongTuple { judgment, .. } => Rejection::UnknownTuple(judgment),
            _ => Rejection::DistinctRequired,
        }
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("schedule lists tuple {0} twice")]
    DuplicateTuple(u32),
    #[error("tuple {0} has fewer than two texts")]
    TupleTooSmall(u32),
    #[error("snapshot holds {found} tuple records for {expected} tuples")]
    RecordCount { expected: usize, found: usize },
}

/// Everything known about one tuple.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TupleRecord {
    /// Primary annotators the tuple was handed to, in order.
    pub served: Vec<String>,
    pub primaries: Vec<Judgment>,
    pub arbitration: Option<Judgment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TupleStatus {
    Pending,
    Agreed,
    Conflict,
    Arbitrated,
}

impl TupleRecord {
    pub fn status(&self) -> TupleStatus {
        match (self.primaries.as_slice(), &self.arbitration) {
            ([a, b], None) if !a.agrees_with(b) => TupleStatus::Conflict,
            ([_, _], None) => TupleStatus::Agreed,
            ([_, _], Some(_)) => TupleStatus::Arbitrated,
            _ => TupleStatus::Pending,
        }
    }

    /// The judgment that counts for export, if the tuple is resolved.
    pub fn final_judgment(&self) -> Option<&Judgment> {
        match self.status() {
            TupleStatus::Agreed => self.primaries.first(),
            TupleStatus::Arbitrated => self.arbitration.as_ref(),
            _ => None,
        }
    }

    fn judged_by(&self, annotator: &str) -> bool {
        self.primaries.iter().any(|j| j.annotator_id == annotator)
    }

    fn served_to(&self, annotator: &str) -> bool {
        self.served.iter().any(|a| a == annotator)
    }
}

/// Result of applying an event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Applied {
    pub arbitration_opened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairExport {
    pub pairs: Vec<ComparisonPair>,
    pub resolved: usize,
    /// Conflicts still waiting for an arbiter.
    pub unresolved: usize,
    /// Tuples with fewer than two primary judgments.
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartnerAgreement {
    pub partner: String,
    pub shared: usize,
    /// Cohen's kappa over (best position, worst position) labels.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationState {
    tuples: Vec<Tuple>,
    records: Vec<TupleRecord>,
    index: HashMap<u32, usize>,
}

impl AnnotationState {
    pub fn new(tuples: Vec<Tuple>) -> Result<Self, StateError> {
        let records = vec![TupleRecord::default(); tuples.len()];
        Self::restore(tuples, records)
    }

    /// Rebuilds a state from a snapshot's parts.
    pub fn restore(tuples: Vec<Tuple>, records: Vec<TupleRecord>) -> Result<Self, StateError> {
        if records.len() != tuples.len() {
            return Err(StateError::RecordCount {
                expected: tuples.len(),
                found: records.len(),
            });
        }
        let mut index = HashMap::with_capacity(tuples.len());
        for (i, t) in tuples.iter().enumerate() {
            if t.text_ids.len() < 2 {
                return Err(StateError::TupleTooSmall(t.tuple_id));
            }
            if index.insert(t.tuple_id, i).is_some() {
                return Err(StateError::DuplicateTuple(t.tuple_id));
            }
        }
        Ok(Self { tuples, records, index })
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn records(&self) -> &[TupleRecord] {
        &self.records
    }

    pub fn tuple(&self, tuple_id: u32) -> Option<&Tuple> {
        self.index.get(&tuple_id).map(|&i| &self.tuples[i])
    }

    pub fn record(&self, tuple_id: u32) -> Option<&TupleRecord> {
        self.index.get(&tuple_id).map(|&i| &self.records[i])
    }

    fn slot(&self, tuple_id: u32) -> Result<usize, Rejection> {
        self.index.get(&tuple_id).copied().ok_or(Rejection::UnknownTuple(tuple_id))
    }

    /// Lowest-index tuple the annotator should work on: one already handed
    /// to them but not yet judged, or one with a free primary slot.
    pub fn next_for(&self, annotator: &str, round: Option<u32>) -> Option<u32> {
        self.tuples
            .iter()
            .zip(&self.records)
            .filter(|(t, _)| round.is_none_or(|r| t.round == r))
            .find(|(_, rec)| {
                if rec.served_to(annotator) {
                    !rec.judged_by(annotator)
                } else {
                    rec.served.len() < PRIMARIES
                }
            })
            .map(|(t, _)| t.tuple_id)
    }

    /// True when `next_for` would return a tuple not yet served to them.
    pub fn needs_serving(&self, annotator: &str, tuple_id: u32) -> bool {
        self.record(tuple_id).is_some_and(|r| !r.served_to(annotator))
    }

    /// Lowest-index open conflict the annotator did not take part in.
    pub fn arbitration_for(&self, annotator: &str) -> Option<u32> {
        self.tuples
            .iter()
            .zip(&self.records)
            .find(|(_, rec)| rec.status() == TupleStatus::Conflict && !rec.judged_by(annotator))
            .map(|(t, _)| t.tuple_id)
    }

    /// Validates an event against the current state without applying it.
    pub fn check(&self, event: &Event) -> Result<(), Rejection> {
        match event {
            Event::Served { tuple_id, annotator_id } => {
                let rec = &self.records[self.slot(*tuple_id)?];
                if rec.served_to(annotator_id) {
                    return Err(Rejection::Duplicate(*tuple_id));
                }
                if rec.served.len() >= PRIMARIES {
                    return Err(Rejection::TupleComplete(*tuple_id));
                }
                Ok(())
            }
            Event::Judged(j) => {
                let i = self.slot(j.tuple_id)?;
                j.validate(&self.tuples[i])?;
                let rec = &self.records[i];
                if rec.judged_by(&j.annotator_id) {
                    return Err(Rejection::Duplicate(j.tuple_id));
                }
                if !rec.served_to(&j.annotator_id) && rec.served.len() >= PRIMARIES {
                    return Err(Rejection::TupleComplete(j.tuple_id));
                }
                Ok(())
            }
            Event::Arbitrated(j) => {
                let i = self.slot(j.tuple_id)?;
                j.validate(&self.tuples[i])?;
                let rec = &self.records[i];
                match rec.status() {
                    TupleStatus::Conflict => {}
                    TupleStatus::Arbitrated => return Err(Rejection::AlreadyResolved(j.tuple_id)),
                    _ => return Err(Rejection::NoConflict(j.tuple_id)),
                }
                if rec.judged_by(&j.annotator_id) {
                    return Err(Rejection::OwnConflict(j.tuple_id));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<Applied, Rejection> {
        self.check(event)?;
        let mut applied = Applied::default();
        match event {
            Event::Served { tuple_id, annotator_id } => {
                let i = self.index[tuple_id];
                self.records[i].served.push(annotator_id.clone());
            }
            Event::Judged(j) => {
                let rec = &mut self.records[self.index[&j.tuple_id]];
                if !rec.served_to(&j.annotator_id) {
                    rec.served.push(j.annotator_id.clone());
                }
                rec.primaries.push(j.clone());
                applied.arbitration_opened = rec.status() == TupleStatus::Conflict;
            }
            Event::Arbitrated(j) => {
                self.records[self.index[&j.tuple_id]].arbitration = Some(j.clone());
            }
        }
        Ok(applied)
    }

    /// Five pairs per resolved tuple; conflicts without an arbiter and
    /// tuples still missing a primary judgment are only counted.
    pub fn export(&self) -> PairExport {
        let mut out = PairExport {
            pairs: Vec::new(),
            resolved: 0,
            unresolved: 0,
            pending: 0,
        };
        for (t, rec) in self.tuples.iter().zip(&self.records) {
            match rec.final_judgment() {
                Some(j) => {
                    out.resolved += 1;
                    out.pairs.extend(bws::expand(j, t).expect("judgments are validated on apply"));
                }
                None if rec.status() == TupleStatus::Conflict => out.unresolved += 1,
                None => out.pending += 1,
            }
        }
        out
    }

    /// Tuples in scope for an annotator (their round, or all).
    pub fn total_for(&self, round: Option<u32>) -> usize {
        self.tuples.iter().filter(|t| round.is_none_or(|r| t.round == r)).count()
    }

    pub fn completed_by(&self, annotator: &str) -> usize {
        self.records.iter().filter(|r| r.judged_by(annotator)).count()
    }

    pub fn served_to(&self, annotator: &str) -> Vec<u32> {
        self.tuples
            .iter()
            .zip(&self.records)
            .filter(|(_, r)| r.served_to(annotator))
            .map(|(t, _)| t.tuple_id)
            .collect()
    }

    pub fn status_counts(&self) -> BTreeMap<TupleStatus, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.status()).or_insert(0) += 1;
        }
        counts
    }

    /// Agreement with the annotator who shares the most tuples (ties go to
    /// the smaller id).
    pub fn partner_agreement(&self, annotator: &str) -> Option<PartnerAgreement> {
        let mut shared: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        let mut theirs: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (t, rec) in self.tuples.iter().zip(&self.records) {
            let Some(me) = rec.primaries.iter().find(|j| j.annotator_id == annotator) else {
                continue;
            };
            for other in rec.primaries.iter().filter(|j| j.annotator_id != annotator) {
                shared.entry(&other.annotator_id).or_default().push(bws::judgment_label(me, t));
                theirs.entry(&other.annotator_id).or_default().push(bws::judgment_label(other, t));
            }
        }
        let (partner, labels) = shared.into_iter().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))?;
        let other = &theirs[partner];
        Some(PartnerAgreement {
            partner: partner.to_string(),
            shared: labels.len(),
            kappa: bws::kappa(&labels, other).ok()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Utc};

    fn tuples(n: u32) -> Vec<Tuple> {
        (1..=n)
            .map(|i| Tuple {
                tuple_id: i,
                text_ids: (0..4).map(|k| format!("t{i}-{k}")).collect(),
                round: 1 + (i - 1) / 3,
            })
            .collect()
    }

    fn judgment(tuple_id: u32, who: &str, best: usize, worst: usize) -> Judgment {
        Judgment {
            tuple_id,
            annotator_id: who.into(),
            best_id: format!("t{tuple_id}-{best}"),
            worst_id: format!("t{tuple_id}-{worst}"),
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    #[test]
    fn serving_respects_slots_and_rounds() {
        let mut s = AnnotationState::new(tuples(6)).unwrap();
        assert_eq!(s.next_for("a", None), Some(1));
        assert_eq!(s.next_for("a", Some(2)), Some(4));
        s.apply(&Event::Served { tuple_id: 1, annotator_id: "a".into() }).unwrap();
        // Resumes the served tuple.
        assert_eq!(s.next_for("a", None), Some(1));
        s.apply(&Event::Served { tuple_id: 1, annotator_id: "b".into() }).unwrap();
        assert_eq!(s.next_for("c", None), Some(2));
        let err = s.apply(&Event::Served { tuple_id: 1, annotator_id: "c".into() }).unwrap_err();
        assert_eq!(err.code(), "tuple-complete");
        assert_eq!(s.apply(&Event::Judged(judgment(1, "c", 0, 1))).unwrap_err().code(), "tuple-complete");
    }

    #[test]
    fn judgment_rejections() {
        let mut s = AnnotationState::new(tuples(2)).unwrap();
        assert_eq!(s.apply(&Event::Judged(judgment(1, "a", 2, 2))).unwrap_err(), Rejection::DistinctRequired);
        let mut j = judgment(1, "a", 0, 1);
        j.worst_id = "t2-0".into();
        assert_eq!(s.apply(&Event::Judged(j)).unwrap_err().code(), "not-in-tuple");
        assert_eq!(s.apply(&Event::Judged(judgment(9, "a", 0, 1))).unwrap_err(), Rejection::UnknownTuple(9));
        s.apply(&Event::Judged(judgment(1, "a", 0, 1))).unwrap();
        assert_eq!(s.apply(&Event::Judged(judgment(1, "a", 0, 2))).unwrap_err(), Rejection::Duplicate(1));
    }

    #[test]
    fn conflict_opens_and_arbitration_resolves() {
        let mut s = AnnotationState::new(tuples(1)).unwrap();
        assert!(!s.apply(&Event::Judged(judgment(1, "a", 0, 3))).unwrap().arbitration_opened);
        assert_eq!(s.apply(&Event::Arbitrated(judgment(1, "c", 0, 3))).unwrap_err().code(), "no-conflict");
        assert!(s.apply(&Event::Judged(judgment(1, "b", 0, 2))).unwrap().arbitration_opened);
        assert_eq!(s.arbitration_for("a"), None);
        assert_eq!(s.arbitration_for("c"), Some(1));
        assert_eq!(s.export().unresolved, 1);
        assert_eq!(s.apply(&Event::Arbitrated(judgment(1, "a", 1, 2))).unwrap_err().code(), "own-conflict");
        // A third distinct answer is authoritative.
        s.apply(&Event::Arbitrated(judgment(1, "c", 1, 2))).unwrap();
        assert_eq!(s.apply(&Event::Arbitrated(judgment(1, "d", 1, 2))).unwrap_err().code(), "already-resolved");
        let ex = s.export();
        assert_eq!((ex.resolved, ex.unresolved, ex.pairs.len()), (1, 0, 5));
        assert!(ex.pairs.iter().take(3).all(|p| p.winner_id == "t1-1"));
    }

    #[test]
    fn agreeing_primaries_need_no_arbiter() {
        let mut s = AnnotationState::new(tuples(1)).unwrap();
        s.apply(&Event::Judged(judgment(1, "a", 0, 3))).unwrap();
        assert!(!s.apply(&Event::Judged(judgment(1, "b", 0, 3))).unwrap().arbitration_opened);
        assert_eq!(s.record(1).unwrap().status(), TupleStatus::Agreed);
        assert_eq!(s.export().pairs.len(), 5);
    }

    #[test]
    fn partner_kappa() {
        let mut s = AnnotationState::new(tuples(4)).unwrap();
        assert_eq!(s.partner_agreement("a"), None);
        for (t, b, w) in [(1, 0, 1), (2, 1, 2), (3, 2, 3), (4, 3, 0)] {
            s.apply(&Event::Judged(judgment(t, "a", b, w))).unwrap();
            s.apply(&Event::Judged(judgment(t, "b", b, w))).unwrap();
        }
        let p = s.partner_agreement("a").unwrap();
        assert_eq!((p.partner.as_str(), p.shared, p.kappa), ("b", 4, 1.0));
    }

    #[test]
    fn restore_rejects_bad_parts() {
        let mut t = tuples(2);
        t[1].tuple_id = 1;
        assert!(matches!(AnnotationState::new(t), Err(StateError::DuplicateTuple(1))));
        assert!(matches!(
            AnnotationState::restore(tuples(2), vec![]),
            Err(StateError::RecordCount { .. })
        ));
    }

    #[test]
    fn events_round_trip_through_json() {
        let e = Event::Judged(judgment(1, "a", 0, 1));
        let line = serde_json::to_string(&e).unwrap();
        assert!(line.starts_with(r#"{"kind":"judged""#));
        assert_eq!(serde_json::from_str::<Event>(&line).unwrap(), e);
    }
}
