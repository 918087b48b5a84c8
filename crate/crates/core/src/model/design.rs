//! Per-match working representation of the likelihood.
//!
//! The match clock is cut at every event time and at the half boundary;
//! inside a segment every regressor except `ln t` is constant, so each
//! segment's integrated intensity has a closed form.

use serde::{Deserialize, Serialize};

use super::{
    eval_regressor, eval_stoppage_regressor, regular_end, EventType, HalfSummary, MatchRecord,
    MatchState, ModelSpec, RegressorKind, HALF_LENGTH,
};
use crate::error::{Error, Result};

/// `(parameter index, regressor value)` pairs with zero values dropped.
pub type SparseVec = Vec<(usize, f64)>;

fn push_sparse(v: &mut SparseVec, index: usize, value: f64) {
    if value == 0.0 {
        return;
    }
    match v.iter_mut().find(|(i, _)| *i == index) {
        Some(slot) => slot.1 += value,
        None => v.push((index, value)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Time-constant regressors on `(start, end]`.
    pub psi: SparseVec,
    /// Parameter index of the `ln t` coefficient, if the process has one.
    pub log_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInstant {
    pub time: f64,
    /// Regressors at the event instant (state strictly before the event),
    /// including the `ln t` term.
    pub psi: SparseVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDesign {
    pub event_type: EventType,
    pub segments: Vec<Segment>,
    pub events: Vec<EventInstant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppageDesign {
    pub half: u8,
    pub phi: SparseVec,
    pub observed: u32,
    /// `ln(U!)`, constant in the parameters.
    pub ln_factorial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedDesign {
    pub match_id: String,
    pub n_params: usize,
    pub layout: u64,
    pub total_length: f64,
    pub processes: Vec<ProcessDesign>,
    pub stoppage: Vec<StoppageDesign>,
    /// Sum of the regressor vectors over all event instants of all
    /// processes; the linear part of the log-likelihood.
    pub event_sum: SparseVec,
}

impl SegmentedDesign {
    pub fn n_events(&self) -> usize {
        self.processes.iter().map(|p| p.events.len()).sum()
    }
}

/// Cut points on the match clock: 0, every event, `45 + U1`, and `T`.
fn breakpoints(record: &MatchRecord) -> Vec<f64> {
    let mut cuts = vec![0.0];
    cuts.extend(record.events.iter().map(|e| e.clock_time));
    cuts.push(record.half_boundary());
    cuts.push(record.total_length());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

pub fn build_design(record: &MatchRecord, spec: &ModelSpec) -> Result<SegmentedDesign> {
    let fixture = &record.fixture;
    for team in [&fixture.home_team, &fixture.away_team] {
        if !spec.knows_team(team) {
            return Err(Error::UnknownTeam(team.clone()));
        }
    }
    if spec.requires_values() && (fixture.home_value.is_none() || fixture.away_value.is_none()) {
        return Err(Error::InvalidMatch {
            match_id: record.match_id.clone(),
            reason: format!("model {} needs lineup values", spec.name),
        });
    }
    let total = record.total_length();
    for w in record.events.windows(2) {
        if w[1].clock_time <= w[0].clock_time {
            return Err(Error::InvalidMatch {
                match_id: record.match_id.clone(),
                reason: "events are not strictly increasing in time".into(),
            });
        }
    }
    if let Some(bad) = record
        .events
        .iter()
        .find(|e| !(e.clock_time > 0.0 && e.clock_time <= total))
    {
        return Err(Error::InvalidMatch {
            match_id: record.match_id.clone(),
            reason: format!("event at {} outside (0, {total}]", bad.clock_time),
        });
    }

    let index = spec.parameter_index();
    let n_params = index.len();
    let cuts = breakpoints(record);

    let mut state = MatchState::kickoff();
    state.u1 = Some(record.stoppage1);
    state.u2 = Some(record.stoppage2);

    let mut processes: Vec<ProcessDesign> = spec
        .processes
        .keys()
        .map(|&event_type| ProcessDesign {
            event_type,
            segments: Vec::with_capacity(cuts.len()),
            events: Vec::new(),
        })
        .collect();

    let mut next_event = 0;
    for w in cuts.windows(2) {
        let (start, end) = (w[0], w[1]);
        for proc in processes.iter_mut() {
            let specs = &spec.processes[&proc.event_type];
            let mut psi = SparseVec::new();
            let mut log_time = None;
            for s in specs {
                let idx = index[&s.parameter];
                if s.kind == RegressorKind::LogTime {
                    log_time = Some(idx);
                } else {
                    let v = eval_regressor(&s.kind, proc.event_type, &state, fixture, end)?;
                    push_sparse(&mut psi, idx, v);
                }
            }
            proc.segments.push(Segment {
                start,
                end,
                psi,
                log_time,
            });
        }
        // events at `end` see the state of the segment they close
        while next_event < record.events.len() && record.events[next_event].clock_time <= end {
            let ev = &record.events[next_event];
            if let Some(proc) = processes.iter_mut().find(|p| p.event_type == ev.event_type) {
                let seg = proc.segments.last().expect("segment pushed above");
                let mut psi = seg.psi.clone();
                if let Some(idx) = seg.log_time {
                    push_sparse(&mut psi, idx, ev.clock_time.ln());
                }
                proc.events.push(EventInstant {
                    time: ev.clock_time,
                    psi,
                });
            }
            state.apply(ev.event_type, ev.clock_time)?;
            next_event += 1;
        }
        state.advance_to(end)?;
    }

    let mut stoppage = Vec::new();
    for half in [1u8, 2] {
        let specs = &spec.stoppage[usize::from(half - 1)];
        if specs.is_empty() {
            continue;
        }
        let summary = half_summary(record, half);
        let mut phi = SparseVec::new();
        for s in specs {
            let v = eval_stoppage_regressor(&s.kind, half, &summary)?;
            push_sparse(&mut phi, index[&s.parameter], v);
        }
        let observed = if half == 1 {
            record.stoppage1
        } else {
            record.stoppage2
        };
        stoppage.push(StoppageDesign {
            half,
            phi,
            observed,
            ln_factorial: crate::likelihood::ln_factorial(observed),
        });
    }

    let mut event_sum = SparseVec::new();
    for proc in &processes {
        for ev in &proc.events {
            for &(i, v) in &ev.psi {
                push_sparse(&mut event_sum, i, v);
            }
        }
    }

    Ok(SegmentedDesign {
        match_id: record.match_id.clone(),
        n_params,
        layout: spec.layout_fingerprint(),
        total_length: total,
        processes,
        stoppage,
        event_sum,
    })
}

/// Regular-time counts of a half: `(0, 45]` for the first,
/// `(45 + U1, 90 + U1]` for the second.
fn half_summary(record: &MatchRecord, half: u8) -> HalfSummary {
    let (lo, hi) = if half == 1 {
        (0.0, HALF_LENGTH)
    } else {
        (record.half_boundary(), regular_end(2, record.stoppage1))
    };
    let mut summary = HalfSummary::default();
    let mut diff = 0i64;
    for e in &record.events {
        if e.clock_time <= hi {
            match e.event_type {
                EventType::HomeGoal => diff += 1,
                EventType::AwayGoal => diff -= 1,
                _ => {}
            }
        }
        if e.clock_time > lo && e.clock_time <= hi {
            if e.event_type.is_goal() {
                summary.goals += 1;
            } else {
                summary.reds += 1;
            }
        }
    }
    summary.goal_difference = diff;
    summary
}
