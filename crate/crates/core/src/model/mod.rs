//! Match timeline, domain records, regressors and model specifications.
//!
//! All times live on a single match clock measured in minutes: the first
//! half occupies `(0, 45 + U1]` and the second half `(45 + U1, 90 + U1 + U2]`,
//! with the half-time break removed. A recorded minute `m` is placed at its
//! midpoint `m - 0.5`.

mod design;
mod regressors;
mod registry;
mod spec;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{
    build_design, EventInstant, ProcessDesign, Segment, SegmentedDesign, SparseVec,
    StoppageDesign,
};
pub use regressors::{eval_regressor, eval_stoppage_regressor, HalfSummary, RegressorKind};
pub use registry::{
    attack_mean_zero_constraint, geometric_mean_constraint, make_named_model, ComponentFamily,
    GoalComponent, ModelComponent, ModelRegistry, RedCardComponent, StoppageComponent,
};
pub use spec::{LinearConstraint, ModelSpec, ParameterVector, RegressorSpec};

/// Length of the regular part of each half.
pub const HALF_LENGTH: f64 = 45.0;

/// Spacing applied to events recorded in the same minute so that event
/// times are strictly increasing.
pub const TIE_BREAK_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    HomeGoal,
    AwayGoal,
    HomeRed,
    AwayRed,
}

impl EventType {
    /// Canonical order, which is also the tie-break order for events recorded
    /// in the same minute: goals before red cards, home before away.
    pub const ALL: [EventType; 4] = [
        EventType::HomeGoal,
        EventType::AwayGoal,
        EventType::HomeRed,
        EventType::AwayRed,
    ];

    pub fn is_home(self) -> bool {
        matches!(self, EventType::HomeGoal | EventType::HomeRed)
    }

    pub fn is_goal(self) -> bool {
        matches!(self, EventType::HomeGoal | EventType::AwayGoal)
    }

    pub fn index(self) -> usize {
        match self {
            EventType::HomeGoal => 0,
            EventType::AwayGoal => 1,
            EventType::HomeRed => 2,
            EventType::AwayRed => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::HomeGoal => "home_goal",
            EventType::AwayGoal => "away_goal",
            EventType::HomeRed => "home_red",
            EventType::AwayRed => "away_red",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidEvent(format!("unknown event type {s:?}")))
    }
}

/// End of the regular 45 minutes of `half` on the match clock.
pub fn regular_end(half: u8, u1: u32) -> f64 {
    if half == 1 {
        HALF_LENGTH
    } else {
        2.0 * HALF_LENGTH + f64::from(u1)
    }
}

/// Maps a recorded (half, minute, stoppage offset) to the match clock.
///
/// Minute `m` of regular time maps to `m - 0.5`; stoppage minute `45+x`
/// maps to `45 + x - 0.5`; second-half times are shifted by `45 + u1`.
pub fn clock_time(half: u8, regular_minute: u32, stoppage_offset: u32, u1: Option<u32>) -> Result<f64> {
    if !(1..=45).contains(&regular_minute) {
        return Err(Error::InvalidEvent(format!(
            "regular minute {regular_minute} outside 1..45"
        )));
    }
    if stoppage_offset > 0 && regular_minute != 45 {
        return Err(Error::InvalidEvent(format!(
            "stoppage offset {stoppage_offset} recorded with minute {regular_minute} (must be 45)"
        )));
    }
    let within_half = if stoppage_offset == 0 {
        f64::from(regular_minute) - 0.5
    } else {
        HALF_LENGTH + f64::from(stoppage_offset) - 0.5
    };
    match half {
        1 => Ok(within_half),
        2 => {
            let u1 = u1.ok_or_else(|| {
                Error::InvalidEvent("second-half time requires the first-half stoppage".into())
            })?;
            Ok(HALF_LENGTH + f64::from(u1) + within_half)
        }
        h => Err(Error::InvalidEvent(format!("half must be 1 or 2, got {h}"))),
    }
}

/// An event as recorded, before placement on the match clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedEvent {
    pub event_type: EventType,
    pub half: u8,
    pub minute: u32,
    #[serde(default)]
    pub stoppage_offset: u32,
}

impl RecordedEvent {
    pub fn new(event_type: EventType, half: u8, minute: u32, stoppage_offset: u32) -> Self {
        RecordedEvent {
            event_type,
            half,
            minute,
            stoppage_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEvent {
    pub event_type: EventType,
    pub half: u8,
    pub regular_minute: u32,
    pub stoppage_offset: u32,
    /// Position on the match clock, after tie-breaking.
    pub clock_time: f64,
}

/// The pre-match information that static regressors depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub home_team: String,
    pub away_team: String,
    /// Market value of the starting eleven, million EUR.
    pub home_value: Option<f64>,
    pub away_value: Option<f64>,
}

impl Fixture {
    pub fn new(home: impl Into<String>, away: impl Into<String>) -> Self {
        Fixture {
            home_team: home.into(),
            away_team: away.into(),
            home_value: None,
            away_value: None,
        }
    }

    pub fn with_values(mut self, home_value: f64, away_value: f64) -> Self {
        self.home_value = Some(home_value);
        self.away_value = Some(away_value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.home_team == self.away_team {
            return Err(Error::InvalidArgument(format!(
                "home and away team are both {:?}",
                self.home_team
            )));
        }
        for v in [self.home_value, self.away_value].into_iter().flatten() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "lineup value must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The team whose goals (or red cards) `process` counts.
    pub fn own_team(&self, process: EventType) -> &str {
        if process.is_home() {
            &self.home_team
        } else {
            &self.away_team
        }
    }

    pub fn opponent_team(&self, process: EventType) -> &str {
        if process.is_home() {
            &self.away_team
        } else {
            &self.home_team
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: String,
    pub season: String,
    pub date: NaiveDate,
    pub fixture: Fixture,
    /// Announced first-half stoppage, whole minutes.
    pub stoppage1: u32,
    pub stoppage2: u32,
    /// Ordered by clock time, strictly increasing.
    pub events: Vec<MatchEvent>,
}

impl MatchRecord {
    /// Validates the raw events, places them on the clock and breaks ties.
    pub fn new(
        match_id: impl Into<String>,
        season: impl Into<String>,
        date: NaiveDate,
        fixture: Fixture,
        stoppage1: u32,
        stoppage2: u32,
        recorded: &[RecordedEvent],
    ) -> Result<Self> {
        let match_id = match_id.into();
        let invalid = |reason: String| Error::InvalidMatch {
            match_id: match_id.clone(),
            reason,
        };
        fixture.validate().map_err(|e| invalid(e.to_string()))?;

        let total = 2.0 * HALF_LENGTH + f64::from(stoppage1) + f64::from(stoppage2);
        let mut events = Vec::with_capacity(recorded.len());
        for ev in recorded {
            let announced = if ev.half == 1 { stoppage1 } else { stoppage2 };
            if ev.stoppage_offset > announced {
                return Err(invalid(format!(
                    "{} at {}+{} exceeds announced stoppage {announced} of half {}",
                    ev.event_type, ev.minute, ev.stoppage_offset, ev.half
                )));
            }
            let t = clock_time(ev.half, ev.minute, ev.stoppage_offset, Some(stoppage1))
                .map_err(|e| invalid(e.to_string()))?;
            if !(t > 0.0 && t <= total) {
                return Err(invalid(format!("event time {t} outside (0, {total}]")));
            }
            events.push(MatchEvent {
                event_type: ev.event_type,
                half: ev.half,
                regular_minute: ev.minute,
                stoppage_offset: ev.stoppage_offset,
                clock_time: t,
            });
        }
        events.sort_by(|a, b| {
            a.clock_time
                .total_cmp(&b.clock_time)
                .then(a.event_type.cmp(&b.event_type))
        });
        // Same-minute events: keep the sorted order, spread them apart.
        let mut run = 0u32;
        for i in 1..events.len() {
            if events[i].clock_time <= events[i - 1].clock_time {
                run += 1;
                let base = events[i - 1].clock_time - f64::from(run - 1) * TIE_BREAK_EPSILON;
                events[i].clock_time = base + f64::from(run) * TIE_BREAK_EPSILON;
            } else {
                run = 0;
            }
        }
        if let Some(last) = events.last() {
            if last.clock_time > total {
                return Err(invalid("tie-broken event time exceeds match length".into()));
            }
        }

        Ok(MatchRecord {
            match_id,
            season: season.into(),
            date,
            fixture,
            stoppage1,
            stoppage2,
            events,
        })
    }

    /// `T = 90 + U1 + U2`.
    pub fn total_length(&self) -> f64 {
        2.0 * HALF_LENGTH + f64::from(self.stoppage1) + f64::from(self.stoppage2)
    }

    /// Start of the second half on the match clock, `45 + U1`.
    pub fn half_boundary(&self) -> f64 {
        HALF_LENGTH + f64::from(self.stoppage1)
    }

    pub fn timed_events(&self) -> Vec<TimedEvent> {
        self.events
            .iter()
            .map(|e| TimedEvent {
                time: e.clock_time,
                event_type: e.event_type,
            })
            .collect()
    }

    pub fn final_score(&self) -> (u32, u32) {
        let home = self.events.iter().filter(|e| e.event_type == EventType::HomeGoal).count();
        let away = self.events.iter().filter(|e| e.event_type == EventType::AwayGoal).count();
        (home as u32, away as u32)
    }

    /// State using only events with clock time `<= t`.
    pub fn state_at_clock(&self, t: f64) -> Result<MatchState> {
        let u1 = (t > HALF_LENGTH).then_some(self.stoppage1);
        let u2 = (t > regular_end(2, self.stoppage1)).then_some(self.stoppage2);
        MatchState::from_timed_events(&self.timed_events(), t.min(self.total_length()), u1, u2)
    }

    /// State at a match minute on the 0..90 regular-time scale. Minutes past
    /// 45 refer to the second half and include the first-half stoppage.
    pub fn state_at_minute(&self, minute: f64) -> Result<MatchState> {
        if !(0.0..=90.0).contains(&minute) {
            return Err(Error::InvalidArgument(format!(
                "forecast minute {minute} outside [0, 90]"
            )));
        }
        let clock = if minute <= HALF_LENGTH {
            minute
        } else {
            self.half_boundary() + (minute - HALF_LENGTH)
        };
        self.state_at_clock(clock)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time: f64,
    pub event_type: EventType,
}

/// Observable match situation at a point on the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchState {
    pub clock: f64,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_reds: u32,
    pub away_reds: u32,
    /// Announced stoppage of each half, `None` while pending.
    pub u1: Option<u32>,
    pub u2: Option<u32>,
    pub half: u8,
    /// Goals and red cards (both teams) in the regular 45 minutes of the
    /// current half so far; these feed the stoppage regressors.
    pub half_goals: u32,
    pub half_reds: u32,
}

impl MatchState {
    pub fn kickoff() -> Self {
        MatchState {
            clock: 0.0,
            home_goals: 0,
            away_goals: 0,
            home_reds: 0,
            away_reds: 0,
            u1: None,
            u2: None,
            half: 1,
            half_goals: 0,
            half_reds: 0,
        }
    }

    /// Rebuilds the state at `clock` from a list of clock-timed events;
    /// events after `clock` are ignored.
    pub fn from_timed_events(
        events: &[TimedEvent],
        clock: f64,
        u1: Option<u32>,
        u2: Option<u32>,
    ) -> Result<Self> {
        if !(clock >= 0.0) {
            return Err(Error::InvalidState(format!("clock {clock} is negative")));
        }
        if u2.is_some() && u1.is_none() {
            return Err(Error::InvalidState("second stoppage known before the first".into()));
        }
        if clock > HALF_LENGTH && u1.is_none() {
            return Err(Error::InvalidState(format!(
                "clock {clock} is past the first regular half but its stoppage is pending"
            )));
        }
        if let Some(u1) = u1 {
            if clock > regular_end(2, u1) && u2.is_none() {
                return Err(Error::InvalidState(format!(
                    "clock {clock} is past the second regular half but its stoppage is pending"
                )));
            }
            if let Some(u2) = u2 {
                let total = regular_end(2, u1) + f64::from(u2);
                if clock > total + 1e-9 {
                    return Err(Error::InvalidState(format!(
                        "clock {clock} is after the end of the match ({total})"
                    )));
                }
            }
        }
        let mut state = MatchState::kickoff();
        state.u1 = u1;
        state.u2 = u2;
        for ev in events.iter().filter(|e| e.time <= clock) {
            state.clock = ev.time;
            state.sync_half();
            state.record(ev.event_type);
        }
        state.clock = clock;
        state.sync_half();
        Ok(state)
    }

    fn sync_half(&mut self) {
        let boundary = self.u1.map(|u| HALF_LENGTH + f64::from(u));
        let new_half = match boundary {
            Some(b) if self.clock > b => 2,
            _ => 1,
        };
        if new_half != self.half {
            self.half = new_half;
            self.half_goals = 0;
            self.half_reds = 0;
        }
    }

    fn in_regular_time(&self) -> bool {
        match self.half {
            1 => self.clock <= HALF_LENGTH,
            _ => self.clock <= regular_end(2, self.u1.unwrap_or(0)),
        }
    }

    fn record(&mut self, event: EventType) {
        let regular = self.in_regular_time();
        match event {
            EventType::HomeGoal => self.home_goals += 1,
            EventType::AwayGoal => self.away_goals += 1,
            EventType::HomeRed => self.home_reds += 1,
            EventType::AwayRed => self.away_reds += 1,
        }
        if regular {
            if event.is_goal() {
                self.half_goals += 1;
            } else {
                self.half_reds += 1;
            }
        }
    }

    /// Advances the clock to `t` (not backwards) and records `event` there.
    pub fn apply(&mut self, event: EventType, t: f64) -> Result<()> {
        self.advance_to(t)?;
        self.record(event);
        Ok(())
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.clock {
            return Err(Error::InvalidState(format!(
                "cannot move clock back from {} to {t}",
                self.clock
            )));
        }
        if t > HALF_LENGTH && self.u1.is_none() {
            return Err(Error::InvalidState(
                "first-half stoppage must be known before passing minute 45".into(),
            ));
        }
        self.clock = t;
        self.sync_half();
        Ok(())
    }

    pub fn goals_of(&self, process: EventType) -> (u32, u32) {
        if process.is_home() {
            (self.home_goals, self.away_goals)
        } else {
            (self.away_goals, self.home_goals)
        }
    }

    pub fn reds_of(&self, process: EventType) -> (u32, u32) {
        if process.is_home() {
            (self.home_reds, self.away_reds)
        } else {
            (self.away_reds, self.home_reds)
        }
    }

    /// Match end, if both stoppages are known.
    pub fn total_length(&self) -> Option<f64> {
        Some(regular_end(2, self.u1?) + f64::from(self.u2?))
    }

    pub fn is_finished(&self) -> bool {
        self.total_length().is_some_and(|t| self.clock >= t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 6, 1).unwrap()
    }

    #[test]
    fn clock_time_examples() {
        assert_eq!(clock_time(1, 1, 0, None).unwrap(), 0.5);
        assert_eq!(clock_time(1, 45, 3, None).unwrap(), 47.5);
        assert_eq!(clock_time(2, 5, 0, Some(2)).unwrap(), 51.5);
        assert_eq!(clock_time(2, 45, 4, Some(2)).unwrap(), 45.0 + 2.0 + 45.0 + 4.0 - 0.5);
    }

    #[test]
    fn clock_time_rejections() {
        assert!(clock_time(2, 5, 0, None).is_err());
        assert!(clock_time(2, 50, 0, Some(1)).is_err());
        assert!(clock_time(1, 0, 0, None).is_err());
        assert!(clock_time(3, 5, 0, Some(1)).is_err());
        assert!(clock_time(1, 30, 2, None).is_err());
    }

    #[test]
    fn stoppage_offset_beyond_announcement_is_rejected() {
        let ev = [RecordedEvent::new(EventType::HomeGoal, 1, 45, 4)];
        let err = MatchRecord::new("m", "2017", date(), Fixture::new("A", "B"), 3, 4, &ev);
        assert!(err.is_err());
        let ok = MatchRecord::new("m", "2017", date(), Fixture::new("A", "B"), 4, 4, &ev).unwrap();
        assert_eq!(ok.events[0].clock_time, 48.5);
    }

    #[test]
    fn same_team_is_rejected() {
        assert!(MatchRecord::new("m", "s", date(), Fixture::new("A", "A"), 1, 1, &[]).is_err());
    }

    #[test]
    fn ties_are_ordered_and_spread() {
        let ev = [
            RecordedEvent::new(EventType::AwayRed, 1, 10, 0),
            RecordedEvent::new(EventType::HomeRed, 1, 10, 0),
            RecordedEvent::new(EventType::AwayGoal, 1, 10, 0),
            RecordedEvent::new(EventType::HomeGoal, 1, 10, 0),
        ];
        let m = MatchRecord::new("m", "s", date(), Fixture::new("A", "B"), 0, 0, &ev).unwrap();
        let kinds: Vec<_> = m.events.iter().map(|e| e.event_type).collect();
        assert_eq!(kinds, EventType::ALL.to_vec());
        for w in m.events.windows(2) {
            assert!(w[1].clock_time > w[0].clock_time);
        }
        assert!((m.events[3].clock_time - (9.5 + 3.0 * TIE_BREAK_EPSILON)).abs() < 1e-12);

        let again = MatchRecord::new("m", "s", date(), Fixture::new("A", "B"), 0, 0, &ev).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn state_reconstruction_tracks_half_counters() {
        let ev = [
            RecordedEvent::new(EventType::HomeGoal, 1, 7, 0),
            RecordedEvent::new(EventType::HomeGoal, 1, 45, 1),
            RecordedEvent::new(EventType::AwayRed, 2, 10, 0),
            RecordedEvent::new(EventType::AwayGoal, 2, 45, 2),
        ];
        let m = MatchRecord::new("m", "s", date(), Fixture::new("A", "B"), 2, 3, &ev).unwrap();
        let s = m.state_at_clock(45.0).unwrap();
        assert_eq!((s.home_goals, s.half_goals, s.u1), (1, 1, None));
        let s = m.state_at_clock(46.0).unwrap();
        // stoppage goal counts in the score but not in the regular-time counter
        assert_eq!((s.home_goals, s.half_goals, s.u1, s.half), (2, 1, Some(2), 1));
        let s = m.state_at_minute(60.0).unwrap();
        assert_eq!((s.half, s.half_goals, s.half_reds, s.away_reds), (2, 0, 1, 1));
        let s = m.state_at_clock(m.total_length()).unwrap();
        assert_eq!((s.away_goals, s.half_reds, s.half_goals), (1, 1, 0));
        assert!(s.is_finished());
    }

    #[test]
    fn state_requires_known_stoppage_after_45() {
        assert!(MatchState::from_timed_events(&[], 50.0, None, None).is_err());
        assert!(MatchState::from_timed_events(&[], 50.0, Some(2), None).is_ok());
        assert!(MatchState::from_timed_events(&[], 93.0, Some(2), None).is_err());
    }
}
