//! Event logs of matches in progress. The match state is never stored on
//! its own: it is always rebuilt by replaying the log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clock_time, regular_end, EventType, Fixture, MatchState, HALF_LENGTH};

/// A match time as an operator reads it off the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchTime {
    pub half: u8,
    pub minute: u32,
    #[serde(default)]
    pub stoppage_offset: u32,
}

impl MatchTime {
    pub fn new(half: u8, minute: u32, stoppage_offset: u32) -> Self {
        MatchTime { half, minute, stoppage_offset }
    }

    /// The minute containing clock time `t`, given the first-half stoppage
    /// when `t` is past the first regular half.
    pub fn of_clock(t: f64, u1: Option<u32>) -> Self {
        let boundary = HALF_LENGTH + f64::from(u1.unwrap_or(0));
        let (half, s) = if u1.is_some() && t > boundary { (2, t - boundary) } else { (1, t) };
        if s <= HALF_LENGTH {
            MatchTime::new(half, (s.ceil() as u32).min(45), 0)
        } else {
            MatchTime::new(half, 45, ((s - HALF_LENGTH).ceil() as u32).max(1))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    /// An event during the given minute.
    Event {
        #[serde(rename = "type")]
        event_type: EventType,
        #[serde(flatten)]
        time: MatchTime,
    },
    /// The given minute has been played without further events.
    Clock {
        #[serde(flatten)]
        time: MatchTime,
    },
    /// Announced stoppage of a half.
    Stoppage { half: u8, minutes: u32 },
}

/// Fixture plus append-only log of what has happened so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLog {
    pub fixture: Fixture,
    #[serde(default)]
    pub entries: Vec<LogEntry>,
}

impl MatchLog {
    pub fn new(fixture: Fixture) -> Result<Self> {
        fixture.validate()?;
        Ok(MatchLog { fixture, entries: Vec::new() })
    }

    pub fn state(&self) -> Result<MatchState> {
        let mut state = MatchState::kickoff();
        for e in &self.entries {
            apply(&mut state, e)?;
        }
        Ok(state)
    }

    /// Appends `entry` if it is consistent with the log, returning the new
    /// state; on error the log is unchanged.
    pub fn push(&mut self, entry: LogEntry) -> Result<MatchState> {
        let mut state = self.state()?;
        apply(&mut state, &entry)?;
        self.entries.push(entry);
        Ok(state)
    }

    /// State after `entry` without recording it.
    pub fn preview(&self, entry: &LogEntry) -> Result<MatchState> {
        let mut state = self.state()?;
        apply(&mut state, entry)?;
        Ok(state)
    }

    pub fn undo(&mut self) -> Option<LogEntry> {
        self.entries.pop()
    }

    /// State at a minute on the 0..90 regular-time scale using only the
    /// entries known by then. Stoppages count as known once the clock is
    /// past the end of the half's regular time.
    pub fn state_at_minute(&self, minute: f64) -> Result<MatchState> {
        if !(0.0..=90.0).contains(&minute) {
            return Err(Error::InvalidArgument(format!("minute {minute} outside [0, 90]")));
        }
        let full = self.state()?;
        let target = if minute <= HALF_LENGTH {
            minute
        } else {
            let u1 = full.u1.ok_or_else(|| {
                Error::InvalidArgument(format!("minute {minute} needs the first-half stoppage"))
            })?;
            HALF_LENGTH + f64::from(u1) + (minute - HALF_LENGTH)
        };
        if full.clock < target && !full.is_finished() {
            return Err(Error::InvalidArgument(format!(
                "minute {minute} is past the end of the log (clock {})",
                full.clock
            )));
        }
        let mut state = MatchState::kickoff();
        let mut replay = MatchState::kickoff();
        for e in &self.entries {
            apply(&mut replay, e)?;
            match *e {
                LogEntry::Stoppage { half, .. } => {
                    if target > regular_end(half, replay.u1.unwrap_or(0)) {
                        apply(&mut state, e)?;
                    }
                }
                _ if replay.clock <= target => apply(&mut state, e)?,
                _ => break,
            }
        }
        state.advance_to(target.min(full.total_length().unwrap_or(f64::INFINITY)))?;
        Ok(state)
    }

    /// The recorded events with their clock times, in log order.
    pub fn events(&self) -> Result<Vec<(EventType, MatchTime, f64)>> {
        let mut state = MatchState::kickoff();
        let mut out = Vec::new();
        for e in &self.entries {
            apply(&mut state, e)?;
            if let LogEntry::Event { event_type, time } = e {
                out.push((*event_type, *time, state.clock));
            }
        }
        Ok(out)
    }
}

fn apply(state: &mut MatchState, entry: &LogEntry) -> Result<()> {
    match *entry {
        LogEntry::Event { event_type, time } => {
            let t = entry_clock(state, time)?;
            check_forward(state, t)?;
            state.apply(event_type, t)
        }
        LogEntry::Clock { time } => {
            // end of the named minute
            let t = entry_clock(state, time)? + 0.5;
            check_forward(state, t)?;
            state.advance_to(t)
        }
        LogEntry::Stoppage { half, minutes } => announce(state, half, minutes),
    }
}

fn entry_clock(state: &MatchState, time: MatchTime) -> Result<f64> {
    if time.half == 2 && state.u1.is_none() {
        return Err(Error::InvalidEvent(
            "second-half time before the first-half stoppage is announced".into(),
        ));
    }
    let announced = if time.half == 1 { state.u1 } else { state.u2 };
    if time.stoppage_offset > 0 {
        match announced {
            None => {
                return Err(Error::InvalidEvent(format!(
                    "stoppage minute 45+{} of half {} before its stoppage is announced",
                    time.stoppage_offset, time.half
                )))
            }
            Some(u) if time.stoppage_offset > u => {
                return Err(Error::InvalidEvent(format!(
                    "stoppage minute 45+{} exceeds the announced {u}",
                    time.stoppage_offset
                )))
            }
            _ => {}
        }
    }
    clock_time(time.half, time.minute, time.stoppage_offset, state.u1)
}

fn check_forward(state: &MatchState, t: f64) -> Result<()> {
    if t < state.clock {
        return Err(Error::TimeRegression { from: state.clock, to: t });
    }
    Ok(())
}

fn announce(state: &mut MatchState, half: u8, minutes: u32) -> Result<()> {
    let (slot, start) = match half {
        1 => (&state.u1, 0.0),
        2 => {
            let u1 = state.u1.ok_or_else(|| {
                Error::InvalidState("second-half stoppage before the first-half one".into())
            })?;
            (&state.u2, HALF_LENGTH + f64::from(u1))
        }
        h => return Err(Error::InvalidEvent(format!("half must be 1 or 2, got {h}"))),
    };
    if let Some(u) = slot {
        return Err(Error::InvalidState(format!("stoppage of half {half} already announced ({u})")));
    }
    // the announcement is made during the last regular minute
    let earliest = start + HALF_LENGTH - 1.0;
    if state.clock < earliest {
        return Err(Error::InvalidState(format!(
            "stoppage of half {half} announced at clock {} before minute 45",
            state.clock
        )));
    }
    if half == 1 {
        state.u1 = Some(minutes);
    } else {
        state.u2 = Some(minutes);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> MatchLog {
        MatchLog::new(Fixture::new("A", "B")).unwrap()
    }

    fn event(t: EventType, half: u8, minute: u32) -> LogEntry {
        LogEntry::Event { event_type: t, time: MatchTime::new(half, minute, 0) }
    }

    #[test]
    fn goal_moves_clock_to_minute_midpoint() {
        let mut l = log();
        let s = l.push(event(EventType::HomeGoal, 1, 34)).unwrap();
        assert_eq!((s.clock, s.home_goals, s.half_goals), (33.5, 1, 1));
    }

    #[test]
    fn undo_restores_kickoff() {
        let mut l = log();
        l.push(event(EventType::AwayRed, 1, 3)).unwrap();
        l.undo();
        assert_eq!(l.state().unwrap(), MatchState::kickoff());
    }

    #[test]
    fn backwards_clock_is_a_regression() {
        let mut l = log();
        l.push(LogEntry::Clock { time: MatchTime::new(1, 20, 0) }).unwrap();
        let err = l.push(event(EventType::HomeGoal, 1, 20)).unwrap_err();
        assert!(matches!(err, Error::TimeRegression { .. }));
        assert_eq!(l.entries.len(), 1);
    }

    #[test]
    fn second_half_needs_first_stoppage() {
        let mut l = log();
        assert!(matches!(l.push(event(EventType::HomeGoal, 2, 1)), Err(Error::InvalidEvent(_))));
        assert!(l.push(LogEntry::Stoppage { half: 1, minutes: 2 }).is_err());
        l.push(LogEntry::Clock { time: MatchTime::new(1, 44, 0) }).unwrap();
        l.push(LogEntry::Stoppage { half: 1, minutes: 2 }).unwrap();
        l.push(LogEntry::Clock { time: MatchTime::new(1, 45, 2) }).unwrap();
        let s = l.push(event(EventType::AwayGoal, 2, 1)).unwrap();
        assert_eq!((s.half, s.clock, s.away_goals, s.half_goals), (2, 47.5, 1, 1));
    }

    #[test]
    fn state_at_minute_sees_only_earlier_entries() {
        let mut l = log();
        l.push(event(EventType::HomeGoal, 1, 34)).unwrap();
        l.push(LogEntry::Clock { time: MatchTime::new(1, 44, 0) }).unwrap();
        l.push(LogEntry::Stoppage { half: 1, minutes: 3 }).unwrap();
        l.push(event(EventType::AwayGoal, 1, 45)).unwrap();
        l.push(event(EventType::AwayRed, 2, 10)).unwrap();
        l.push(LogEntry::Clock { time: MatchTime::new(2, 20, 0) }).unwrap();
        let s = l.state_at_minute(30.0).unwrap();
        assert_eq!((s.clock, s.home_goals), (30.0, 0));
        let s = l.state_at_minute(45.0).unwrap();
        assert_eq!((s.clock, s.home_goals, s.away_goals, s.u1), (45.0, 1, 1, None));
        let s = l.state_at_minute(50.0).unwrap();
        assert_eq!((s.clock, s.away_reds, s.u1, s.half), (53.0, 0, Some(3), 2));
        let s = l.state_at_minute(60.0).unwrap();
        assert_eq!((s.away_reds, s.half_reds), (1, 1));
        assert!(l.state_at_minute(66.0).is_err());
    }

    #[test]
    fn of_clock_inverts_clock_time() {
        for (h, m, o, u1) in [(1, 1, 0, 2), (1, 45, 2, 2), (2, 7, 0, 3), (2, 45, 5, 0)] {
            let t = clock_time(h, m, o, Some(u1)).unwrap();
            assert_eq!(MatchTime::of_clock(t, Some(u1)), MatchTime::new(h, m, o));
        }
    }

    #[test]
    fn entries_round_trip_through_json() {
        let e = event(EventType::HomeRed, 2, 12);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"kind":"event","type":"home_red","half":2,"minute":12,"stoppage_offset":0}"#);
        assert_eq!(serde_json::from_str::<LogEntry>(&json).unwrap(), e);
    }
}
