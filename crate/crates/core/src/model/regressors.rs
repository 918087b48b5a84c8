use serde::{Deserialize, Serialize};

use super::{EventType, Fixture, MatchState, HALF_LENGTH};
use crate::error::{Error, Result};

/// Catalog of regressors. Event-process kinds enter `ln λ(t)`; stoppage
/// kinds enter `ln π_k` and are evaluated once, at the end of the regular
/// 45 minutes of a half.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    /// 1 when `team` is the side whose events the process counts.
    Attack { team: String },
    /// 1 when `team` is the opposing side.
    Defence { team: String },
    /// 1 for processes of the home side.
    HomeAdvantage,
    /// `ln V_own - ln V_opponent`.
    LogValueRatio,
    /// 1 in the second half.
    HalfIndicator,
    /// Own goals minus opponent goals.
    GoalDifference,
    /// Opponent red cards minus own red cards.
    RedCardDifference,
    Constant,
    /// `ln t` on the match clock.
    LogTime,
    /// Goals by both teams in the regular 45 minutes of the half.
    HalfGoalCount,
    /// Red cards to both teams in the regular 45 minutes of the half.
    HalfRedCount,
    /// 1 if the goal difference is at most one at the end of the second
    /// half's regular time.
    CloseScoreIndicator,
}

impl RegressorKind {
    pub fn allowed_in_process(&self) -> bool {
        !matches!(
            self,
            RegressorKind::HalfGoalCount
                | RegressorKind::HalfRedCount
                | RegressorKind::CloseScoreIndicator
        )
    }

    pub fn allowed_in_stoppage(&self, half: u8) -> bool {
        match self {
            RegressorKind::Constant | RegressorKind::HalfGoalCount | RegressorKind::HalfRedCount => {
                true
            }
            RegressorKind::CloseScoreIndicator => half == 2,
            _ => false,
        }
    }

    pub fn team(&self) -> Option<&str> {
        match self {
            RegressorKind::Attack { team } | RegressorKind::Defence { team } => Some(team),
            _ => None,
        }
    }
}

/// Value of an event-process regressor at time `t`, given the state just
/// before `t`.
pub fn eval_regressor(
    kind: &RegressorKind,
    process: EventType,
    state: &MatchState,
    fixture: &Fixture,
    t: f64,
) -> Result<f64> {
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(match kind {
        RegressorKind::Attack { team } => indicator(fixture.own_team(process) == team),
        RegressorKind::Defence { team } => indicator(fixture.opponent_team(process) == team),
        RegressorKind::HomeAdvantage => indicator(process.is_home()),
        RegressorKind::LogValueRatio => {
            let (Some(home), Some(away)) = (fixture.home_value, fixture.away_value) else {
                return Err(Error::Spec(format!(
                    "value regressor needs lineup values for {} v {}",
                    fixture.home_team, fixture.away_team
                )));
            };
            let ratio = home.ln() - away.ln();
            if process.is_home() {
                ratio
            } else {
                -ratio
            }
        }
        RegressorKind::HalfIndicator => match state.u1 {
            Some(u1) => indicator(t > HALF_LENGTH + f64::from(u1)),
            None if t <= HALF_LENGTH => 0.0,
            None => {
                return Err(Error::InvalidState(
                    "half indicator past minute 45 with pending stoppage".into(),
                ))
            }
        },
        RegressorKind::GoalDifference => {
            let (own, opp) = state.goals_of(process);
            f64::from(own) - f64::from(opp)
        }
        RegressorKind::RedCardDifference => {
            let (own, opp) = state.reds_of(process);
            f64::from(opp) - f64::from(own)
        }
        RegressorKind::Constant => 1.0,
        RegressorKind::LogTime => {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("ln t requires t > 0, got {t}")));
            }
            t.ln()
        }
        RegressorKind::HalfGoalCount
        | RegressorKind::HalfRedCount
        | RegressorKind::CloseScoreIndicator => {
            return Err(Error::Spec(format!(
                "{kind:?} is a stoppage regressor, not an event-process regressor"
            )))
        }
    })
}

/// What the stoppage regressors of a half observe at its regular end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HalfSummary {
    pub goals: u32,
    pub reds: u32,
    /// Home minus away goals at the end of the half's regular time.
    pub goal_difference: i64,
}

impl HalfSummary {
    pub fn from_state(state: &MatchState) -> Self {
        HalfSummary {
            goals: state.half_goals,
            reds: state.half_reds,
            goal_difference: i64::from(state.home_goals) - i64::from(state.away_goals),
        }
    }
}

pub fn eval_stoppage_regressor(kind: &RegressorKind, half: u8, summary: &HalfSummary) -> Result<f64> {
    Ok(match kind {
        RegressorKind::Constant => 1.0,
        RegressorKind::HalfGoalCount => f64::from(summary.goals),
        RegressorKind::HalfRedCount => f64::from(summary.reds),
        RegressorKind::CloseScoreIndicator if half == 2 => {
            if summary.goal_difference.abs() <= 1 {
                1.0
            } else {
                0.0
            }
        }
        other => {
            return Err(Error::Spec(format!(
                "{other:?} is not a stoppage regressor for half {half}"
            )))
        }
    })
}
