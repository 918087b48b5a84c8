//! Exact simulation of matches from a fitted model.
//!
//! Each step draws a candidate time for every event process from the
//! current state, commits the earliest one and redraws. Goal intensities are
//! piecewise constant between events and boundaries, so candidates are
//! exponential; a process with a `ln t` regressor has intensity `e^c t^a` and
//! is inverted in closed form. Stoppage lengths are drawn when the clock
//! reaches the end of a half's regular 45 minutes.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    eval_regressor, eval_stoppage_regressor, regular_end, EventType, Fixture, HalfSummary,
    MatchState, ModelSpec, ParameterVector, RegressorKind, TimedEvent, HALF_LENGTH,
};

/// Largest per-team score listed individually in `exact_score_probs`.
pub const SCORE_CAP: u32 = 10;

/// A model specification together with fitted coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub params: ParameterVector,
}

impl FittedModel {
    pub fn new(spec: ModelSpec, params: ParameterVector) -> Result<Self> {
        spec.validate()?;
        if !params.matches_spec(&spec) {
            return Err(Error::Spec(format!(
                "parameter ids do not match model {}",
                spec.name
            )));
        }
        if params.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(FittedModel { spec, params })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn for_fixture(&self, fixture: &Fixture) -> Result<MatchModel> {
        MatchModel::new(self, fixture)
    }
}

/// Intensity of one process over an interval on which its regressors other
/// than `ln t` are constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intensity {
    /// Events per minute; zero means the process never fires.
    Constant(f64),
    /// `e^c t^a`.
    PowerLaw { c: f64, a: f64 },
}

impl Intensity {
    /// `Λ(s, t)`.
    pub fn integrated(&self, s: f64, t: f64) -> f64 {
        match *self {
            Intensity::Constant(rate) => rate * (t - s),
            Intensity::PowerLaw { c, a } => crate::likelihood::power_law_integral(c, a, s, t),
        }
    }
}

/// Next event time in `(from, until]`, or `None` if the process stays
/// silent on that interval.
pub fn next_event_time<R: Rng + ?Sized>(
    intensity: Intensity,
    from: f64,
    until: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if !(from < until) {
        return Ok(None);
    }
    let e: f64 = Exp1.sample(rng);
    let t = match intensity {
        Intensity::Constant(rate) => {
            if !(rate > 0.0) {
                return Ok(None);
            }
            from + e / rate
        }
        Intensity::PowerLaw { c, a } => {
            if !(a > -1.0) {
                return Err(Error::InvalidArgument(format!(
                    "power-law exponent {a} cannot be inverted from time 0"
                )));
            }
            let p = a + 1.0;
            (p * e * (-c).exp() + from.powf(p)).powf(1.0 / p)
        }
    };
    Ok((t <= until).then_some(t))
}

/// Poisson draw with mean `exp(Σ ξ_i φ_i)`.
pub fn sample_stoppage<R: Rng + ?Sized>(coefficients: &[f64], phi: &[f64], rng: &mut R) -> u32 {
    let eta: f64 = coefficients.iter().zip(phi).map(|(a, b)| a * b).sum();
    poisson(eta.exp(), rng)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u32,
        Err(_) => 0,
    }
}

#[derive(Debug, Clone)]
struct ProcessModel {
    event_type: EventType,
    /// Sum of the regressors that do not change during a match.
    static_eta: f64,
    dynamic: Vec<(f64, RegressorKind)>,
    log_time: Option<f64>,
}

/// A fitted model specialised to one fixture, ready to simulate.
#[derive(Debug, Clone)]
pub struct MatchModel {
    fixture: Fixture,
    processes: Vec<ProcessModel>,
    /// Stoppage regressors per half as `(coefficient, kind)`; `None` when
    /// the half's stoppage is not modelled (always zero).
    stoppage: [Option<Vec<(f64, RegressorKind)>>; 2],
}

impl MatchModel {
    pub fn new(model: &FittedModel, fixture: &Fixture) -> Result<Self> {
        let spec = &model.spec;
        fixture.validate()?;
        for team in [&fixture.home_team, &fixture.away_team] {
            if !spec.knows_team(team) {
                return Err(Error::UnknownTeam(team.clone()));
            }
        }
        if spec.requires_values() && (fixture.home_value.is_none() || fixture.away_value.is_none())
        {
            return Err(Error::Spec(format!(
                "model {} needs lineup values for both teams",
                spec.name
            )));
        }
        let index = spec.parameter_index();
        let coef = |id: &str| model.params.values[index[id]];
        let kickoff = MatchState::kickoff();
        let mut processes = Vec::new();
        for (&event_type, regs) in &spec.processes {
            let mut p = ProcessModel {
                event_type,
                static_eta: 0.0,
                dynamic: Vec::new(),
                log_time: None,
            };
            for r in regs {
                let xi = coef(&r.parameter);
                match r.kind {
                    RegressorKind::LogTime => p.log_time = Some(xi),
                    RegressorKind::HalfIndicator
                    | RegressorKind::GoalDifference
                    | RegressorKind::RedCardDifference => p.dynamic.push((xi, r.kind.clone())),
                    _ => {
                        p.static_eta += xi * eval_regressor(&r.kind, event_type, &kickoff, fixture, 1.0)?
                    }
                }
            }
            processes.push(p);
        }
        let stoppage = [0, 1].map(|h| {
            let regs = &spec.stoppage[h];
            (!regs.is_empty()).then(|| {
                regs.iter()
                    .map(|r| (coef(&r.parameter), r.kind.clone()))
                    .collect()
            })
        });
        Ok(MatchModel {
            fixture: fixture.clone(),
            processes,
            stoppage,
        })
    }

    pub fn fixture(&self) -> &Fixture {
        &self.fixture
    }

    /// Intensity of `process` on `(state.clock, until]`.
    pub fn intensity(&self, process: EventType, state: &MatchState, until: f64) -> Result<Intensity> {
        match self.processes.iter().find(|p| p.event_type == process) {
            Some(p) => self.process_intensity(p, state, until),
            None => Ok(Intensity::Constant(0.0)),
        }
    }

    fn process_intensity(&self, p: &ProcessModel, state: &MatchState, until: f64) -> Result<Intensity> {
        let mut eta = p.static_eta;
        for (xi, kind) in &p.dynamic {
            eta += xi * eval_regressor(kind, p.event_type, state, &self.fixture, until)?;
        }
        Ok(match p.log_time {
            None => Intensity::Constant(eta.exp()),
            Some(a) => Intensity::PowerLaw { c: eta, a },
        })
    }

    /// Mean stoppage of `half` given what happened in its regular time.
    pub fn expected_stoppage(&self, half: u8, summary: &HalfSummary) -> Result<f64> {
        match &self.stoppage[usize::from(half - 1)] {
            None => Ok(0.0),
            Some(regs) => {
                let mut eta = 0.0;
                for (xi, kind) in regs {
                    eta += xi * eval_stoppage_regressor(kind, half, summary)?;
                }
                Ok(eta.exp())
            }
        }
    }

    /// Simulates from `initial` to the final whistle.
    pub fn simulate_match<R: Rng + ?Sized>(
        &self,
        initial: &MatchState,
        rng: &mut R,
    ) -> Result<ScenarioResult> {
        self.run(initial, rng, true)
    }

    fn run<R: Rng + ?Sized>(
        &self,
        initial: &MatchState,
        rng: &mut R,
        keep_events: bool,
    ) -> Result<ScenarioResult> {
        validate_initial(initial)?;
        let mut state = initial.clone();
        let mut events = Vec::new();
        loop {
            let boundary = match (state.u1, state.u2) {
                (None, _) => HALF_LENGTH,
                (Some(u1), _) if state.clock < HALF_LENGTH + f64::from(u1) => {
                    HALF_LENGTH + f64::from(u1)
                }
                (Some(u1), None) => regular_end(2, u1),
                (Some(u1), Some(u2)) => regular_end(2, u1) + f64::from(u2),
            };
            let mut first: Option<(f64, EventType)> = None;
            for p in &self.processes {
                let intensity = self.process_intensity(p, &state, boundary)?;
                if let Some(t) = next_event_time(intensity, state.clock, boundary, rng)? {
                    if first.is_none_or(|(best, _)| t < best) {
                        first = Some((t, p.event_type));
                    }
                }
            }
            if let Some((t, event_type)) = first {
                state.apply(event_type, t)?;
                if keep_events {
                    events.push(TimedEvent { time: t, event_type });
                }
                continue;
            }
            match (state.u1, state.u2) {
                (None, _) => {
                    state.advance_to(HALF_LENGTH)?;
                    let mean = self.expected_stoppage(1, &HalfSummary::from_state(&state))?;
                    state.u1 = Some(poisson(mean, rng));
                }
                (Some(u1), _) if boundary == HALF_LENGTH + f64::from(u1) && state.clock < boundary => {
                    state.advance_to(boundary)?;
                }
                (Some(_), None) => {
                    state.advance_to(boundary)?;
                    let mean = self.expected_stoppage(2, &HalfSummary::from_state(&state))?;
                    state.u2 = Some(poisson(mean, rng));
                }
                (Some(_), Some(_)) => {
                    state.advance_to(boundary)?;
                    break;
                }
            }
        }
        Ok(ScenarioResult {
            home_goals: state.home_goals,
            away_goals: state.away_goals,
            home_reds: state.home_reds,
            away_reds: state.away_reds,
            u1: state.u1.unwrap_or(0),
            u2: state.u2.unwrap_or(0),
            events,
        })
    }

    /// `n` independent scenarios from `initial`. Scenario `i` uses stream
    /// `i` of a ChaCha8 generator seeded with `seed`, so the result does not
    /// depend on how scenarios are spread over threads.
    pub fn simulate_many(&self, initial: &MatchState, n: usize, seed: u64) -> Result<OutcomeDistribution> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one scenario".into()));
        }
        validate_initial(initial)?;
        let finals: Vec<(u32, u32)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = scenario_rng(seed, i as u64);
                self.run(initial, &mut rng, false)
                    .map(|s| (s.home_goals, s.away_goals))
            })
            .collect::<Result<_>>()?;
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for s in finals {
            *counts.entry(s).or_default() += 1;
        }
        Ok(OutcomeDistribution::from_counts(seed, counts))
    }
}

/// Generator for scenario `index` under `seed`.
pub fn scenario_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn validate_initial(s: &MatchState) -> Result<()> {
    let check = MatchState::from_timed_events(&[], s.clock, s.u1, s.u2)?;
    if check.half != s.half {
        return Err(Error::InvalidState(format!(
            "half {} does not match clock {}",
            s.half, s.clock
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_reds: u32,
    pub away_reds: u32,
    pub u1: u32,
    pub u2: u32,
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultProbs {
    pub home_win: f64,
    pub draw: f64,
    pub away_win: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchResult {
    HomeWin,
    Draw,
    AwayWin,
}

impl MatchResult {
    pub fn of(home: u32, away: u32) -> Self {
        match home.cmp(&away) {
            std::cmp::Ordering::Greater => MatchResult::HomeWin,
            std::cmp::Ordering::Equal => MatchResult::Draw,
            std::cmp::Ordering::Less => MatchResult::AwayWin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCount {
    pub home: u32,
    pub away: u32,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreProb {
    pub home: u32,
    pub away: u32,
    pub prob: f64,
}

/// Monte Carlo distribution of the final score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub n_scenarios: u64,
    pub seed: u64,
    pub result_probs: ResultProbs,
    /// Scores with both sides at most `SCORE_CAP`, in (home, away) order.
    pub exact_score_probs: Vec<ScoreProb>,
    /// Mass of scores beyond the cap, split by result.
    pub overflow: ResultProbs,
    pub expected_goals: (f64, f64),
    /// Every observed final score with its scenario count.
    pub score_counts: Vec<ScoreCount>,
}

impl OutcomeDistribution {
    pub fn from_counts(seed: u64, counts: BTreeMap<(u32, u32), u64>) -> Self {
        let n: u64 = counts.values().sum();
        let nf = n as f64;
        let mut wins = [0u64; 3];
        let mut over = [0u64; 3];
        let (mut home_total, mut away_total) = (0u64, 0u64);
        let mut exact = Vec::new();
        let mut score_counts = Vec::with_capacity(counts.len());
        for (&(h, a), &c) in &counts {
            let r = MatchResult::of(h, a) as usize;
            wins[r] += c;
            home_total += u64::from(h) * c;
            away_total += u64::from(a) * c;
            if h <= SCORE_CAP && a <= SCORE_CAP {
                exact.push(ScoreProb {
                    home: h,
                    away: a,
                    prob: c as f64 / nf,
                });
            } else {
                over[r] += c;
            }
            score_counts.push(ScoreCount { home: h, away: a, count: c });
        }
        let probs = |k: [u64; 3]| ResultProbs {
            home_win: k[0] as f64 / nf,
            draw: k[1] as f64 / nf,
            away_win: k[2] as f64 / nf,
        };
        OutcomeDistribution {
            n_scenarios: n,
            seed,
            result_probs: probs(wins),
            exact_score_probs: exact,
            overflow: probs(over),
            expected_goals: (home_total as f64 / nf, away_total as f64 / nf),
            score_counts,
        }
    }

    /// Probability of a predicate on the final score.
    pub fn probability(&self, predicate: impl Fn(u32, u32) -> bool) -> f64 {
        let hits: u64 = self
            .score_counts
            .iter()
            .filter(|s| predicate(s.home, s.away))
            .map(|s| s.count)
            .sum();
        hits as f64 / self.n_scenarios as f64
    }

    pub fn score_prob(&self, home: u32, away: u32) -> f64 {
        self.probability(|h, a| h == home && a == away)
    }

    pub fn result_prob(&self, result: MatchResult) -> f64 {
        match result {
            MatchResult::HomeWin => self.result_probs.home_win,
            MatchResult::Draw => self.result_probs.draw,
            MatchResult::AwayWin => self.result_probs.away_win,
        }
    }

    /// The `k` most likely scores, most likely first; ties broken by score.
    pub fn top_scores(&self, k: usize) -> Vec<ScoreProb> {
        let mut all: Vec<_> = self.score_counts.clone();
        all.sort_by(|x, y| y.count.cmp(&x.count).then((x.home, x.away).cmp(&(y.home, y.away))));
        all.into_iter()
            .take(k)
            .map(|s| ScoreProb {
                home: s.home,
                away: s.away,
                prob: s.count as f64 / self.n_scenarios as f64,
            })
            .collect()
    }
}
