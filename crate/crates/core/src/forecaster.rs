//! In-game forecasts and their evaluation against observed outcomes.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_designs, FitOptions};
use crate::model::{build_design, make_named_model, MatchRecord, MatchState};
use crate::simulator::{FittedModel, MatchModel, MatchResult, OutcomeDistribution, ScoreProb};

/// The forecast minutes used throughout the evaluation.
pub const DEFAULT_MINUTES: [f64; 6] = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0];
pub const DEFAULT_SCENARIOS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub match_id: String,
    /// Minute on the 0..90 regular-time scale.
    pub minute: f64,
    pub model: String,
    /// Match clock the forecast starts from.
    pub clock: f64,
    pub state: MatchState,
    /// Number of recorded events known at the forecast time.
    pub events_used: usize,
    pub distribution: OutcomeDistribution,
}

impl ForecastPoint {
    pub fn top_scores(&self, k: usize) -> Vec<ScoreProb> {
        self.distribution.top_scores(k)
    }
}

/// Forecast for `record` using only what was known at `minute`.
pub fn forecast(
    model: &FittedModel,
    record: &MatchRecord,
    minute: f64,
    n: usize,
    seed: u64,
) -> Result<ForecastPoint> {
    let m = model.for_fixture(&record.fixture)?;
    forecast_with(&m, model.name(), record, minute, n, seed)
}

fn forecast_with(
    m: &MatchModel,
    model_name: &str,
    record: &MatchRecord,
    minute: f64,
    n: usize,
    seed: u64,
) -> Result<ForecastPoint> {
    let state = record.state_at_minute(minute)?;
    let events_used = record.events.iter().filter(|e| e.clock_time <= state.clock).count();
    let distribution = m.simulate_many(&state, n, seed)?;
    Ok(ForecastPoint {
        match_id: record.match_id.clone(),
        minute,
        model: model_name.to_string(),
        clock: state.clock,
        state,
        events_used,
        distribution,
    })
}

/// Forecasts on the grid `0, step, 2 step, …, 90`.
pub fn minute_by_minute(
    model: &FittedModel,
    record: &MatchRecord,
    step: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<ForecastPoint>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let m = model.for_fixture(&record.fixture)?;
    let count = (90.0 / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|i| forecast_with(&m, model.name(), record, (i as f64 * step).min(90.0), n, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    Result,
    ExactScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLikelihood {
    /// `Σ_k ln p_k`.
    pub total: f64,
    /// `total / K`.
    pub per_match: f64,
    pub log_probs: Vec<f64>,
    /// Matches whose observed outcome never occurred in the scenarios and
    /// was floored at `1 / (10 n)`.
    pub floored: usize,
}

fn outcome_prob(d: &OutcomeDistribution, observed: (u32, u32), mode: OutcomeMode) -> f64 {
    match mode {
        OutcomeMode::Result => d.result_prob(MatchResult::of(observed.0, observed.1)),
        OutcomeMode::ExactScore => d.score_prob(observed.0, observed.1),
    }
}

/// Log-likelihood of the observed outcomes under the forecasts.
pub fn outcome_likelihood(
    forecasts: &[&ForecastPoint],
    observed: &[(u32, u32)],
    mode: OutcomeMode,
) -> Result<OutcomeLikelihood> {
    if forecasts.len() != observed.len() {
        return Err(Error::InvalidArgument(format!(
            "{} forecasts for {} outcomes",
            forecasts.len(),
            observed.len()
        )));
    }
    let mut floored = 0;
    let log_probs: Vec<f64> = forecasts
        .iter()
        .zip(observed)
        .map(|(f, &o)| {
            let p = outcome_prob(&f.distribution, o, mode);
            let floor = 1.0 / (10.0 * f.distribution.n_scenarios as f64);
            if p < floor {
                floored += 1;
            }
            p.max(floor).ln()
        })
        .collect();
    let total: f64 = log_probs.iter().sum();
    let k = log_probs.len().max(1) as f64;
    Ok(OutcomeLikelihood {
        total,
        per_match: total / k,
        log_probs,
        floored,
    })
}

/// `Σ_k P_k(E)` for an event `E` of the final score.
pub fn expected_event_count(
    forecasts: &[&ForecastPoint],
    event: impl Fn(u32, u32) -> bool,
) -> f64 {
    forecasts.iter().map(|f| f.distribution.probability(&event)).sum()
}

/// Rows of the calibration tables: results, then goals 0..4 and 5+ for
/// each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CalibrationCell {
    Result(MatchResultLabel),
    HomeGoals(u32),
    AwayGoals(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchResultLabel {
    Home,
    Draw,
    Away,
}

impl CalibrationCell {
    /// Goal rows use 5 for "5 or more".
    pub fn all() -> Vec<CalibrationCell> {
        let mut v = vec![
            CalibrationCell::Result(MatchResultLabel::Home),
            CalibrationCell::Result(MatchResultLabel::Draw),
            CalibrationCell::Result(MatchResultLabel::Away),
        ];
        v.extend((0..=5).map(CalibrationCell::HomeGoals));
        v.extend((0..=5).map(CalibrationCell::AwayGoals));
        v
    }

    pub fn table(&self) -> &'static str {
        match self {
            CalibrationCell::Result(_) => "results",
            CalibrationCell::HomeGoals(_) => "home_goals",
            CalibrationCell::AwayGoals(_) => "away_goals",
        }
    }

    pub fn label(&self) -> String {
        match self {
            CalibrationCell::Result(MatchResultLabel::Home) => "home".into(),
            CalibrationCell::Result(MatchResultLabel::Draw) => "draw".into(),
            CalibrationCell::Result(MatchResultLabel::Away) => "away".into(),
            CalibrationCell::HomeGoals(5) | CalibrationCell::AwayGoals(5) => "5+".into(),
            CalibrationCell::HomeGoals(g) | CalibrationCell::AwayGoals(g) => g.to_string(),
        }
    }

    pub fn contains(&self, home: u32, away: u32) -> bool {
        match *self {
            CalibrationCell::Result(r) => {
                let want = match r {
                    MatchResultLabel::Home => MatchResult::HomeWin,
                    MatchResultLabel::Draw => MatchResult::Draw,
                    MatchResultLabel::Away => MatchResult::AwayWin,
                };
                MatchResult::of(home, away) == want
            }
            CalibrationCell::HomeGoals(5) => home >= 5,
            CalibrationCell::AwayGoals(5) => away >= 5,
            CalibrationCell::HomeGoals(g) => home == g,
            CalibrationCell::AwayGoals(g) => away == g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub model: String,
    pub minute: f64,
    pub cell: CalibrationCell,
    pub observed: f64,
    pub expected: f64,
    /// `expected − observed`.
    pub difference: f64,
    /// Standard error of `difference` if the model were correct, including
    /// the Monte Carlo error of the forecasts.
    pub standard_error: f64,
}

/// Calibration rows for one model at one minute.
pub fn calibration_rows(
    model: &str,
    minute: f64,
    forecasts: &[&ForecastPoint],
    observed: &[(u32, u32)],
) -> Vec<CalibrationRow> {
    let k = forecasts.len() as f64;
    CalibrationCell::all()
        .into_iter()
        .map(|cell| {
            let hits = observed.iter().filter(|&&(h, a)| cell.contains(h, a)).count() as f64;
            let mut expected = 0.0;
            let mut variance = 0.0;
            for f in forecasts {
                let p = f.distribution.probability(|h, a| cell.contains(h, a));
                expected += p;
                variance += p * (1.0 - p) * (1.0 + 1.0 / f.distribution.n_scenarios as f64);
            }
            let observed = hits / k;
            let expected = expected / k;
            CalibrationRow {
                model: model.to_string(),
                minute,
                cell,
                observed,
                expected,
                difference: expected - observed,
                standard_error: variance.sqrt() / k,
            }
        })
        .collect()
}

/// Training indices for forecasting `dataset.matches[target]`, or `None`
/// when the match is not evaluated: it belongs to the first season, or
/// one of its teams has played fewer than four earlier matches. Training
/// uses every match played on an earlier date.
pub fn rolling_windows(dataset: &Dataset, target: usize) -> Result<Option<Vec<usize>>> {
    let matches = &dataset.matches;
    if matches.windows(2).any(|w| w[1].date < w[0].date) {
        return Err(Error::InvalidArgument("dataset is not ordered by date".into()));
    }
    let t = matches
        .get(target)
        .ok_or_else(|| Error::InvalidArgument(format!("no match at index {target}")))?;
    let first_season = matches.first().map(|m| m.season.as_str());
    let training: Vec<usize> = (0..matches.len()).filter(|&i| matches[i].date < t.date).collect();
    let played = |team: &str| {
        training
            .iter()
            .filter(|&&i| {
                let f = &matches[i].fixture;
                f.home_team == team || f.away_team == team
            })
            .count()
    };
    if Some(t.season.as_str()) == first_season
        || played(&t.fixture.home_team) < 4
        || played(&t.fixture.away_team) < 4
    {
        return Ok(None);
    }
    Ok(Some(training))
}

/// A model to evaluate: refitted by name on each rolling window, or held
/// fixed.
#[derive(Debug, Clone)]
pub enum Candidate {
    Named(String),
    Fixed(FittedModel),
}

impl Candidate {
    pub fn name(&self) -> &str {
        match self {
            Candidate::Named(n) => n,
            Candidate::Fixed(m) => m.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationOptions {
    pub minutes: Vec<f64>,
    pub n_scenarios: usize,
    pub seed: u64,
    /// Refit named models only on every `refit_every`-th evaluation date;
    /// in between, the latest fit (which uses only earlier data) is reused.
    pub refit_every: usize,
    pub fit: FitOptions,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            minutes: DEFAULT_MINUTES.to_vec(),
            n_scenarios: DEFAULT_SCENARIOS,
            seed: 0,
            refit_every: 1,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMinuteScore {
    pub model: String,
    pub minute: f64,
    pub result: OutcomeLikelihood,
    pub exact_score: OutcomeLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<String>,
    pub minutes: Vec<f64>,
    /// Evaluated match ids, in date order.
    pub match_ids: Vec<String>,
    pub scores: Vec<ModelMinuteScore>,
    pub calibration: Vec<CalibrationRow>,
}

impl EvaluationReport {
    pub fn n_matches(&self) -> usize {
        self.match_ids.len()
    }

    pub fn score(&self, model: &str, minute: f64) -> Option<&ModelMinuteScore> {
        self.scores.iter().find(|s| s.model == model && s.minute == minute)
    }

    /// Mean paired difference in result log-likelihood (`model − baseline`)
    /// at `minute` and its standard error.
    pub fn paired_difference(&self, model: &str, baseline: &str, minute: f64) -> Option<(f64, f64)> {
        self.paired_difference_in(OutcomeMode::Result, model, baseline, minute)
    }

    pub fn paired_difference_in(
        &self,
        mode: OutcomeMode,
        model: &str,
        baseline: &str,
        minute: f64,
    ) -> Option<(f64, f64)> {
        let pick = |s: &'_ ModelMinuteScore| -> Vec<f64> {
            match mode {
                OutcomeMode::Result => s.result.log_probs.clone(),
                OutcomeMode::ExactScore => s.exact_score.log_probs.clone(),
            }
        };
        let a = &pick(self.score(model, minute)?);
        let b = &pick(self.score(baseline, minute)?);
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let k = d.len() as f64;
        if d.is_empty() {
            return Some((0.0, 0.0));
        }
        let mean = d.iter().sum::<f64>() / k;
        let var = if d.len() > 1 {
            d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Some((mean, (var / k).sqrt()))
    }
}

/// Seed for the forecasts of one (match, minute); shared by all models so
/// that their comparison uses common random numbers.
fn forecast_seed(seed: u64, match_index: usize, minute_index: usize) -> u64 {
    let mut z = seed
        ^ (match_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (minute_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fit_on(dataset: &Dataset, training: &[usize], name: &str, options: &FitOptions) -> Result<FittedModel> {
    let train: Vec<&MatchRecord> = training.iter().map(|&i| &dataset.matches[i]).collect();
    let mut teams: Vec<String> = train
        .iter()
        .flat_map(|m| [m.fixture.home_team.clone(), m.fixture.away_team.clone()])
        .collect();
    teams.sort();
    teams.dedup();
    let spec = make_named_model(name, &teams)?;
    let designs = train
        .iter()
        .map(|m| build_design(m, &spec))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_designs(&designs, &spec, options)?;
    FittedModel::new(spec, fit.params)
}

/// Rolling-window evaluation: for every evaluable match, forecast at each
/// minute with each candidate and score against the final result.
pub fn evaluate(
    dataset: &Dataset,
    candidates: &[Candidate],
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let mut targets: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..dataset.len() {
        if let Some(training) = rolling_windows(dataset, i)? {
            targets.push((i, training));
        }
    }
    let refit_dates: Vec<NaiveDate> = {
        let mut dates: Vec<NaiveDate> = targets.iter().map(|(i, _)| dataset.matches[*i].date).collect();
        dates.dedup();
        dates
            .into_iter()
            .enumerate()
            .filter(|(k, _)| k % options.refit_every.max(1) == 0)
            .map(|(_, d)| d)
            .collect()
    };

    // forecasts[model][minute][target]
    let mut forecasts: Vec<Vec<Vec<ForecastPoint>>> =
        vec![vec![Vec::with_capacity(targets.len()); options.minutes.len()]; candidates.len()];
    let mut cache: HashMap<usize, (NaiveDate, FittedModel)> = HashMap::new();
    for (t_idx, (i, training)) in targets.iter().enumerate() {
        let record = &dataset.matches[*i];
        for (c_idx, candidate) in candidates.iter().enumerate() {
            let model = match candidate {
                Candidate::Fixed(m) => m.clone(),
                Candidate::Named(name) => {
                    let due = match cache.get(&c_idx) {
                        None => true,
                        Some((fitted_for, _)) => {
                            *fitted_for != record.date && refit_dates.contains(&record.date)
                        }
                    };
                    if due {
                        log::info!("fitting {name} on {} matches before {}", training.len(), record.date);
                        let m = fit_on(dataset, training, name, &options.fit)?;
                        cache.insert(c_idx, (record.date, m));
                    }
                    cache[&c_idx].1.clone()
                }
            };
            let mm = model.for_fixture(&record.fixture)?;
            for (m_idx, &minute) in options.minutes.iter().enumerate() {
                let seed = forecast_seed(options.seed, t_idx, m_idx);
                let f = forecast_with(&mm, candidate.name(), record, minute, options.n_scenarios, seed)?;
                forecasts[c_idx][m_idx].push(f);
            }
        }
    }

    let observed: Vec<(u32, u32)> = targets.iter().map(|(i, _)| dataset.matches[*i].final_score()).collect();
    let mut scores = Vec::new();
    let mut calibration = Vec::new();
    for (c_idx, candidate) in candidates.iter().enumerate() {
        for (m_idx, &minute) in options.minutes.iter().enumerate() {
            let fs: Vec<&ForecastPoint> = forecasts[c_idx][m_idx].iter().collect();
            scores.push(ModelMinuteScore {
                model: candidate.name().to_string(),
                minute,
                result: outcome_likelihood(&fs, &observed, OutcomeMode::Result)?,
                exact_score: outcome_likelihood(&fs, &observed, OutcomeMode::ExactScore)?,
            });
            calibration.extend(calibration_rows(candidate.name(), minute, &fs, &observed));
        }
    }
    Ok(EvaluationReport {
        models: candidates.iter().map(|c| c.name().to_string()).collect(),
        minutes: options.minutes.clone(),
        match_ids: targets.iter().map(|(i, _)| dataset.matches[*i].match_id.clone()).collect(),
        scores,
        calibration,
    })
}

/// Observed proportions per calibration cell, for reports that list the
/// data row separately from the model rows.
pub fn observed_proportions(observed: &[(u32, u32)]) -> BTreeMap<CalibrationCell, f64> {
    let k = observed.len().max(1) as f64;
    CalibrationCell::all()
        .into_iter()
        .map(|c| {
            let hits = observed.iter().filter(|&&(h, a)| c.contains(h, a)).count();
            (c, hits as f64 / k)
        })
        .collect()
}
