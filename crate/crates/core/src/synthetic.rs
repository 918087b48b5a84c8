//! Synthetic leagues generated from a known model, for testing fits,
//! simulations and forecast evaluation.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::live::MatchTime;
use crate::model::{make_named_model, EventType, Fixture, MatchRecord, MatchState, ParameterVector, RecordedEvent};
use crate::simulator::{scenario_rng, FittedModel};

/// Mean lineup value (million EUR), attack and defence multipliers of a
/// 33-team league, strongest lineups first.
pub const LEAGUE_TEAMS: [(f64, f64, f64); 33] = [
    (49.08, 0.1187, 0.0885),
    (43.27, 0.1199, 0.0806),
    (34.31, 0.1035, 0.0821),
    (33.15, 0.1161, 0.0959),
    (33.05, 0.0950, 0.0850),
    (32.17, 0.0955, 0.0769),
    (29.07, 0.1105, 0.0974),
    (28.06, 0.1028, 0.0819),
    (26.61, 0.0986, 0.0749),
    (26.42, 0.0828, 0.0860),
    (22.14, 0.0964, 0.0912),
    (18.91, 0.0967, 0.0805),
    (14.11, 0.0826, 0.0971),
    (13.45, 0.0867, 0.0872),
    (13.31, 0.0901, 0.0945),
    (11.60, 0.0965, 0.0923),
    (11.57, 0.0759, 0.0952),
    (11.53, 0.1023, 0.0919),
    (11.13, 0.1029, 0.1138),
    (9.98, 0.0862, 0.0991),
    (9.88, 0.1043, 0.0787),
    (9.57, 0.0864, 0.0917),
    (9.19, 0.0977, 0.1039),
    (8.16, 0.0934, 0.0730),
    (8.11, 0.0776, 0.0677),
    (8.07, 0.0563, 0.1064),
    (7.72, 0.0903, 0.0857),
    (7.49, 0.0644, 0.0864),
    (7.20, 0.0826, 0.0797),
    (7.09, 0.1085, 0.1300),
    (7.05, 0.0728, 0.1025),
    (6.53, 0.0843, 0.0960),
    (5.08, 0.0454, 0.0998),
];

/// Multipliers `exp(ξ)` of the shared goal regressors: home, value, half,
/// goal difference, red-card difference.
pub const GOAL_FACTORS: [(&str, f64); 5] = [
    ("home", 1.5140),
    ("value", 1.1454),
    ("half", 1.2062),
    ("goal_diff", 0.9082),
    ("red_diff", 1.4385),
];

/// Multipliers `exp(ξ)` of the stoppage regressors of `S0..S5`.
pub const STOPPAGE_MODELS: [&[(&str, f64)]; 6] = [
    &[("stoppage1_const", 2.6680), ("stoppage2_const", 4.8066)],
    &[("stoppage1_const", 2.6992), ("stoppage2_const", 4.8743), ("stoppage_goals", 0.9875)],
    &[
        ("stoppage1_const", 2.5629),
        ("stoppage2_const", 5.0153),
        ("stoppage1_goals", 1.0432),
        ("stoppage2_goals", 0.9621),
    ],
    &[("stoppage1_const", 2.6574), ("stoppage2_const", 4.7367), ("stoppage_reds", 1.1104)],
    &[
        ("stoppage1_const", 2.6233),
        ("stoppage2_const", 4.7688),
        ("stoppage1_reds", 1.4694),
        ("stoppage2_reds", 1.0597),
    ],
    &[
        ("stoppage1_const", 2.6234),
        ("stoppage2_const", 3.9640),
        ("stoppage1_reds", 1.4693),
        ("stoppage2_reds", 1.0506),
        ("stoppage2_close", 1.2814),
    ],
];

/// Raw coefficients of the red-card model.
pub const RED_CARD_COEFFICIENTS: [(&str, f64); 4] = [
    ("red_home_const", -12.6054),
    ("red_home_log_time", 1.4275),
    ("red_away_const", -13.0132),
    ("red_away_log_time", 1.6272),
];

pub fn team_name(i: usize) -> String {
    format!("T{:02}", i + 1)
}

pub fn team_names(n: usize) -> Vec<String> {
    (0..n).map(team_name).collect()
}

/// Parameters of model `name` (any G/S/R combination) at league scale for
/// the first `n_teams` teams of `LEAGUE_TEAMS`. Team multipliers are
/// rescaled so that attack and defence have equal geometric means, which
/// leaves every product `α_i β_j` unchanged.
pub fn league_model(name: &str, n_teams: usize) -> Result<FittedModel> {
    if n_teams < 2 || n_teams > LEAGUE_TEAMS.len() {
        return Err(Error::InvalidArgument(format!(
            "league has between 2 and {} teams, asked for {n_teams}",
            LEAGUE_TEAMS.len()
        )));
    }
    let teams = team_names(n_teams);
    let spec = make_named_model(name, &teams)?;
    let mut params = ParameterVector::zeros(&spec);
    let k = n_teams as f64;
    let mean_attack = LEAGUE_TEAMS[..n_teams].iter().map(|t| t.1.ln()).sum::<f64>() / k;
    let mean_defence = LEAGUE_TEAMS[..n_teams].iter().map(|t| t.2.ln()).sum::<f64>() / k;
    let shift = 0.5 * (mean_attack - mean_defence);
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for (i, t) in teams.iter().enumerate() {
        pairs.push((format!("attack:{t}"), LEAGUE_TEAMS[i].1.ln() - shift));
        pairs.push((format!("defence:{t}"), LEAGUE_TEAMS[i].2.ln() + shift));
    }
    for (id, f) in GOAL_FACTORS {
        pairs.push((id.to_string(), f.ln()));
    }
    // richest stoppage variant whose coefficients are all present
    let ids = spec.parameter_ids();
    let variant = STOPPAGE_MODELS
        .iter()
        .rposition(|m| m.iter().all(|(id, _)| ids.iter().any(|x| x == id)));
    if let Some(v) = variant {
        for (id, f) in STOPPAGE_MODELS[v] {
            pairs.push((id.to_string(), f.ln()));
        }
    }
    for (id, v) in RED_CARD_COEFFICIENTS {
        pairs.push((id.to_string(), v));
    }
    for (id, v) in pairs {
        if params.get(&id).is_some() {
            params.set(&id, v)?;
        }
    }
    FittedModel::new(spec, params)
}

#[derive(Debug, Clone)]
pub struct LeagueConfig {
    pub n_teams: usize,
    pub teams_per_season: usize,
    pub seasons: usize,
    /// Keep only the first `max_matches` matches (in date order).
    pub max_matches: Option<usize>,
    /// Log-scale standard deviation of match-to-match lineup values around
    /// each team's mean.
    pub value_noise: f64,
    pub first_season: i32,
    pub seed: u64,
}

impl Default for LeagueConfig {
    fn default() -> Self {
        LeagueConfig {
            n_teams: 33,
            teams_per_season: 20,
            seasons: 8,
            max_matches: None,
            value_noise: 0.15,
            first_season: 2015,
            seed: 1,
        }
    }
}

/// Double round robin (circle method): rounds of `(home, away)` index
/// pairs; the second half of the season mirrors the first.
fn double_round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut ids: Vec<usize> = (0..n).collect();
    let mut first = Vec::new();
    for r in 0..n - 1 {
        let mut round = Vec::new();
        for i in 0..n / 2 {
            let (a, b) = (ids[i], ids[n - 1 - i]);
            round.push(if (r + i) % 2 == 0 { (a, b) } else { (b, a) });
        }
        first.push(round);
        let last = ids.pop().expect("n >= 2");
        ids.insert(1, last);
    }
    let second: Vec<_> = first
        .iter()
        .map(|round| round.iter().map(|&(h, a)| (a, h)).collect())
        .collect();
    first.into_iter().chain(second).collect()
}

/// Simulates a league season by season. Lineup values are drawn around
/// each team's mean whenever the model uses them.
pub fn generate_league(model: &FittedModel, config: &LeagueConfig) -> Result<Dataset> {
    let n = config.n_teams;
    let per_season = config.teams_per_season;
    if per_season < 2 || per_season > n || per_season % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "need an even number of teams per season between 2 and {n}, got {per_season}"
        )));
    }
    let teams = team_names(n);
    for t in &teams {
        if !model.spec.knows_team(t) {
            return Err(Error::UnknownTeam(t.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.value_noise.max(0.0))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut matches = Vec::new();
    let mut index = 0u64;
    for s in 0..config.seasons {
        let year = config.first_season + s as i32;
        // consecutive blocks of the team list, so appearances stay balanced
        let mut pool: Vec<usize> = (0..per_season).map(|k| (s * per_season + k) % n).collect();
        pool.sort();
        let start = NaiveDate::from_ymd_opt(year, 4, 1).expect("valid date");
        for (r, round) in double_round_robin(per_season).iter().enumerate() {
            let date = start + Duration::days(7 * r as i64);
            for &(h, a) in round {
                let (h, a) = (pool[h], pool[a]);
                let home_value = LEAGUE_TEAMS[h % LEAGUE_TEAMS.len()].0 * noise.sample(&mut rng).exp();
                let away_value = LEAGUE_TEAMS[a % LEAGUE_TEAMS.len()].0 * noise.sample(&mut rng).exp();
                let fixture = Fixture::new(teams[h].clone(), teams[a].clone())
                    .with_values(round2(home_value), round2(away_value));
                let mm = model.for_fixture(&fixture)?;
                let mut match_rng = scenario_rng(config.seed ^ 0x5EED, index);
                let sim = mm.simulate_match(&MatchState::kickoff(), &mut match_rng)?;
                let recorded: Vec<RecordedEvent> = sim
                    .events
                    .iter()
                    .map(|e| {
                        let at = MatchTime::of_clock(e.time, Some(sim.u1));
                        RecordedEvent::new(e.event_type, at.half, at.minute, at.stoppage_offset)
                    })
                    .collect();
                matches.push(MatchRecord::new(
                    format!("{year}-{:04}", index),
                    year.to_string(),
                    date,
                    fixture,
                    sim.u1,
                    sim.u2,
                    &recorded,
                )?);
                index += 1;
            }
        }
    }
    let mut dataset = Dataset::new(matches)?;
    if let Some(max) = config.max_matches {
        dataset.matches.truncate(max);
    }
    Ok(dataset)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Counts of each event type across a dataset, in `EventType::ALL` order.
pub fn event_totals(dataset: &Dataset) -> [usize; 4] {
    let mut out = [0; 4];
    for m in &dataset.matches {
        for e in &m.events {
            out[EventType::index(e.event_type)] += 1;
        }
    }
    out
}
