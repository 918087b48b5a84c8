//! Match/event CSV files, model artifacts and dataset summaries.
//!
//! Matches file header:
//! `match_id,season,date,home_team,away_team,home_value_meur,away_value_meur,stoppage1_min,stoppage2_min`
//!
//! Events file header: `match_id,event_type,half,minute,stoppage_offset`
//!
//! Lineup values may be left empty; models with the value regressor then
//! refuse the match.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, LineError, Result};
use crate::estimator::{aic, bic, FitResult};
use crate::model::{EventType, Fixture, MatchRecord, ModelSpec, ParameterVector, RecordedEvent};
use crate::simulator::FittedModel;

pub const MATCHES_HEADER: [&str; 9] = [
    "match_id",
    "season",
    "date",
    "home_team",
    "away_team",
    "home_value_meur",
    "away_value_meur",
    "stoppage1_min",
    "stoppage2_min",
];

pub const EVENTS_HEADER: [&str; 5] = ["match_id", "event_type", "half", "minute", "stoppage_offset"];

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Ordered by date, then match id.
    pub matches: Vec<MatchRecord>,
}

impl Dataset {
    pub fn new(mut matches: Vec<MatchRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for m in &matches {
            if !seen.insert(m.match_id.as_str()) {
                return Err(Error::InvalidMatch {
                    match_id: m.match_id.clone(),
                    reason: "duplicate match id".into(),
                });
            }
        }
        matches.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.match_id.cmp(&b.match_id)));
        Ok(Dataset { matches })
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Sorted team names.
    pub fn teams(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .matches
            .iter()
            .flat_map(|m| [m.fixture.home_team.as_str(), m.fixture.away_team.as_str()])
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Seasons in order of first appearance by date.
    pub fn seasons(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.matches {
            if !out.contains(&m.season) {
                out.push(m.season.clone());
            }
        }
        out
    }

    pub fn get(&self, match_id: &str) -> Option<&MatchRecord> {
        self.matches.iter().find(|m| m.match_id == match_id)
    }

    /// Distinct match dates in order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let set: BTreeSet<NaiveDate> = self.matches.iter().map(|m| m.date).collect();
        set.into_iter().collect()
    }

    pub fn n_events(&self) -> usize {
        self.matches.iter().map(|m| m.events.len()).sum()
    }

    /// SHA-256 of the dataset in its CSV form, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut matches = Vec::new();
        let mut events = Vec::new();
        self.write_csv(&mut matches, &mut events)
            .expect("writing to memory cannot fail");
        let mut h = Sha256::new();
        h.update(&matches);
        h.update(b"\n--\n");
        h.update(&events);
        hex::encode(h.finalize())
    }

    pub fn write_csv(&self, matches: impl Write, events: impl Write) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        let mut mw = csv::Writer::from_writer(matches);
        mw.write_record(MATCHES_HEADER).map_err(csv_err)?;
        let mut ew = csv::Writer::from_writer(events);
        ew.write_record(EVENTS_HEADER).map_err(csv_err)?;
        let value = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.matches {
            mw.write_record([
                m.match_id.clone(),
                m.season.clone(),
                m.date.format("%Y-%m-%d").to_string(),
                m.fixture.home_team.clone(),
                m.fixture.away_team.clone(),
                value(m.fixture.home_value),
                value(m.fixture.away_value),
                m.stoppage1.to_string(),
                m.stoppage2.to_string(),
            ])
            .map_err(csv_err)?;
            for e in &m.events {
                ew.write_record([
                    m.match_id.clone(),
                    e.event_type.to_string(),
                    e.half.to_string(),
                    e.regular_minute.to_string(),
                    e.stoppage_offset.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        mw.flush().map_err(|e| Error::Parse(e.to_string()))?;
        ew.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, matches_path: &Path, events_path: &Path) -> Result<()> {
        let mf = std::fs::File::create(matches_path).map_err(|e| Error::io(matches_path, e))?;
        let ef = std::fs::File::create(events_path).map_err(|e| Error::io(events_path, e))?;
        self.write_csv(std::io::BufWriter::new(mf), std::io::BufWriter::new(ef))
    }
}

struct MatchRow {
    line: u64,
    match_id: String,
    season: String,
    date: NaiveDate,
    fixture: Fixture,
    stoppage: [u32; 2],
}

fn check_header(
    file: &str,
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
) -> std::result::Result<(), LineError> {
    let header = reader.headers().map_err(|e| LineError {
        file: file.into(),
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(LineError {
            file: file.into(),
            line: 1,
            message: format!("header must be {:?}, found {:?}", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(value: &str, name: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| format!("{name} {value:?}: {e}"))
}

fn parse_value(value: &str, name: &str) -> std::result::Result<Option<f64>, String> {
    if value.trim().is_empty() {
        return Ok(None);
    }
    let v: f64 = parse_field(value, name)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("{name} must be positive, got {v}"));
    }
    Ok(Some(v))
}

fn parse_match_row(rec: &csv::StringRecord) -> std::result::Result<MatchRow, String> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let match_id = field(0).trim().to_string();
    if match_id.is_empty() {
        return Err("empty match_id".into());
    }
    let date = NaiveDate::parse_from_str(field(2).trim(), "%Y-%m-%d")
        .map_err(|e| format!("date {:?}: {e}", field(2)))?;
    let home = field(3).trim();
    let away = field(4).trim();
    if home.is_empty() || away.is_empty() {
        return Err("empty team name".into());
    }
    if home == away {
        return Err(format!("home and away team are both {home:?}"));
    }
    let mut fixture = Fixture::new(home, away);
    fixture.home_value = parse_value(field(5), "home_value_meur")?;
    fixture.away_value = parse_value(field(6), "away_value_meur")?;
    Ok(MatchRow {
        line: 0,
        match_id,
        season: field(1).trim().to_string(),
        date,
        fixture,
        stoppage: [
            parse_field(field(7), "stoppage1_min")?,
            parse_field(field(8), "stoppage2_min")?,
        ],
    })
}

fn parse_event_row(rec: &csv::StringRecord) -> std::result::Result<(String, RecordedEvent), String> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let event_type: EventType = field(1).trim().parse().map_err(|e: Error| e.to_string())?;
    let half: u8 = parse_field(field(2), "half")?;
    if half != 1 && half != 2 {
        return Err(format!("half must be 1 or 2, got {half}"));
    }
    let minute: u32 = parse_field(field(3), "minute")?;
    if !(1..=45).contains(&minute) {
        return Err(format!(
            "minute must be 1..45 within its half, got {minute} (second-half minutes restart at 1)"
        ));
    }
    let offset: u32 = parse_field(field(4), "stoppage_offset")?;
    if offset > 0 && minute != 45 {
        return Err(format!("stoppage_offset {offset} requires minute 45"));
    }
    Ok((field(0).trim().to_string(), RecordedEvent::new(event_type, half, minute, offset)))
}

/// Reads and validates a dataset. All problems found are reported together.
pub fn read_dataset(
    matches: impl Read,
    matches_name: &str,
    events: impl Read,
    events_name: &str,
) -> Result<Dataset> {
    let mut errors = Vec::new();
    let err = |file: &str, line: u64, message: String| LineError {
        file: file.to_string(),
        line,
        message,
    };

    let mut rows: Vec<MatchRow> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut mr = csv::ReaderBuilder::new().has_headers(true).from_reader(matches);
    match check_header(matches_name, &mut mr, &MATCHES_HEADER) {
        Err(e) => errors.push(e),
        Ok(()) => {
            for rec in mr.records() {
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(0);
                        errors.push(err(matches_name, line, e.to_string()));
                        continue;
                    }
                };
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                match parse_match_row(&rec) {
                    Ok(mut row) => {
                        row.line = line;
                        if index.contains_key(&row.match_id) {
                            errors.push(err(
                                matches_name,
                                line,
                                format!("duplicate match_id {:?}", row.match_id),
                            ));
                        } else {
                            index.insert(row.match_id.clone(), rows.len());
                            rows.push(row);
                        }
                    }
                    Err(m) => errors.push(err(matches_name, line, m)),
                }
            }
        }
    }

    let mut by_match: Vec<Vec<RecordedEvent>> = vec![Vec::new(); rows.len()];
    let mut er = csv::ReaderBuilder::new().has_headers(true).from_reader(events);
    match check_header(events_name, &mut er, &EVENTS_HEADER) {
        Err(e) => errors.push(e),
        Ok(()) => {
            for rec in er.records() {
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(0);
                        errors.push(err(events_name, line, e.to_string()));
                        continue;
                    }
                };
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                match parse_event_row(&rec) {
                    Ok((id, ev)) => match index.get(&id) {
                        None => errors.push(err(events_name, line, format!("unknown match_id {id:?}"))),
                        Some(&i) => {
                            let announced = rows[i].stoppage[usize::from(ev.half - 1)];
                            if ev.stoppage_offset > announced {
                                errors.push(err(
                                    events_name,
                                    line,
                                    format!(
                                        "stoppage_offset {} exceeds the {announced} minute(s) of stoppage recorded for half {} of {id}",
                                        ev.stoppage_offset, ev.half
                                    ),
                                ));
                            } else {
                                by_match[i].push(ev);
                            }
                        }
                    },
                    Err(m) => errors.push(err(events_name, line, m)),
                }
            }
        }
    }

    let mut records = Vec::with_capacity(rows.len());
    for (row, evs) in rows.into_iter().zip(by_match) {
        let line = row.line;
        if row.fixture.home_value.is_none() || row.fixture.away_value.is_none() {
            log::warn!("{matches_name}:{line}: missing lineup value for {}", row.match_id);
        }
        match MatchRecord::new(
            row.match_id,
            row.season,
            row.date,
            row.fixture,
            row.stoppage[0],
            row.stoppage[1],
            &evs,
        ) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(err(matches_name, line, e.to_string())),
        }
    }
    if !errors.is_empty() {
        errors.sort_by(|a, b| a.file.cmp(&b.file).then(a.line.cmp(&b.line)));
        return Err(Error::Validation(errors));
    }
    Dataset::new(records)
}

pub fn load_dataset(matches_path: &Path, events_path: &Path) -> Result<Dataset> {
    let mf = std::fs::File::open(matches_path).map_err(|e| Error::io(matches_path, e))?;
    let ef = std::fs::File::open(events_path).map_err(|e| Error::io(events_path, e))?;
    read_dataset(
        std::io::BufReader::new(mf),
        &matches_path.display().to_string(),
        std::io::BufReader::new(ef),
        &events_path.display().to_string(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    /// SHA-256 of the training data, if fitted.
    pub dataset_hash: Option<String>,
    pub n_matches: usize,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub n_effective: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub iterations: Option<usize>,
    pub gradient_norm: Option<f64>,
    pub created: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub spec: ModelSpec,
    pub params: ParameterVector,
    pub metadata: ArtifactMetadata,
}

impl ModelArtifact {
    pub fn from_fit(spec: &ModelSpec, fit: &FitResult, dataset_hash: Option<String>) -> Self {
        ModelArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            spec: spec.clone(),
            params: fit.params.clone(),
            metadata: ArtifactMetadata {
                dataset_hash,
                n_matches: fit.n_matches,
                loglik: Some(fit.loglik),
                n_params: fit.n_params,
                n_effective: fit.n_effective,
                aic: Some(aic(fit.loglik, fit.n_params)),
                bic: Some(bic(fit.loglik, fit.n_params, fit.n_matches)),
                iterations: Some(fit.iterations),
                gradient_norm: Some(fit.gradient_norm),
                created: chrono::Utc::now().to_rfc3339(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    /// An artifact for hand-set parameters (no fit behind it).
    pub fn from_parameters(spec: &ModelSpec, params: ParameterVector) -> Result<Self> {
        let model = FittedModel::new(spec.clone(), params)?;
        let (rows, rhs) = spec.constraint_system();
        let rank = crate::estimator::null_space_basis(&rows, &rhs, spec.n_params())?.rank;
        Ok(ModelArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            spec: model.spec,
            params: model.params,
            metadata: ArtifactMetadata {
                dataset_hash: None,
                n_matches: 0,
                loglik: None,
                n_params: spec.n_params(),
                n_effective: spec.n_params() - rank,
                aic: None,
                bic: None,
                iterations: None,
                gradient_norm: None,
                created: chrono::Utc::now().to_rfc3339(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    pub fn model(&self) -> Result<FittedModel> {
        FittedModel::new(self.spec.clone(), self.params.clone())
    }

    /// Compares the recorded training-data hash with `dataset`; logs a
    /// warning and returns false on mismatch.
    pub fn check_dataset(&self, dataset: &Dataset) -> bool {
        match &self.metadata.dataset_hash {
            Some(h) if *h != dataset.content_hash() => {
                log::warn!(
                    "model {} was fitted on different data (hash {h})",
                    self.spec.name
                );
                false
            }
            _ => true,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("artifact has no schema_version".into()))?;
        if found != u64::from(ARTIFACT_SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: found as u32,
                expected: ARTIFACT_SCHEMA_VERSION,
            });
        }
        let artifact: ModelArtifact =
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        artifact.spec.validate()?;
        if !artifact.params.matches_spec(&artifact.spec) {
            return Err(Error::Spec(
                "artifact parameter ids do not match its model specification".into(),
            ));
        }
        Ok(artifact)
    }
}

pub fn save_model(path: &Path, artifact: &ModelArtifact) -> Result<()> {
    let text = artifact.to_json()?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelArtifact::from_json(&text)
}

/// Counts of events by recorded minute. Minutes 46.. denote stoppage minute
/// `minute - 45` of the half.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteRow {
    pub half: u8,
    pub minute: u32,
    pub home_goals: u64,
    pub away_goals: u64,
    pub home_reds: u64,
    pub away_reds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppageRow {
    pub minutes: u32,
    pub first_half: u64,
    pub second_half: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalCountRow {
    pub goals: u32,
    pub home: u64,
    pub away: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_matches: usize,
    pub home_goals: u64,
    pub away_goals: u64,
    pub home_reds: u64,
    pub away_reds: u64,
    pub home_wins: u64,
    pub draws: u64,
    pub away_wins: u64,
    /// Goals scored in first-half and second-half stoppage time.
    pub stoppage_goals: [u64; 2],
    pub by_minute: Vec<MinuteRow>,
    pub stoppage_histogram: Vec<StoppageRow>,
    pub goals_per_match: Vec<GoalCountRow>,
}

pub fn summarize(dataset: &Dataset) -> DatasetSummary {
    let mut minutes: BTreeMap<(u8, u32), MinuteRow> = BTreeMap::new();
    let mut stoppage: BTreeMap<u32, StoppageRow> = BTreeMap::new();
    let mut goals: BTreeMap<u32, GoalCountRow> = BTreeMap::new();
    let mut s = DatasetSummary {
        n_matches: dataset.len(),
        home_goals: 0,
        away_goals: 0,
        home_reds: 0,
        away_reds: 0,
        home_wins: 0,
        draws: 0,
        away_wins: 0,
        stoppage_goals: [0, 0],
        by_minute: Vec::new(),
        stoppage_histogram: Vec::new(),
        goals_per_match: Vec::new(),
    };
    for half in 1..=2u8 {
        for minute in 1..=45 {
            minutes.insert(
                (half, minute),
                MinuteRow { half, minute, home_goals: 0, away_goals: 0, home_reds: 0, away_reds: 0 },
            );
        }
    }
    for m in &dataset.matches {
        for e in &m.events {
            let minute = e.regular_minute + e.stoppage_offset;
            let row = minutes.entry((e.half, minute)).or_insert(MinuteRow {
                half: e.half,
                minute,
                home_goals: 0,
                away_goals: 0,
                home_reds: 0,
                away_reds: 0,
            });
            match e.event_type {
                EventType::HomeGoal => {
                    row.home_goals += 1;
                    s.home_goals += 1;
                }
                EventType::AwayGoal => {
                    row.away_goals += 1;
                    s.away_goals += 1;
                }
                EventType::HomeRed => {
                    row.home_reds += 1;
                    s.home_reds += 1;
                }
                EventType::AwayRed => {
                    row.away_reds += 1;
                    s.away_reds += 1;
                }
            }
            if e.event_type.is_goal() && e.stoppage_offset > 0 {
                s.stoppage_goals[usize::from(e.half - 1)] += 1;
            }
        }
        for (half, u) in [(1, m.stoppage1), (2, m.stoppage2)] {
            let row = stoppage.entry(u).or_insert(StoppageRow { minutes: u, first_half: 0, second_half: 0 });
            if half == 1 {
                row.first_half += 1;
            } else {
                row.second_half += 1;
            }
        }
        let (h, a) = m.final_score();
        match h.cmp(&a) {
            std::cmp::Ordering::Greater => s.home_wins += 1,
            std::cmp::Ordering::Equal => s.draws += 1,
            std::cmp::Ordering::Less => s.away_wins += 1,
        }
        goals.entry(h).or_insert(GoalCountRow { goals: h, home: 0, away: 0 }).home += 1;
        goals.entry(a).or_insert(GoalCountRow { goals: a, home: 0, away: 0 }).away += 1;
    }
    s.by_minute = minutes.into_values().collect();
    s.stoppage_histogram = stoppage.into_values().collect();
    s.goals_per_match = goals.into_values().collect();
    s
}
