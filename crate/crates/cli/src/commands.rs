use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use serde::Serialize;

use coxmatch::data_io::{load_dataset, load_model, save_model, summarize, Dataset, ModelArtifact};
use coxmatch::estimator::{compare_sequence, fit, Comparison, FitOptions, FitSummary};
use coxmatch::forecaster::{
    evaluate, observed_proportions, CalibrationCell, Candidate, EvaluationOptions, EvaluationReport,
    ForecastPoint, OutcomeMode,
};
use coxmatch::live::{LogEntry, MatchLog, MatchTime};
use coxmatch::model::{make_named_model, Fixture, MatchState, ModelRegistry};
use coxmatch::simulator::{scenario_rng, FittedModel, MatchResult, OutcomeDistribution};
use coxmatch::synthetic::{event_totals, generate_league, league_model, LeagueConfig};

use crate::{Command, DataArgs, FitArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummaryTable {
    Overview,
    Minutes,
    Stoppage,
    Goals,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { data, model, out, fit } => cmd_fit(&data, &model, &out, &fit),
        Command::Compare { fits, n_matches } => cmd_compare(&fits, n_matches),
        Command::Simulate { model, home, away, values, n, seed, from_state, scenario_log } => {
            let mut fixture = Fixture::new(home, away);
            if let Some(v) = values {
                let [h, a] = v[..] else {
                    bail!("--values takes two numbers, home,away");
                };
                fixture = fixture.with_values(h, a);
            }
            cmd_simulate(&model, fixture, n, seed, from_state.as_deref(), scenario_log.as_deref())
        }
        Command::Forecast { model, match_state, minutes, n, seed, csv } => {
            cmd_forecast(&model, &match_state, &minutes, n, seed, csv)
        }
        Command::Evaluate { models, data, minutes, n, seed, baseline, refit_every, out_dir, fit } => {
            let options = EvaluationOptions {
                minutes,
                n_scenarios: n,
                seed,
                refit_every,
                fit: fit_options(&fit),
            };
            cmd_evaluate(&models, &data, &options, baseline.as_deref(), &out_dir)
        }
        Command::Replay { model, data, match_id, step, n, seed, top } => {
            cmd_replay(&model, &data, &match_id, step, n, seed, top)
        }
        Command::Summary { data, table } => cmd_summary(&data, table),
        Command::Generate {
            model,
            teams,
            teams_per_season,
            seasons,
            max_matches,
            value_noise,
            seed,
            matches_out,
            events_out,
        } => {
            let config = LeagueConfig {
                n_teams: teams,
                teams_per_season,
                seasons,
                max_matches,
                value_noise,
                seed,
                ..LeagueConfig::default()
            };
            cmd_generate(&model, &config, &matches_out, &events_out)
        }
        Command::Models => {
            let mut out = std::io::stdout().lock();
            for name in ModelRegistry::builtin().names() {
                writeln!(out, "{name}")?;
            }
            writeln!(out, "(combine one goal, one stoppage and optionally R, e.g. G4S5R)")?;
            Ok(())
        }
    }
}

fn fit_options(args: &FitArgs) -> FitOptions {
    FitOptions {
        tolerance: args.tol,
        max_iterations: args.max_iter,
        ..FitOptions::default()
    }
}

fn read_data(data: &DataArgs) -> Result<Dataset> {
    Ok(load_dataset(&data.matches, &data.events)?)
}

fn read_model(path: &Path) -> Result<FittedModel> {
    let artifact = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(artifact.model()?)
}

fn cmd_fit(data: &DataArgs, model: &str, out: &Path, args: &FitArgs) -> Result<()> {
    let dataset = read_data(data)?;
    let spec = make_named_model(model, &dataset.teams())?;
    let start = Instant::now();
    let result = fit(&dataset.matches, &spec, &fit_options(args))?;
    let elapsed = start.elapsed().as_secs_f64();
    let artifact = ModelArtifact::from_fit(&spec, &result, Some(dataset.content_hash()));
    save_model(out, &artifact)?;
    let meta = &artifact.metadata;
    let mut o = std::io::stdout().lock();
    writeln!(o, "model: {}", result.model)?;
    writeln!(o, "matches: {}", dataset.len())?;
    writeln!(o, "loglik: {:.4}", result.loglik)?;
    writeln!(o, "n_params: {}", result.n_params)?;
    writeln!(o, "n_effective: {}", result.n_effective)?;
    writeln!(o, "aic: {:.4}", meta.aic.unwrap_or(f64::NAN))?;
    writeln!(o, "bic: {:.4}", meta.bic.unwrap_or(f64::NAN))?;
    writeln!(o, "iterations: {}", result.iterations)?;
    writeln!(o, "gradient_norm: {:e}", result.gradient_norm)?;
    writeln!(o, "wall_time_s: {elapsed:.3}")?;
    writeln!(o, "artifact: {}", out.display())?;
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], n_matches: Option<usize>) -> Result<()> {
    let mut summaries = Vec::new();
    let mut sizes = Vec::new();
    for p in paths {
        let a = load_model(p).with_context(|| format!("loading {}", p.display()))?;
        let loglik = a
            .metadata
            .loglik
            .ok_or_else(|| anyhow!("{} carries no log-likelihood (not a fitted model)", p.display()))?;
        sizes.push(a.metadata.n_matches);
        summaries.push(FitSummary {
            model: a.spec.name.clone(),
            loglik,
            n_params: a.metadata.n_params,
            n_effective: a.metadata.n_effective,
            parameter_ids: a.params.ids.clone(),
        });
    }
    let n = match n_matches {
        Some(n) => n,
        None => {
            if sizes.windows(2).any(|w| w[0] != w[1]) {
                bail!("artifacts were fitted on different numbers of matches; pass --n-matches");
            }
            sizes[0]
        }
    };
    let comparison = compare_sequence(&summaries, n);
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record([
        "model", "loglik", "n_params", "aic", "bic", "compared_with", "lrt_statistic", "df", "p_value",
        "note",
    ])?;
    for (i, m) in comparison.models.iter().enumerate() {
        let mut row = vec![
            m.model.clone(),
            format!("{:.4}", m.loglik),
            m.n_params.to_string(),
            format!("{:.4}", m.aic),
            format!("{:.4}", m.bic),
        ];
        match i.checked_sub(1).map(|j| &comparison.pairwise[j]) {
            None => row.extend(["", "", "", "", ""].map(String::from)),
            Some(Comparison::Test(t)) => row.extend([
                t.small.clone(),
                format!("{:.4}", t.statistic),
                t.degrees_of_freedom.to_string(),
                format!("{:e}", t.p_value),
                String::new(),
            ]),
            Some(Comparison::NotNested { small, large }) => {
                eprintln!("warning: {small} and {large} are not nested; likelihood-ratio test refused");
                row.extend([small.clone(), String::new(), String::new(), String::new(), "not nested".into()]);
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_entries(path: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing log entries in {}", path.display()))
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    model: &'a str,
    fixture: &'a Fixture,
    initial_state: &'a MatchState,
    distribution: &'a OutcomeDistribution,
}

fn cmd_simulate(
    model_path: &Path,
    fixture: Fixture,
    n: usize,
    seed: u64,
    from_state: Option<&Path>,
    scenario_log: Option<&Path>,
) -> Result<()> {
    let model = read_model(model_path)?;
    let mut log = MatchLog::new(fixture)?;
    if let Some(p) = from_state {
        for e in read_entries(p)? {
            log.push(e).with_context(|| format!("replaying {}", p.display()))?;
        }
    }
    let state = log.state()?;
    let mm = model.for_fixture(&log.fixture)?;
    let distribution = mm.simulate_many(&state, n, seed)?;
    if let Some(path) = scenario_log {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["scenario", "event_type", "half", "minute", "stoppage_offset", "clock"])?;
        for i in 0..n {
            let s = mm.simulate_match(&state, &mut scenario_rng(seed, i as u64))?;
            for e in &s.events {
                let at = MatchTime::of_clock(e.time, Some(s.u1));
                w.write_record([
                    i.to_string(),
                    e.event_type.to_string(),
                    at.half.to_string(),
                    at.minute.to_string(),
                    at.stoppage_offset.to_string(),
                    format!("{:.6}", e.time),
                ])?;
            }
        }
        w.flush()?;
    }
    let out = SimulationOutput {
        model: model.name(),
        fixture: &log.fixture,
        initial_state: &state,
        distribution: &distribution,
    };
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

fn forecast_rows<W: Write>(w: &mut csv::Writer<W>, points: &[ForecastPoint], top: usize) -> Result<()> {
    let mut header: Vec<String> = [
        "minute", "clock", "home_goals", "away_goals", "home_reds", "away_reds", "p_home_win", "p_draw",
        "p_away_win", "expected_home_goals", "expected_away_goals",
    ]
    .map(String::from)
    .to_vec();
    for k in 1..=top {
        header.push(format!("score_{k}"));
        header.push(format!("prob_{k}"));
    }
    w.write_record(&header)?;
    for p in points {
        let d = &p.distribution;
        let s = &p.state;
        let mut row = vec![
            format!("{}", p.minute),
            format!("{:.4}", p.clock),
            s.home_goals.to_string(),
            s.away_goals.to_string(),
            s.home_reds.to_string(),
            s.away_reds.to_string(),
            format!("{:.6}", d.result_probs.home_win),
            format!("{:.6}", d.result_probs.draw),
            format!("{:.6}", d.result_probs.away_win),
            format!("{:.6}", d.expected_goals.0),
            format!("{:.6}", d.expected_goals.1),
        ];
        let scores = d.top_scores(top);
        for k in 0..top {
            match scores.get(k) {
                Some(sp) => {
                    row.push(format!("{}-{}", sp.home, sp.away));
                    row.push(format!("{:.6}", sp.prob));
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_forecast(model_path: &Path, state_path: &Path, minutes: &[f64], n: usize, seed: u64, csv_out: bool) -> Result<()> {
    let model = read_model(model_path)?;
    let text = std::fs::read_to_string(state_path).with_context(|| format!("reading {}", state_path.display()))?;
    let log: MatchLog = serde_json::from_str(&text).with_context(|| format!("parsing {}", state_path.display()))?;
    // validates the whole log once
    log.state()?;
    let mm = model.for_fixture(&log.fixture)?;
    let match_id = state_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let events = log.events()?;
    let mut points = Vec::new();
    for &minute in minutes {
        let state = log.state_at_minute(minute)?;
        let distribution = mm.simulate_many(&state, n, seed)?;
        points.push(ForecastPoint {
            match_id: match_id.clone(),
            minute,
            model: model.name().to_string(),
            clock: state.clock,
            events_used: events.iter().filter(|e| e.2 <= state.clock).count(),
            state,
            distribution,
        });
    }
    if csv_out {
        forecast_rows(&mut csv::Writer::from_writer(std::io::stdout().lock()), &points, 5)
    } else {
        writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&points)?)?;
        Ok(())
    }
}

fn candidate(arg: &str) -> Result<Candidate> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(Candidate::Fixed(read_model(path)?));
    }
    ModelRegistry::builtin().parse(arg)?;
    Ok(Candidate::Named(arg.to_string()))
}

fn cmd_evaluate(
    models: &[String],
    data: &DataArgs,
    options: &EvaluationOptions,
    baseline: Option<&str>,
    out_dir: &Path,
) -> Result<()> {
    let dataset = read_data(data)?;
    let candidates = models.iter().map(|m| candidate(m)).collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = candidates.iter().map(|c| c.name()).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!("candidate model names must be distinct");
    }
    let baseline = baseline.unwrap_or(candidates[0].name()).to_string();
    if !candidates.iter().any(|c| c.name() == baseline) {
        bail!("baseline {baseline:?} is not among the models");
    }
    let report = evaluate(&dataset, &candidates, options)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_scores(&report, &out_dir.join("loglik.csv"))?;
    write_differences(&report, &baseline, &out_dir.join("baseline_diff.csv"))?;
    write_calibration(&report, &dataset, out_dir)?;
    let mut o = std::io::stdout().lock();
    writeln!(o, "matches evaluated: {}", report.n_matches())?;
    writeln!(o, "models: {}", report.models.join(", "))?;
    writeln!(o, "baseline: {baseline}")?;
    writeln!(o, "output: {}", out_dir.display())?;
    Ok(())
}

fn write_scores(report: &EvaluationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model", "minute", "matches", "result_loglik", "result_mean", "exact_loglik", "exact_mean",
        "result_floored", "exact_floored",
    ])?;
    for s in &report.scores {
        w.write_record([
            s.model.clone(),
            format!("{}", s.minute),
            report.n_matches().to_string(),
            format!("{:.6}", s.result.total),
            format!("{:.6}", s.result.per_match),
            format!("{:.6}", s.exact_score.total),
            format!("{:.6}", s.exact_score.per_match),
            s.result.floored.to_string(),
            s.exact_score.floored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_differences(report: &EvaluationReport, baseline: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "baseline", "minute", "result_diff", "result_se", "exact_diff", "exact_se"])?;
    for model in &report.models {
        for &minute in &report.minutes {
            let (rd, rse) = report
                .paired_difference_in(OutcomeMode::Result, model, baseline, minute)
                .unwrap_or((f64::NAN, f64::NAN));
            let (ed, ese) = report
                .paired_difference_in(OutcomeMode::ExactScore, model, baseline, minute)
                .unwrap_or((f64::NAN, f64::NAN));
            w.write_record([
                model.clone(),
                baseline.to_string(),
                format!("{minute}"),
                format!("{rd:.6}"),
                format!("{rse:.6}"),
                format!("{ed:.6}"),
                format!("{ese:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One wide table per calibration family: an `observed` row per minute,
/// then one row of differences (model − observed) per model.
fn write_calibration(report: &EvaluationReport, dataset: &Dataset, out_dir: &Path) -> Result<()> {
    let observed: Vec<(u32, u32)> = report
        .match_ids
        .iter()
        .map(|id| dataset.get(id).map(|m| m.final_score()).ok_or_else(|| anyhow!("missing match {id}")))
        .collect::<Result<_>>()?;
    let proportions = observed_proportions(&observed);
    let cells = CalibrationCell::all();
    for table in ["results", "home_goals", "away_goals"] {
        let cols: Vec<CalibrationCell> = cells.iter().copied().filter(|c| c.table() == table).collect();
        let mut w = csv::Writer::from_path(out_dir.join(format!("calibration_{table}.csv")))?;
        let mut header = vec!["minute".to_string(), "row".to_string()];
        header.extend(cols.iter().map(|c| c.label()));
        w.write_record(&header)?;
        for &minute in &report.minutes {
            let mut row = vec![format!("{minute}"), "observed".into()];
            row.extend(cols.iter().map(|c| format!("{:.4}", proportions[c])));
            w.write_record(&row)?;
            for model in &report.models {
                let mut row = vec![format!("{minute}"), model.clone()];
                for c in &cols {
                    let r = report
                        .calibration
                        .iter()
                        .find(|r| &r.model == model && r.minute == minute && r.cell == *c);
                    row.push(r.map(|r| format!("{:.4}", r.difference)).unwrap_or_default());
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(out_dir.join("calibration.csv"))?;
    w.write_record(["table", "cell", "minute", "model", "observed", "expected", "difference", "standard_error"])?;
    for r in &report.calibration {
        w.write_record([
            r.cell.table().to_string(),
            r.cell.label(),
            format!("{}", r.minute),
            r.model.clone(),
            format!("{:.6}", r.observed),
            format!("{:.6}", r.expected),
            format!("{:.6}", r.difference),
            format!("{:.6}", r.standard_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_replay(model_path: &Path, data: &DataArgs, match_id: &str, step: f64, n: usize, seed: u64, top: usize) -> Result<()> {
    let model = read_model(model_path)?;
    let dataset = read_data(data)?;
    let record = dataset.get(match_id).ok_or_else(|| anyhow!("no match {match_id:?} in the dataset"))?;
    let points = coxmatch::forecaster::minute_by_minute(&model, record, step, n, seed)?;
    forecast_rows(&mut csv::Writer::from_writer(std::io::stdout().lock()), &points, top)
}

fn cmd_summary(data: &DataArgs, table: SummaryTable) -> Result<()> {
    let dataset = read_data(data)?;
    let s = summarize(&dataset);
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    match table {
        SummaryTable::Overview => {
            w.write_record(["statistic", "value"])?;
            let k = s.n_matches.max(1) as f64;
            let goals = (s.home_goals + s.away_goals) as f64;
            let rows: Vec<(&str, String)> = vec![
                ("matches", s.n_matches.to_string()),
                ("teams", dataset.teams().len().to_string()),
                ("seasons", dataset.seasons().len().to_string()),
                ("home_goals", s.home_goals.to_string()),
                ("away_goals", s.away_goals.to_string()),
                ("home_reds", s.home_reds.to_string()),
                ("away_reds", s.away_reds.to_string()),
                ("home_wins", s.home_wins.to_string()),
                ("draws", s.draws.to_string()),
                ("away_wins", s.away_wins.to_string()),
                ("goals_per_match", format!("{:.4}", goals / k)),
                ("first_half_stoppage_goal_share", format!("{:.4}", s.stoppage_goals[0] as f64 / goals.max(1.0))),
                ("second_half_stoppage_goal_share", format!("{:.4}", s.stoppage_goals[1] as f64 / goals.max(1.0))),
            ];
            for (k, v) in rows {
                w.write_record([k.to_string(), v])?;
            }
        }
        SummaryTable::Minutes => {
            for r in &s.by_minute {
                w.serialize(r)?;
            }
        }
        SummaryTable::Stoppage => {
            for r in &s.stoppage_histogram {
                w.serialize(r)?;
            }
        }
        SummaryTable::Goals => {
            for r in &s.goals_per_match {
                w.serialize(r)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_generate(model: &str, config: &LeagueConfig, matches_out: &Path, events_out: &Path) -> Result<()> {
    let truth = league_model(model, config.n_teams)?;
    let dataset = generate_league(&truth, config)?;
    dataset.save(matches_out, events_out)?;
    let totals = event_totals(&dataset);
    let mut o = std::io::stdout().lock();
    writeln!(o, "model: {}", truth.name())?;
    writeln!(o, "matches: {}", dataset.len())?;
    writeln!(o, "teams: {}", dataset.teams().len())?;
    writeln!(o, "home_goals: {}", totals[0])?;
    writeln!(o, "away_goals: {}", totals[1])?;
    writeln!(o, "home_reds: {}", totals[2])?;
    writeln!(o, "away_reds: {}", totals[3])?;
    writeln!(
        o,
        "home_win_share: {:.4}",
        dataset
            .matches
            .iter()
            .filter(|m| {
                let (h, a) = m.final_score();
                MatchResult::of(h, a) == MatchResult::HomeWin
            })
            .count() as f64
            / dataset.len().max(1) as f64
    )?;
    Ok(())
}
