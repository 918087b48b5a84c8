use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use coxmatch::data_io::load_model;
use coxmatch_service::{router, AppState};

#[derive(Parser)]
#[command(name = "coxmatch-service", version, about = "Live match sessions and in-play forecasts over HTTP")]
struct Args {
    /// Model artifact to serve, as `id=path` or `path` (id = file stem).
    /// Repeat for several models.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory for per-session journals; sessions found there are
    /// restored at startup.
    #[arg(long)]
    journal_dir: Option<PathBuf>,
}

fn parse_model(spec: &str) -> Result<(String, PathBuf), String> {
    let (id, path) = match spec.split_once('=') {
        Some((id, path)) => (id.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| format!("cannot derive a model id from {spec:?}"))?
                .to_string();
            (id, path)
        }
    };
    if id.is_empty() {
        return Err(format!("empty model id in {spec:?}"));
    }
    Ok((id, path))
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut models = HashMap::new();
    for spec in &args.models {
        let loaded = parse_model(spec).and_then(|(id, path)| {
            let artifact = load_model(&path).map_err(|e| e.to_string())?;
            let model = artifact.model().map_err(|e| e.to_string())?;
            Ok((id, model))
        });
        match loaded {
            Ok((id, model)) => {
                log::info!("serving model {id} ({})", model.name());
                if models.insert(id.clone(), model).is_some() {
                    eprintln!("error: model id {id} given twice");
                    return std::process::ExitCode::from(2);
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return std::process::ExitCode::from(2);
            }
        }
    }
    if let Some(dir) = &args.journal_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: {}: {e}", dir.display());
            return std::process::ExitCode::from(2);
        }
    }
    let state = Arc::new(AppState::new(models, args.journal_dir.clone()));
    match state.restore() {
        Ok(0) => {}
        Ok(n) => log::info!("restored {n} session(s)"),
        Err(e) => log::warn!("could not read journals: {e}"),
    }
    let listener = match tokio::net::TcpListener::bind(args.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: binding {}: {e}", args.addr);
            return std::process::ExitCode::from(2);
        }
    };
    log::info!("listening on {}", args.addr);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await {
        eprintln!("error: {e}");
        return std::process::ExitCode::from(1);
    }
    std::process::ExitCode::SUCCESS
}
