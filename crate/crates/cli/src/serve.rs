use std::net::SocketAddr;
use std::sync::Arc;

use mind_core::backend::ReqwestTransport;
use mind_core::{Backend, OpenAiBackend, ScriptedBackend};
use mind_service::{AppState, BackendFactory, ServiceConfig, DEFAULT_MAX_IN_FLIGHT};
use tracing::warn;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::ServeArgs;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

fn factory(settings: &Settings) -> CliResult<Option<BackendFactory>> {
    if let Some(dir) = settings.scripted.clone() {
        ScriptedBackend::from_dir(&dir)?;
        let f: BackendFactory = Arc::new(move || Ok(Arc::new(ScriptedBackend::from_dir(&dir)?) as Arc<dyn Backend>));
        return Ok(Some(f));
    }
    let config = settings.backend.clone();
    let transport = Arc::new(ReqwestTransport::new());
    match OpenAiBackend::from_env(config, transport) {
        Ok(backend) => {
            let shared: Arc<dyn Backend> = Arc::new(backend);
            Ok(Some(Arc::new(move || Ok(shared.clone()))))
        }
        Err(mind_core::BackendError::AuthMissing(var)) => {
            warn!("environment variable {var} is not set; session creation will answer 503");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub async fn serve(settings: &Settings, args: ServeArgs) -> CliResult<()> {
    let bind = args.bind.or(settings.service.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.to_string());
    let addr: SocketAddr = bind.parse().map_err(|e| CliError::config(format!("--bind {bind}: {e}")))?;
    let config = ServiceConfig {
        data_dir: settings.data_dir.clone(),
        max_in_flight: args.max_in_flight.or(settings.service.max_in_flight).unwrap_or(DEFAULT_MAX_IN_FLIGHT),
        static_dir: args.static_dir.or(settings.service.static_dir.clone()),
        agent: settings.agent,
    };
    let app = AppState::new(config, settings.templates.clone(), factory(settings)?).map_err(CliError::config)?;
    println!("listening on http://{addr}");
    mind_service::serve(addr, app).await.map_err(CliError::data)
}
