use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use psrom_core::SolverConfig;
use psrom_service::{router, AppState, BuildConfig, ModelStore};

#[derive(Parser)]
#[command(name = "psrom-service", version, about = "HTTP planning service for coronary what-if evaluation")]
struct Args {
    #[arg(long, env = "PSROM_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Persist built models here; memory only when omitted.
    #[arg(long, env = "PSROM_STORE_DIR")]
    store_dir: Option<PathBuf>,
    /// Models kept in memory before least-recently-used eviction.
    #[arg(long, env = "PSROM_MAX_MODELS", default_value_t = NonZeroUsize::new(32).unwrap())]
    max_models: NonZeroUsize,
    /// Minimum relative superemic flow gain for a fitted edge law.
    #[arg(long, env = "PSROM_TOL1", default_value_t = 0.1)]
    tol1: f64,
    /// Relative ostial-flow change accepted as converged.
    #[arg(long, env = "PSROM_TOL2", default_value_t = 0.02)]
    tol2: f64,
    #[arg(long, env = "PSROM_MAX_ITERATIONS", default_value_t = 100)]
    max_iterations: usize,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut build = BuildConfig::default();
    build.surface.tol1 = args.tol1;
    let solver = SolverConfig { tol2: args.tol2, max_iterations: args.max_iterations, ..SolverConfig::default() };
    solver.validate()?;
    let store = Arc::new(ModelStore::new(args.max_models, args.store_dir)?);
    let app = router(AppState { store, build, solver });
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
