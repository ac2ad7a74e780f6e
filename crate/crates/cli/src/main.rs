use std::process::ExitCode;

use clap::Parser;
use gsan_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("GSAN_THREADS").ok().filter(|s| !s.is_empty()) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {}", e);
                }
            }
            _ => {
                eprintln!("error: GSAN_THREADS must be a positive integer, got {:?}", n);
                return ExitCode::from(gsan_cli::EXIT_INPUT as u8);
            }
        }
    }
    let code = run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
