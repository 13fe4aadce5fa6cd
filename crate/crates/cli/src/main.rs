use clap::Parser;
use tsbench_cli::{run, Cli};
use tsbench_core::ingest::HttpTransport;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli, &HttpTransport) {
        eprintln!("tsbench: {e}");
        std::process::exit(e.exit_code());
    }
}
