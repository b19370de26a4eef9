use tracing_subscriber::EnvFilter;

/// Log filter, e.g. `CTL_LOG=debug` or `CTL_LOG=ctl_core=trace`.
const LOG_ENV: &str = "CTL_LOG";

fn main() {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let result = ctl_cli::run(std::env::args_os());
    if !result.log.is_empty() {
        if result.exit_code == ctl_cli::EXIT_OK && result.artifacts.is_empty() {
            // help, version and --validate-only reports
            println!("{}", result.log);
        } else {
            eprintln!("{}", result.log);
        }
    }
    for path in &result.artifacts {
        println!("{}", path.display());
    }
    std::process::exit(result.exit_code);
}
