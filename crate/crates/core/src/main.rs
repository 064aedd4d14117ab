use sde_rtm::cli;

fn main() {
    if let Some(n) = cli::threads_from_env() {
        // Only fails if a pool was already installed, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(cli::run_command(&args));
}
