use clap::Parser;

fn main() {
    let cli = interco::cli::Cli::parse();
    if let Err(e) = interco::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
