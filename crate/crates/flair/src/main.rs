use clap::Parser;

fn main() {
    let cli = flair::cli::Cli::parse();
    if let Err(err) = flair::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
