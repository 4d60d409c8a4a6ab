use clap::Parser;

fn main() {
    let cli = qext::cli::Cli::parse();
    std::process::exit(qext::cli::run(cli));
}
