use clap::Parser;

fn main() {
    let cli = calderonlab::cli::Cli::parse();
    std::process::exit(calderonlab::cli::run(cli));
}
