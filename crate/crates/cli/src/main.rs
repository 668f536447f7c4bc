use clap::Parser;

fn main() {
    let cli = alr_cli::Cli::parse();
    std::process::exit(alr_cli::run(cli));
}
