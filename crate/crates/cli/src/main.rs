use clap::Parser;

fn main() {
    let cli = admm_mimo_cli::Cli::parse();
    std::process::exit(admm_mimo_cli::run(cli));
}
