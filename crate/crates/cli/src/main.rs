use clap::Parser;

fn main() {
    let cli = cbi_cli::Cli::parse();
    std::process::exit(cbi_cli::run_cli(&cli));
}
