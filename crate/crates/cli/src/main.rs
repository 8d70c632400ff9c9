use clap::Parser;

fn main() {
    let args = critperc_cli::Args::parse();
    std::process::exit(critperc_cli::execute(&args));
}
