use clap::Parser;

fn main() {
    let args = degenbeam::cli::Args::parse();
    std::process::exit(degenbeam::cli::main_with_args(args));
}
