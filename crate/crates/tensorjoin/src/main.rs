use clap::Parser;

fn main() {
    let cli = tensorjoin::cli::Cli::parse();
    if let Err(err) = tensorjoin::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
