use clap::Parser;

fn main() {
    let cli = picarz::cli::Cli::parse();
    if let Err(e) = picarz::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
