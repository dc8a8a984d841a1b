use clap::Parser;
use slicetopo_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = slicetopo_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
