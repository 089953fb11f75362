use clap::Parser;

fn main() {
    let cli = capflash_cli::app::Cli::parse();
    if let Err(e) = capflash_cli::app::execute(cli) {
        eprintln!("capflash: {e}");
        std::process::exit(e.exit_code());
    }
}
