use clap::Parser;

fn main() {
    let cli = ddpc::cli::Cli::parse();
    if let Err(e) = ddpc::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
