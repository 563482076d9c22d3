use clap::Parser;

fn main() {
    let cli = match nlfp_cli::args::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap uses 2 for usage errors and 0 for --help/--version
            let _ = e.print();
            std::process::exit(e.exit_code());
        }
    };
    if let Err(e) = nlfp_cli::run(cli) {
        eprintln!("nlfp: {e}");
        std::process::exit(e.exit_code());
    }
}
