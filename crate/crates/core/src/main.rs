use clap::Parser;

fn main() {
    let cli = match losslaw::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = losslaw::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(losslaw::cli::exit_code(&e));
    }
}
