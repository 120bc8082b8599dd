use clap::Parser;
use derangement_cli::{emit, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli).and_then(|r| Ok((emit(&r, cli.format)?, r.exit_code()))) {
        Ok((out, code)) => {
            print!("{out}");
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
