use clap::Parser;

fn main() {
    let cli = hvcviz::Cli::parse();
    let code = match hvcviz::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code);
}
