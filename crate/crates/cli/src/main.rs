fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(logsig_cli::run(&argv));
}
