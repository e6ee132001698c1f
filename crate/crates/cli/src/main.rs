fn main() {
    let mut stdout = std::io::stdout();
    if let Err(e) = dualseg_cli::run_from(std::env::args_os(), &mut stdout) {
        eprintln!("{}", e.one_line());
        std::process::exit(e.exit_code());
    }
}
