use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = sabr_symmetry::cli::run(std::env::args(), &mut out);
    let _ = out.flush();
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    std::process::exit(sabr_symmetry::cli::exit_code(&result));
}
