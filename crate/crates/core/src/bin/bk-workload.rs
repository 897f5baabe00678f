use std::path::Path;

fn main() {
    let code = benchkeep::workload::workload_main(std::env::args_os(), Path::new("."), &mut std::io::stderr());
    std::process::exit(code);
}
