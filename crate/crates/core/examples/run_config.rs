//! Drives the command layer from a config file, as the `etc` binary does.
//!
//! ```text
//! cargo run --release --example run_config -- simulate configs/benchmark.toml --override sigma=0.01
//! ```

use etc_core::cli::main_with;

fn main() {
    let mut args = std::env::args().skip(1);
    let command = args.next().unwrap_or_else(|| "simulate".into());
    let config = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/benchmark.toml").into());
    let mut argv = vec!["etc".to_string(), command, "--config".into(), config];
    argv.extend(args);
    if !argv.iter().any(|a| a == "--out") {
        argv.extend(["--out".into(), std::env::temp_dir().join("etc-example").display().to_string()]);
    }
    std::process::exit(main_with(argv));
}
