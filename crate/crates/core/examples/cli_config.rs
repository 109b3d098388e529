// Drives the command-line entry point from a TOML run configuration, the
// same way `sffp train --config run.toml` would.

use std::error::Error;
use std::process::ExitCode;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
repeats = 1

[data]
kind = "trend"
t_len = 400
f_bands = 2
slope = 0.01
ar1_phi = 0.5

[model]
m = 16
p = 4

[train]
max_epochs = 3
patience = 2
"#,
    )?;
    let out = dir.path().join("run");
    let code = sffp::cli::run([
        "sffp",
        "train",
        "--config",
        config.to_str().ok_or("non-utf8 path")?,
        "--output",
        out.to_str().ok_or("non-utf8 path")?,
        "--seed",
        "7",
    ]);
    if code != ExitCode::SUCCESS {
        return Err("train failed".into());
    }
    let mut files: Vec<String> = std::fs::read_dir(&out)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("run directory: {}", files.join(", "));
    println!("{}", std::fs::read_to_string(out.join("config.toml"))?.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
