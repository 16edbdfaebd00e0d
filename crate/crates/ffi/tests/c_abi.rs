//! Compiles tests/smoke.c against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

/// `cargo test` leaves the library next to this binary in target/<profile>/deps;
/// `cargo build` also copies it one level up.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    [deps, deps.parent().unwrap()]
        .iter()
        .map(|d| d.join("libegolog_ffi.a"))
        .find(|p| p.exists())
        .unwrap_or_else(|| panic!("libegolog_ffi.a not found near {}", deps.display()))
}

#[test]
fn header_compiles_and_static_library_links() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib();
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    // right lags left by three samples, so t_left - t_right = -3 samples.
    let lag: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap();
    assert!((lag + 3.0).abs() < 0.5, "lag {lag}");
}
