use std::path::Path;
use std::process::Command;

/// Runs `python/smoke_test.py` when the extension module is installed.
#[test]
fn python_smoke_test() {
    let importable = Command::new("python3")
        .args(["-c", "import hofsurf_py"])
        .status()
        .map(|s| s.success())
        .unwrap_or(false);
    if !importable {
        eprintln!("hofsurf_py is not installed; skipping (pip install --no-build-isolation -e crates/py)");
        return;
    }
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let out = Command::new("python3").arg(script).output().unwrap();
    assert!(
        out.status.success(),
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}
