//! Compiles `tests/c/smoke.c` against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// Builds the staticlib in a private target dir so the outer build lock is not contended.
fn build_staticlib() -> PathBuf {
    let target = manifest().join("../../target/c-abi-test");
    let status = Command::new(env!("CARGO"))
        .args(["build", "--release", "-p", "fastslow-ffi", "--lib"])
        .env("CARGO_TARGET_DIR", &target)
        .current_dir(manifest())
        .status()
        .expect("run cargo");
    assert!(status.success(), "building the static library failed");
    target.join("release/libfastslow_ffi.a")
}

fn compile(src: &Path, out: &Path, lib: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new("cc");
    cmd.args(["-std=c11", "-Wall", "-Wextra", "-Werror"])
        .arg("-I")
        .arg(manifest().join("include"))
        .arg(src)
        .arg("-o")
        .arg(out);
    match lib {
        Some(lib) => cmd.arg(lib).args(["-lpthread", "-ldl", "-lm"]),
        None => cmd.args(["-fsyntax-only"]),
    };
    cmd.output().expect("run cc")
}

#[test]
fn header_is_valid_c() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = compile(
        &manifest().join("tests/c/smoke.c"),
        &dir.path().join("x"),
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn c_program_links_and_runs() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = build_staticlib();
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = compile(&manifest().join("tests/c/smoke.c"), &exe, Some(&lib));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
