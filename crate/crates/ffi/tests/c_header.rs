//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(Path::parent).expect("target profile dir").to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/contest_ffi.h")).unwrap();
    for sym in [
        "typedef struct ContestHandle ContestHandle;",
        "contest_spec_from_json",
        "contest_spec_free",
        "contest_solve_threshold",
        "contest_metrics",
        "contest_calibrate_rho",
        "contest_intervene_json",
        "contest_string_free",
        "#define CONTEST_ERR_INFEASIBLE 11",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "-p", "contest-ffi"])
        .current_dir(manifest)
        .status()
        .expect("cargo");
    assert!(status.success());
    let lib = target_dir().join("libcontest_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());

    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "smoke: ok");
}
