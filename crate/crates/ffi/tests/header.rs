use std::path::Path;
use std::process::Command;

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/spir.h");

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(HEADER).unwrap();
    for sym in [
        "spir_version",
        "spir_last_error_message",
        "spir_required_key_budget",
        "spir_finite_key_length",
        "spir_toeplitz_hash",
        "spir_cube_new",
        "spir_cube_shape",
        "spir_cube_free",
        "spir_sim_new",
        "spir_sim_retrieve",
        "spir_sim_alarm_count",
        "spir_sim_free",
        "typedef struct SpirCube SpirCube",
        "typedef struct SpirSim SpirSim",
        "SPIR_STATUS_OK = 0",
        "SPIR_STATUS_BUDGET_EXHAUSTED",
    ] {
        assert!(h.contains(sym), "missing {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"spir.h\"\nint main(void) { uint64_t a, b; return spir_required_key_budget(8, 8, &a, &b) == SPIR_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let inc = Path::new(HEADER).parent().unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(inc)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
