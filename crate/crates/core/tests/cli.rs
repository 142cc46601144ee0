use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use spir_core::cube::{DatabaseCube, Manifest};

fn spir(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spir"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn spir")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

#[test]
fn config_reports_sources() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spir.conf"), "[channel]\narm_km = 30\n").unwrap();
    let out = spir(dir.path(), &["--config", "spir.conf", "--set", "run.seed=9", "config"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    let line = |k: &str| {
        s.lines()
            .find(|l| l.starts_with(k))
            .unwrap_or_else(|| panic!("{k} missing in\n{s}"))
            .to_string()
    };
    assert!(line("arm_km = 30").contains("# file:2"));
    assert!(line("seed = 9").contains("# flag"));
    assert!(line("f_ec = 1.41").contains("# default"));
    let reparsed = spir_core::config::parse_config(&s, &[]).unwrap();
    assert_eq!(reparsed.channel.arm_km, 30.0);
    assert_eq!(reparsed.run.seed, 9);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "[channel]\narm_km = far\nbogus = 1\n").unwrap();
    let out = spir(dir.path(), &["--config", "bad.conf", "config"]);
    assert_eq!(out.status.code(), Some(2));
    let e = text(&out.stderr);
    assert!(
        e.contains("error[config]") && e.contains("line 2") && e.contains("line 3"),
        "{e}"
    );

    let out = spir(dir.path(), &["--set", "nosuch.key=1", "config"]);
    assert_eq!(out.status.code(), Some(2));
    let out = spir(dir.path(), &["get"]);
    assert_eq!(out.status.code(), Some(2), "missing --index is a usage error");
    let out = spir(dir.path(), &["--config", "missing.conf", "config"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn ingest_synthetic_writes_snapshot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = spir(
        dir.path(),
        &[
            "--set",
            "database.synthetic_n=30",
            "--set",
            "database.synthetic_max_bytes=5",
            "ingest",
            "--synthetic",
        ],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let cube = DatabaseCube::read_snapshot(&dir.path().join("db.cube")).unwrap();
    assert_eq!((cube.n(), cube.entry_bits(), cube.side()), (30, 40, 4));
    let manifest = Manifest::parse(&fs::read_to_string(dir.path().join("db.manifest")).unwrap()).unwrap();
    assert_eq!(manifest.entries.len(), 30);
    assert_eq!(manifest.byte_len(0), Some(5));
}

#[test]
fn tcp_deployment_get_and_padding() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, a2) = (free_port(), free_port());
    let base = vec![
        "--set".to_string(),
        "database.synthetic_n=20".into(),
        "--set".into(),
        "database.synthetic_max_bytes=4".into(),
        "--set".into(),
        "protocol.n_pulses=5.85e11".into(),
        "--set".into(),
        "protocol.generations=80".into(),
        "--set".into(),
        format!("network.dc1={a1}"),
        "--set".into(),
        format!("network.dc2={a2}"),
    ];
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = base.iter().map(String::as_str).collect();
        args.extend_from_slice(extra);
        spir(dir.path(), &args)
    };
    for step in [&["ingest", "--synthetic"][..], &["qkd-keygen"], &["provision"]] {
        let out = run(step);
        assert!(out.status.success(), "{step:?}: {}", text(&out.stderr));
    }
    let out = run(&["provision"]);
    assert_ne!(out.status.code(), Some(0), "re-provisioning must refuse to overwrite");

    let servers: Vec<_> = ["dc1", "dc2"]
        .iter()
        .map(|role| {
            let mut args: Vec<&str> = base.iter().map(String::as_str).collect();
            args.extend_from_slice(&["serve-dc", "--role", role, "--max-connections", "2"]);
            Command::new(env!("CARGO_BIN_EXE_spir"))
                .current_dir(dir.path())
                .args(&args)
                .stdout(Stdio::null())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    std::thread::sleep(std::time::Duration::from_millis(300));

    let out = run(&["get", "--index", "13", "--out", "r13.bin"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let cube = DatabaseCube::read_snapshot(&dir.path().join("db.cube")).unwrap();
    let manifest = Manifest::parse(&fs::read_to_string(dir.path().join("db.manifest")).unwrap()).unwrap();
    let len = manifest.byte_len(13).unwrap();
    assert_eq!(
        fs::read(dir.path().join("r13.bin")).unwrap(),
        cube.cell(13).to_bytes()[..len]
    );

    let out = run(&["get", "--index", "22", "--out", "pad.bin"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("padding"));
    assert!(fs::read(dir.path().join("pad.bin")).unwrap().is_empty());

    let out = run(&["get", "--index", "27"]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));

    for s in servers {
        let o = s.wait_with_output().unwrap();
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    let ledger = fs::read_to_string(dir.path().join("keys/user/ledger.log")).unwrap();
    assert!(ledger.lines().count() >= 8, "{ledger}");
}

#[test]
fn demo_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = spir(
            dir.path(),
            &[
                "--seed",
                "7",
                "--set",
                &format!("run.output_dir={run}"),
                "demo",
                "--index",
                "5",
            ],
        );
        assert!(out.status.success(), "{}", text(&out.stderr));
        let s = text(&out.stdout);
        assert!(s.contains("budget ledger: 172,314 / 465,600"), "{s}");
        assert!(s.contains("byte-exact match") && s.contains("monitor alarms: 0"), "{s}");
        let read = |f: &str| fs::read(dir.path().join(run).join(f)).unwrap();
        outputs.push((read("transcript.txt"), read("ledger.txt"), read("record_5.bin")));
    }
    assert!(!outputs[0].0.is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_writes_annotated_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = spir(
        dir.path(),
        &[
            "--set",
            "sweep.distances_km=0,50",
            "--set",
            "protocol.generations=60",
            "sweep",
            "--csv",
            "curves/fig.csv",
        ],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("monotone non-increasing: true"));
    for name in ["capped", "uncapped"] {
        let csv = fs::read_to_string(dir.path().join(format!("curves/fig-{name}.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# assumed constants") && lines[0].contains("calibrated"), "{csv}");
        assert_eq!(lines.iter().filter(|l| l.starts_with("point,")).count(), 2);
        assert_eq!(lines.iter().filter(|l| l.starts_with("threshold:")).count(), 2);
        let data: Vec<&str> = lines.iter().filter(|l| !l.starts_with('#')).copied().collect();
        assert_eq!(data[0], "kind,distance_km,l_bits,mu1,mu2,mu3");
    }
}
