//! Acceptance: repeated runs with identical configuration and seed produce
//! byte-identical artifacts.

use std::fs;
use std::path::Path;
use std::process::Command;

fn impulse(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_impulse"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn criterion_12_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(
        &cfg_path,
        r#"
[model]
kind = "inventory"
demand = 1.0
setup_cost = 0.5
holding_cost = 1.0
alpha = 1.0
capacity = 10.0

[solve]
d = 0.5

[grid]
n_states = 101
n_theta = 51
n_actions = 51

[verify]
mc_paths = 5000
"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();

    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let code = impulse(&["solve", "-c", cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        let code = impulse(&[
            "verify",
            "-c",
            cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert_eq!(code, 0);
        let code = impulse(&[
            "trajectory",
            "-c",
            cfg,
            "--out",
            out.to_str().unwrap(),
            "--horizon",
            "5.0",
        ]);
        assert_eq!(code, 0);
    }
    for name in ["report.json", "report.txt", "verify.json", "measure.csv", "trajectory.csv"] {
        assert_eq!(
            read(&out_a, name),
            read(&out_b, name),
            "{name} differs between identical runs"
        );
    }
    println!("acceptance 12 determinism: pass (5 artifacts byte-identical)");
}
