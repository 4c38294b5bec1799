use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ssam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssam"))
        .args(args)
        .env_remove("SSAM_PROFILE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn run_conv2d_int_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let o = ssam(&[
        "run",
        "conv2d",
        "--w",
        "128",
        "--h",
        "128",
        "--m",
        "3",
        "--n",
        "3",
        "--int",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS"));
    let rec = &records(&out)[0];
    assert_eq!(rec["exact"], true);
    assert_eq!(rec["mismatches"], 0);
    assert_eq!(
        rec["counters"]["shuffles"].as_u64().unwrap(),
        rec["warps"].as_u64().unwrap() * 8
    );
}

#[test]
fn run_every_kernel_and_precision() {
    for kernel in ["conv1d", "conv2d", "stencil2d", "stencil3d", "scan"] {
        for precision in ["f32", "f64", "int"] {
            let o = ssam(&[
                "run",
                kernel,
                "--precision",
                precision,
                "--w",
                "64",
                "--h",
                "48",
                "--d",
                "12",
            ]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{kernel} {precision}: {}",
                stdout(&o)
            );
        }
    }
    let o = ssam(&["run", "conv2d", "--filter", "identity"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn injected_fault_exits_one() {
    for kernel in ["conv2d", "stencil2d", "scan"] {
        let o = ssam(&["run", kernel, "--int", "--inject-fault"]);
        assert_eq!(o.status.code(), Some(1), "{kernel}");
        assert!(stdout(&o).starts_with("FAIL"));
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ssam(&["run", "nonsense"]).status.code(), Some(2));
    assert_eq!(ssam(&["run", "conv2d", "--p", "0"]).status.code(), Some(2));
    assert_eq!(ssam(&["run", "conv2d", "--w", "16"]).status.code(), Some(2));
    assert_eq!(
        ssam(&["run", "conv2d", "--int", "--precision", "f32"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ssam(&["cost", "--profile", "no-such-card"]).status.code(),
        Some(2)
    );
    assert_eq!(ssam(&["cost", "--sweep", "5..2"]).status.code(), Some(2));
    assert_eq!(
        ssam(&["run", "stencil2d", "--stencil", "3d7pt"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn run_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..3)
        .map(|i| dir.path().join(format!("{i}.jsonl")))
        .collect();
    for (i, p) in paths.iter().enumerate() {
        let seed = if i < 2 { "5" } else { "6" };
        let o = ssam(&[
            "run",
            "stencil2d",
            "--stencil",
            "2d9pt",
            "--w",
            "80",
            "--h",
            "70",
            "--seed",
            seed,
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let bytes: Vec<_> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_ne!(bytes[0], bytes[2]);
}

#[test]
fn cost_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    let o = ssam(&[
        "cost",
        "--m",
        "3",
        "--n",
        "3",
        "--profile",
        "P100",
        "--verify",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rec = &records(&out)[0];
    assert_eq!(rec["dif"], "231");
    assert_eq!(rec["l_reg"], "435");
    assert_eq!(rec["verified"], true);

    let o = ssam(&[
        "cost",
        "--m",
        "1",
        "--n",
        "4",
        "--profile",
        "V100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(records(&out)[0]["dif"], "108");

    let o = ssam(&[
        "cost",
        "--sweep",
        "2..20",
        "--profile",
        "V100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let recs = records(&out);
    assert_eq!(recs.len(), 361);
    assert!(recs.iter().all(|r| r["dif_positive"] == true));
}

#[test]
fn cost_with_gmem_override_and_hr_smc() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    let o = ssam(&[
        "cost",
        "--t-gmem-read",
        "200",
        "--hr-smc",
        "1/4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rec = &records(&out)[0];
    // 33 - 200 (1/2 + 3/32) + 198 - 66 = 165 - 475/4
    assert_eq!(rec["avg_dif"], "185/4");
    assert_eq!(rec["hr_smc"], "1/4");
}

#[test]
fn profiles_from_files_and_directory() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("slowcard.toml");
    std::fs::write(&file, "t_shfl = 40\nt_mad = 8\nt_smem_read = \"61/2\"\n").unwrap();
    let out = dir.path().join("c.jsonl");
    let o = ssam(&[
        "cost",
        "--profile",
        file.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(records(&out)[0]["profile"], "slowcard");

    let o = Command::new(env!("CARGO_BIN_EXE_ssam"))
        .args(["cost", "--profile", "slowcard"])
        .env("SSAM_PROFILE_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    // 9 * 61/2 - 2 * 40
    assert!(stdout(&o).contains("389/2"));
}

#[test]
fn conv_sweep_rows_verify_and_grow_under_both_profiles() {
    let dir = tempfile::tempdir().unwrap();
    for profile in ["P100", "V100"] {
        let out = dir.path().join(format!("{profile}.jsonl"));
        let o = ssam(&[
            "bench",
            "conv-sweep",
            "--size",
            "64",
            "--int",
            "--profile",
            profile,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let recs = records(&out);
        assert_eq!(recs.len(), 19);
        assert!(recs
            .iter()
            .all(|r| r["verified"] == true && r["counts_agree"] == true));
        assert!(recs.iter().all(|r| r["cycles_increase"] == true));
    }
}

#[test]
fn table3_rows_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = ssam(&[
        "bench",
        "table3",
        "--size2d",
        "48",
        "--size3d",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let recs = records(&out);
    assert_eq!(recs.len(), 15);
    assert!(recs.iter().all(|r| r["verified"] == true));
}

#[test]
fn halo_reports_and_plan_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.jsonl");
    let dump = dir.path().join("plan.jsonl");
    let o = ssam(&[
        "halo",
        "--w",
        "300",
        "--h",
        "77",
        "--m",
        "3",
        "--n",
        "3",
        "--dump",
        dump.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rec = records(&out)[0].clone();
    assert_eq!(rec["hr_rc_cells"], "105/192");
    assert_eq!(rec["coverage_ok"], true);
    assert_eq!(rec["bound_holds"], true);

    let out2 = dir.path().join("h2.jsonl");
    let o = ssam(&[
        "halo",
        "--plan",
        dump.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(records(&out2)[0], rec);

    let o = ssam(&["halo", "--m", "1", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("measured, interior     0"));
}

#[test]
fn grid_files_feed_run() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("out.grid");
    let o = ssam(&[
        "run",
        "conv2d",
        "--int",
        "--w",
        "40",
        "--h",
        "20",
        "--save-output",
        saved.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    // the saved output becomes the next input; its precision comes from the file
    let o = ssam(&["run", "stencil2d", "--input", saved.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("int [40, 20]"));
    let o = ssam(&["run", "stencil3d", "--input", saved.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
