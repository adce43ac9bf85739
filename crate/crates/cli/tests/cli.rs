use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcgl::grid::rel_sup_diff;
use pcgl::io::load_field;

fn pcgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcgl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(
        &p,
        format!("n = 8\neps = 0.5\nseed = 7\nt_end = 0.01\nburn_in = 0.05\noutput_every = 5\n{extra}"),
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_writes_table_fits_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = pcgl(&["constants", "--config", &cfg, "--eps-list", "1,0.5,0.25,0.125", "--mc-samples", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("constants.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("eps,c1,"));
    assert!(lines[1].starts_with("1.0000000000000000e0,5.0000000000000000e-1"));
    assert!(out.join("fits.csv").exists() && out.join("mc.csv").exists());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("constants.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["constants"].as_array().unwrap().len(), 4);
}

#[test]
fn validation_and_parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kappa_prime = 0.06\n");
    let o = pcgl(&["constants", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa_prime"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n = 8\neps = = 0.5\n").unwrap();
    let o = pcgl(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn pair_budget_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pair_budget = 10\n");
    let o = pcgl(&["constants", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("smallest feasible eps"), "{}", stderr(&o));
}

#[test]
fn sampled_noise_feeds_solve_and_besov() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = pcgl(&["sample-noise", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/z_000010.bin").exists());

    let cfg = write_config(dir.path(), "u0_file = \"out/z_000010.bin\"\n");
    for mode in ["para", "direct"] {
        let o = pcgl(&["solve", "--config", &cfg, "--mode", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let z = dir.path().join("out/z_000010.bin");
    assert_eq!(fs::read(dir.path().join("out/u_direct_0000.bin")).unwrap(), fs::read(&z).unwrap());
    let para0 = load_field(&dir.path().join("out/u_para_0000.bin")).unwrap();
    assert!(rel_sup_diff(&para0, &load_field(&z).unwrap()) < 1e-13);

    let field = dir.path().join("out/u_para_0002.bin");
    let o = pcgl(&["besov", "--field", field.to_str().unwrap(), "--alpha", "-0.6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("block,weighted_sup\n-1,"));
    assert!(text.lines().last().unwrap().starts_with("norm,"));
}

#[test]
fn identity_check_and_compare_report_statement_convention() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nu_im = 0.5\nscheme = \"etd2\"\n");
    let o = pcgl(&["identity-check", "--config", &cfg, "--samples", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/identity-check.manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(m["summary"]["statement_rel_error"].as_f64().unwrap() < 1e-12);
    assert!(m["summary"]["proof_line_rel_error"].as_f64().unwrap() > 1e-8);

    let o = pcgl(&["compare", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/compare.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["summary"]["closest_convention"], "statement");
}

#[test]
fn drive_and_study_outputs_are_thread_independent() {
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "");
        let o = pcgl(&["--threads", threads, "drive", "--config", &cfg, "--save-fields"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = pcgl(&["--threads", threads, "study-eps", "--config", &cfg, "--eps-list", "0.5,0.25", "--seeds", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let files = ["drivers.csv", "driver_IAAB.bin", "study.csv", "study_means.csv"];
        outputs.push(files.map(|f| fs::read(dir.path().join("out").join(f)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}
