//! End-to-end runs of the compiled binary on a small custom setup.

use std::fs;
use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "\
# three users on a small array
m = 8
nc = 32
ng = 4
scenario = custom
scheme = apsp
q = 1
snr_db = 0,10
delta_ell = 1
trials = 4
seed = 7
frame = type-a
frame_len = 7
gamma = 1e-4
subcarrier_step = 4
ut.0.doppler_hz = 40
ut.0.tap = 0 1.0 -0.3 0.05
ut.1.doppler_hz = 55
ut.1.tap = 1 0.8 0.2 0.05
ut.2.doppler_hz = 70
ut.2.tap = 2 0.9 0.5 0.05
",
    )
    .unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_apsp"))
}

#[test]
fn mse_subcommand_writes_the_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("results.csv");
    let status = bin()
        .args(["mse", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,scheme,q,snr_db,kind,delta_ell,source,total,bound,stderr,ut0,ut1,ut2"
    );
    // 2 SNRs x (ce + ce-delay + cp at one lag) x (analytic + empirical)
    assert_eq!(lines.count(), 12);
}

#[test]
fn schedule_subcommand_round_trips_the_shift_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("schedule.txt");
    let diag = dir.path().join("schedule.csv");
    let status = bin()
        .args(["schedule", "--order", "power", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--diagnostics")
        .arg(&diag)
        .status()
        .unwrap();
    assert!(status.success());
    let schedule = apsp::PilotSchedule64::load(&out).unwrap();
    assert_eq!(schedule.k(), 3);
    assert_eq!(schedule.q(), 1);
    let diag_text = fs::read_to_string(&diag).unwrap();
    assert!(diag_text.starts_with("ut,phi,group,base_shift,overlap\n"));
    assert_eq!(diag_text.lines().count(), 4);
}

#[test]
fn rate_subcommand_writes_one_row_per_frame_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("rates.csv");
    let status = bin()
        .args(["rate", "--frame", "type-b", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,scheme,frame,q,snr_db,ul_se,dl_se,total_se,dl_model"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn bad_flags_are_rejected() {
    assert!(!bin().args(["mse", "--scheme", "nope"]).status().unwrap().success());
    assert!(!bin()
        .args(["schedule", "--order", "sideways"])
        .status()
        .unwrap()
        .success());
}
