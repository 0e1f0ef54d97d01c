//! End-to-end runs of the `semcom-alloc` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{monotone_table, PAPER_GAINS};
use semcom_alloc::cli::files::{load_allocation, save_model_table, SIMULATE_SCHEMA, SWEEP_SCHEMA};
use semcom_alloc::cli::load_model_table;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcom-alloc"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEMCOM_ALLOC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, gains: &[f64], extra: &str) {
    save_model_table(&dir.join("models.toml"), &monotone_table(10)).unwrap();
    let mut text = String::from(
        "table = \"models.toml\"\noutput_dir = \"out\"\nseed = 5\nalpha = 1.0\nl_max = 1000\nm1_dim = 3072\n",
    );
    text.push_str(extra);
    text.push_str("\n[scheme]\nkind = \"random\"\nblocklength = 256\n");
    for g in gains {
        text.push_str(&format!("\n[[channels]]\ngain_sq = {g}\nnoise_var = 1.0\n"));
    }
    std::fs::write(dir.join("config.toml"), text).unwrap();
}

/// Data rows of a CSV written by the binary, keyed by header.
fn read_csv(path: &Path, schema: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next().unwrap(), schema);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}

#[test]
fn optimize_single_channel_uses_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &[1.0], "p_max_db = 10");
    let stdout = ok(&bin(dir.path(), &["optimize", "-c", "config.toml"]));
    assert!(stdout.contains("status     converged"), "{stdout}");
    let file = load_allocation(&dir.path().join("out/allocation.toml")).unwrap();
    let a = &file.allocation;
    assert!((a.rates[0] - a.model.rate_rs / 1000.0).abs() <= 1e-12);
    assert!((a.powers[0] - 10.0).abs() <= 1e-12);
}

#[test]
fn sweep_over_power_on_the_eight_channel_profile() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "p_max_db = 0\n\n[sweep]\naxis = \"p_max\"\nstart_db = 0\nstop_db = 14\nstep_db = 2";
    write_config(dir.path(), &PAPER_GAINS, sweep);
    ok(&bin(dir.path(), &["sweep", "-c", "config.toml"]));
    let (header, rows) = read_csv(&dir.path().join("out/sweep.csv"), SWEEP_SCHEMA);
    assert_eq!(rows.len(), 8);
    assert_eq!(header[0], "p_max_db");
    assert!(header.iter().any(|h| h == "p_8") && header.iter().any(|h| h == "emp_ber_8"));
    let active: Vec<u32> = column(&header, &rows, "active_channels").iter().map(|s| s.parse().unwrap()).collect();
    assert!(active.windows(2).all(|w| w[0] <= w[1]), "{active:?}");
    let rs: Vec<f64> = column(&header, &rows, "rate_rs").iter().map(|s| s.parse().unwrap()).collect();
    assert!(rs.windows(2).all(|w| w[0] <= w[1]), "{rs:?}");
    // no [sim] section: empirical columns stay empty
    assert!(column(&header, &rows, "emp_d_ave").iter().all(|s| s.is_empty()));
}

#[test]
fn infeasible_sweep_points_are_flagged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "p_max = 1\n\n[sweep]\naxis = \"l_max\"\nstart = 5\nstop = 1005\nstep = 500";
    write_config(dir.path(), &[1.0, 0.5], sweep);
    ok(&bin(dir.path(), &["sweep", "-c", "config.toml"]));
    let (header, rows) = read_csv(&dir.path().join("out/sweep.csv"), SWEEP_SCHEMA);
    let status = column(&header, &rows, "status");
    assert_eq!(status[0], "infeasible");
    assert!(column(&header, &rows, "model_id")[0].is_empty());
    assert_eq!(status[2], "converged");
}

#[test]
fn simulate_is_deterministic_and_honours_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &[2.0748, 1.5739], "p_max = 2");
    ok(&bin(dir.path(), &["optimize", "-c", "config.toml"]));
    let run = |seed: &str, out: &str, extra: &[&str]| {
        let mut args = vec!["--seed", seed, "simulate", "-a", "out/allocation.toml", "--samples", "20000", "-o", out];
        args.extend_from_slice(extra);
        ok(&bin(dir.path(), &args));
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let a = run("1", "a.csv", &[]);
    let b = run("1", "b.csv", &["--sequential"]);
    let c = run("2", "c.csv", &[]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (header, rows) = read_csv(&dir.path().join("a.csv"), SIMULATE_SCHEMA);
    assert_eq!(rows.len(), 2);
    let samples: u64 = column(&header, &rows, "samples").iter().map(|s| s.parse::<u64>().unwrap()).sum();
    assert_eq!(samples, 20_000);
}

#[test]
fn fitting_commands_feed_the_model_table() {
    let dir = tempfile::tempdir().unwrap();
    let obs = semcom_alloc::LogisticParams::new(-2.0, 1.6, 1.8, -4.2);
    let sem = semcom_alloc::LogisticParams::new(0.1, 0.8, 2.2, -3.6);
    let mut csv = String::from("log10_ber,log10_d_obs,d_sem\n");
    for i in 0..=24 {
        let x = -7.0 + 0.25 * i as f64;
        csv.push_str(&format!("{x},{},{}\n", obs.eval(x), sem.eval(x)));
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    let args = ["fit-distortion", "--samples", "d.csv", "--model-id", "new", "--rate-rs", "250", "--table", "t.toml"];
    ok(&bin(dir.path(), &args));
    let table = load_model_table(&dir.path().join("t.toml")).unwrap();
    let m = table.get("new").unwrap();
    assert!((m.obs.mid - obs.mid).abs() < 1e-5 && (m.sem.slope - sem.slope).abs() < 1e-5);

    let scheme = semcom_alloc::ber::preset("polar256-qpsk").unwrap();
    let mut csv = String::from("snr,rate,log10_ber\n");
    for rate in [0.25, 0.5, 0.75] {
        for i in 0..20 {
            let snr = 0.05 + 0.01 * i as f64;
            let lb = semcom_alloc::ber::log10_ber(&scheme, snr, rate).unwrap();
            csv.push_str(&format!("{snr},{rate},{lb}\n"));
        }
    }
    std::fs::write(dir.path().join("b.csv"), csv).unwrap();
    let args = [
        "fit-ber",
        "--samples",
        "b.csv",
        "--mod-order",
        "4",
        "--blocklength",
        "256",
        "--region-lo",
        "-400",
        "--region-hi",
        "0",
    ];
    let stdout = ok(&bin(dir.path(), &args));
    assert!(stdout.contains("kind = \"practical\""));
    assert!(stdout.contains("lam1 = -2.18"), "{stdout}");
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&bin(dir.path(), &["selfcheck"]));
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["optimize", "-c", "missing.toml"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error: kind=io msg=\""), "{stderr}");

    write_config(dir.path(), &[1.0], "p_max = 1\nbogus = 2");
    let out = bin(dir.path(), &["optimize", "-c", "config.toml"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: kind=parse"), "{stderr}");
}
