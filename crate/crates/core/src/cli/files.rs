//! Model tables, allocation files, sample CSVs and result CSVs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ber::BerSample;
use crate::distortion::DistortionSample;
use crate::error::{Error, Result};
use crate::models::{Allocation, LinkConfig, ModelTable};
use crate::optimizer::SolveStatus;
use crate::simulator::{SimReport, SweepPoint};

/// Leading comment of every sweep CSV.
pub const SWEEP_SCHEMA: &str = "# semcom-alloc-sweep v1";
/// Leading comment of every simulation CSV.
pub const SIMULATE_SCHEMA: &str = "# semcom-alloc-simulate v1";

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse { source_name: path.display().to_string(), message: e.to_string().trim_end().replace('\n', " ") }
}

pub fn parse_model_table(text: &str, source_name: &str) -> Result<ModelTable> {
    let table: ModelTable = toml::from_str(text).map_err(|e| parse_error(Path::new(source_name), e))?;
    table.validate()?;
    Ok(table)
}

pub fn load_model_table(path: &Path) -> Result<ModelTable> {
    parse_model_table(&read(path)?, &path.display().to_string())
}

pub fn model_table_to_toml(table: &ModelTable) -> Result<String> {
    toml::to_string(table).map_err(|e| Error::Io(format!("cannot serialize model table: {e}")))
}

pub fn save_model_table(path: &Path, table: &ModelTable) -> Result<()> {
    write(path, &model_table_to_toml(table)?)
}

/// What `optimize` writes and `simulate` reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationFile {
    pub iterations: usize,
    pub status: String,
    pub link: LinkConfig,
    pub allocation: Allocation,
}

pub fn save_allocation(path: &Path, file: &AllocationFile) -> Result<()> {
    let text = toml::to_string(file).map_err(|e| Error::Io(format!("cannot serialize allocation: {e}")))?;
    write(path, &text)
}

pub fn load_allocation(path: &Path) -> Result<AllocationFile> {
    let file: AllocationFile = toml::from_str(&read(path)?).map_err(|e| parse_error(path, e))?;
    file.link.validate()?;
    file.allocation.model.validate()?;
    file.allocation.check_feasible(&file.link)?;
    Ok(file)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(|e| parse_error(path, e))
}

#[derive(Debug, Deserialize)]
struct DistortionRow {
    log10_ber: f64,
    log10_d_obs: f64,
    d_sem: f64,
}

/// Distortion measurements: columns `log10_ber, log10_d_obs, d_sem`.
/// Returns the observation and semantic sample sets.
pub fn load_distortion_samples(path: &Path) -> Result<(Vec<DistortionSample>, Vec<DistortionSample>)> {
    let mut obs = Vec::new();
    let mut sem = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let r: DistortionRow = row.map_err(|e| parse_error(path, e))?;
        obs.push(DistortionSample { log10_ber: r.log10_ber, value: r.log10_d_obs });
        sem.push(DistortionSample { log10_ber: r.log10_ber, value: r.d_sem });
    }
    Ok((obs, sem))
}

#[derive(Debug, Deserialize)]
struct BerRow {
    snr: Option<f64>,
    snr_db: Option<f64>,
    rate: f64,
    log10_ber: f64,
}

/// BER curve measurements: columns `rate, log10_ber` and one of `snr` or
/// `snr_db`.
pub fn load_ber_samples(path: &Path) -> Result<Vec<BerSample>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(path)?.deserialize().enumerate() {
        let r: BerRow = row.map_err(|e| parse_error(path, e))?;
        let snr = match (r.snr, r.snr_db) {
            (Some(s), None) => s,
            (None, Some(d)) => super::config::db_to_linear(d),
            _ => return Err(parse_error(path, format!("row {}: give exactly one of snr or snr_db", i + 1))),
        };
        out.push(BerSample { snr, rate: r.rate, log10_ber: r.log10_ber });
    }
    Ok(out)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Rate-weighted mean of a per-channel quantity over carrying channels.
fn rate_weighted(rates: &[f64], values: &[f64]) -> f64 {
    let total: f64 = rates.iter().filter(|r| **r > 0.0).sum();
    rates.iter().zip(values).filter(|(r, _)| **r > 0.0).map(|(r, v)| r / total * v).sum()
}

pub fn sweep_header(axis_column: &str, k: usize) -> Vec<String> {
    let mut h = vec![axis_column.to_string(), "status".into(), "model_id".into(), "rate_rs".into()];
    for prefix in ["p", "r", "log10_ber"] {
        h.extend((1..=k).map(|i| format!("{prefix}_{i}")));
    }
    h.extend(
        [
            "d_ave",
            "log10_d_obs",
            "d_sem",
            "active_channels",
            "iterations",
            "kkt_residual",
            "emp_d_ave",
            "emp_std_error",
            "emp_log10_d_obs",
            "emp_d_sem",
        ]
        .map(String::from),
    );
    h.extend((1..=k).map(|i| format!("emp_ber_{i}")));
    h
}

/// One CSV row for a sweep point; infeasible points keep every result column empty.
pub fn sweep_row(axis_value: f64, k: usize, point: &SweepPoint) -> Vec<String> {
    let width = sweep_header("", k).len();
    let mut row = vec![fmt(axis_value)];
    match &point.outcome {
        Err(_) => {
            row.push(SolveStatus::Infeasible.as_str().into());
            row.resize(width, String::new());
        }
        Ok((sel, sim)) => {
            let a = &sel.best.allocation;
            row.push(sel.best.status.as_str().into());
            row.push(a.model.model_id.clone());
            row.push(fmt(a.model.rate_rs));
            row.extend(a.powers.iter().map(|&x| fmt(x)));
            row.extend(a.rates.iter().map(|&x| fmt(x)));
            row.extend(a.log10_ber.iter().map(|&x| fmt(x)));
            row.push(fmt(a.d_ave));
            row.push(fmt(rate_weighted(&a.rates, &a.d_obs_log)));
            row.push(fmt(rate_weighted(&a.rates, &a.d_sem)));
            row.push(a.active_channels().to_string());
            row.push(sel.best.iterations.to_string());
            row.push(fmt(sel.best.original_kkt_residual));
            match sim {
                Some(s) => {
                    row.push(fmt(s.empirical_d_ave));
                    row.push(fmt(s.std_error));
                    row.push(fmt(s.empirical_log10_d_obs));
                    row.push(fmt(s.empirical_d_sem));
                    row.extend(s.channels.iter().map(|c| fmt(c.empirical_ber)));
                }
                None => row.resize(width, String::new()),
            }
        }
    }
    row
}

fn write_csv(path: &Path, schema: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    writeln!(file, "{schema}")?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(
    path: &Path,
    axis_column: &str,
    axis_values: &[f64],
    k: usize,
    points: &[SweepPoint],
) -> Result<()> {
    let rows: Vec<_> = points.iter().zip(axis_values).map(|(p, &v)| sweep_row(v, k, p)).collect();
    write_csv(path, SWEEP_SCHEMA, &sweep_header(axis_column, k), &rows)
}

pub fn simulate_header() -> Vec<String> {
    [
        "channel",
        "samples",
        "blocks",
        "block_errors",
        "bits",
        "bit_errors",
        "predicted_block_error",
        "empirical_block_error",
        "predicted_ber",
        "empirical_ber",
        "ber_lo",
        "ber_hi",
        "seed",
        "n_samples",
        "predicted_d_ave",
        "empirical_d_ave",
        "std_error",
        "max_abs_gap",
        "per_sample_d_ave",
    ]
    .map(String::from)
    .to_vec()
}

/// One row per channel; the report-level columns repeat on every row.
pub fn simulate_rows(r: &SimReport) -> Vec<Vec<String>> {
    r.channels
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                (i + 1).to_string(),
                c.samples.to_string(),
                c.blocks.to_string(),
                c.block_errors.to_string(),
                c.bits.to_string(),
                c.bit_errors.to_string(),
                fmt(c.predicted_block_error),
                fmt(c.empirical_block_error()),
                fmt(c.predicted_ber),
                fmt(c.empirical_ber),
                fmt(c.ber_interval.0),
                fmt(c.ber_interval.1),
                r.seed.to_string(),
                r.n_samples.to_string(),
                fmt(r.predicted_d_ave),
                fmt(r.empirical_d_ave),
                fmt(r.std_error),
                fmt(r.max_abs_gap),
                fmt(r.per_sample_d_ave),
            ]
        })
        .collect()
}

pub fn write_simulate_csv(path: &Path, report: &SimReport) -> Result<()> {
    write_csv(path, SIMULATE_SCHEMA, &simulate_header(), &simulate_rows(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LogisticParams, SourceModel};

    const ONE: &str = r#"
[[models]]
model_id = "a"
rate_rs = 100.0
bpp = 0.02

[models.obs]
base = -2.5
span = 2.0
slope = 1.5
mid = -4.0

[models.sem]
base = 0.2
span = 0.7
slope = 2.0
mid = -3.5
"#;

    fn synthetic(n: usize) -> ModelTable {
        let models = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1).max(1) as f64;
                SourceModel {
                    model_id: format!("m{i:02}"),
                    rate_rs: 40.0 + 2780.0 * t,
                    bpp: 0.02 + 1.39 * t,
                    obs: LogisticParams::new(-1.2 - 1.5 * t, 1.0 + t, 1.3, -3.0 - t),
                    sem: LogisticParams::new(0.3 - 0.25 * t, 0.6, 1.7, -3.5),
                }
            })
            .collect();
        ModelTable::new(models).unwrap()
    }

    #[test]
    fn single_entry_loads() {
        let t = parse_model_table(ONE, "one").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].sem.mid, -3.5);
    }

    #[test]
    fn duplicate_ids_are_named() {
        let mut text = ONE.to_string();
        text.push_str(&ONE.replace("rate_rs = 100.0", "rate_rs = 200.0"));
        let e = parse_model_table(&text, "dup").unwrap_err();
        assert!(e.to_string().contains("'a'"), "{e}");
    }

    #[test]
    fn unknown_keys_and_bad_order_rejected() {
        let e = parse_model_table(&ONE.replace("bpp = 0.02", "bpp = 0.02\npsnr = 30"), "x").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        assert!(e.to_string().contains("line"), "{e}");
        let mut text = ONE.to_string();
        text.push_str(&ONE.replace("\"a\"", "\"b\"").replace("rate_rs = 100.0", "rate_rs = 50.0"));
        assert!(matches!(parse_model_table(&text, "x"), Err(Error::Validation { .. })));
    }

    #[test]
    fn twenty_three_entry_table_round_trips() {
        let t = synthetic(23);
        let text = model_table_to_toml(&t).unwrap();
        let back = parse_model_table(&text, "rt").unwrap();
        assert_eq!(back.len(), 23);
        assert_eq!(back, t);
    }

    #[test]
    fn allocation_file_round_trips() {
        let link = LinkConfig {
            channels: vec![
                crate::ChannelSpec::new(2.0748, 1.0).unwrap(),
                crate::ChannelSpec::new(1.5739, 1.0).unwrap(),
            ],
            p_max: 2.0,
            l_max: 1000.0,
            m1_dim: 3072.0,
            alpha: 0.5,
            scheme: crate::CodingScheme::Random { blocklength: 256 },
        };
        let rep = crate::optimizer::sca_solve(&link, &synthetic(2).entries()[0]).unwrap();
        let file = AllocationFile {
            iterations: rep.iterations,
            status: rep.status.as_str().into(),
            link,
            allocation: rep.allocation,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.toml");
        save_allocation(&p, &file).unwrap();
        assert_eq!(load_allocation(&p).unwrap(), file);
    }

    #[test]
    fn sample_csvs_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "# measured\nlog10_ber,log10_d_obs,d_sem\n-6,-2.5,0.2\n-2, -1.0 ,0.8\n").unwrap();
        let (obs, sem) = load_distortion_samples(&p).unwrap();
        assert_eq!(obs[1].value, -1.0);
        assert_eq!(sem[0].value, 0.2);
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "snr_db,rate,log10_ber\n10,0.5,-4\n").unwrap();
        let b = load_ber_samples(&p).unwrap();
        assert!((b[0].snr - 10.0).abs() < 1e-12);
        std::fs::write(&p, "snr,snr_db,rate,log10_ber\n10,10,0.5,-4\n").unwrap();
        assert!(load_ber_samples(&p).is_err());
    }

    #[test]
    fn infeasible_rows_keep_the_width() {
        let k = 3;
        let point = SweepPoint {
            index: 0,
            config: LinkConfig {
                channels: vec![crate::ChannelSpec::new(1.0, 1.0).unwrap(); k],
                p_max: 1.0,
                l_max: 1.0,
                m1_dim: 1.0,
                alpha: 0.5,
                scheme: crate::CodingScheme::Random { blocklength: 256 },
            },
            outcome: Err("infeasible".into()),
        };
        let row = sweep_row(0.0, k, &point);
        assert_eq!(row.len(), sweep_header("p_max", k).len());
        assert_eq!(row[1], "infeasible");
    }
}
