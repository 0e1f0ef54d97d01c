//! Experiment configuration files.
//!
//! Powers and gains may be given either linearly or in decibels with a `_db`
//! suffix (`p_max_db`, `gain_db`, `noise_var_db`, `start_db`, ...). Exactly
//! one of each pair must be present; everything is linear after loading.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ber;
use crate::error::{Error, Result};
use crate::models::{ChannelSpec, CodingScheme, LinkConfig, PracticalCoeffs};
use crate::simulator::{FlipMode, SimConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SEMCOM_ALLOC_OUTPUT_DIR";

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    gain_sq: Option<f64>,
    gain_db: Option<f64>,
    noise_var: Option<f64>,
    noise_var_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    preset: Option<String>,
    kind: Option<String>,
    blocklength: Option<u32>,
    mod_order: Option<u32>,
    lam1: Option<f64>,
    lam2: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    start: Option<f64>,
    start_db: Option<f64>,
    stop: Option<f64>,
    stop_db: Option<f64>,
    step: Option<f64>,
    step_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    n_samples: u64,
    #[serde(default)]
    stream: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    table: PathBuf,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    alpha: f64,
    l_max: f64,
    m1_dim: f64,
    p_max: Option<f64>,
    p_max_db: Option<f64>,
    scheme: RawScheme,
    channels: Vec<RawChannel>,
    sweep: Option<RawSweep>,
    sim: Option<RawSim>,
}

/// Which link parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PMax,
    /// Common SNR offset applied to every channel gain.
    Snr,
    LMax,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PMax => "p_max",
            SweepAxis::Snr => "snr",
            SweepAxis::LMax => "l_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    /// Axis values in the units they were written in.
    pub values: Vec<f64>,
    /// Whether `values` are decibels.
    pub in_db: bool,
}

impl Sweep {
    /// Label of the CSV axis column, e.g. `p_max_db`.
    pub fn column(&self) -> String {
        if self.in_db {
            format!("{}_db", self.axis.name())
        } else {
            self.axis.name().to_string()
        }
    }
}

/// A loaded experiment: the base link, where to find the model table and
/// what to run on top of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub link: LinkConfig,
    pub table_path: PathBuf,
    pub sweep: Option<Sweep>,
    pub sim: Option<SimConfig>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn one_of(name: &str, linear: Option<f64>, db: Option<f64>) -> Result<f64> {
    match (linear, db) {
        (Some(v), None) => Ok(v),
        (None, Some(d)) => Ok(db_to_linear(d)),
        (Some(_), Some(_)) => Err(Error::invalid(name, format!("give either {name} or {name}_db, not both"))),
        (None, None) => Err(Error::invalid(name, format!("one of {name} or {name}_db is required"))),
    }
}

fn scheme_from(raw: &RawScheme) -> Result<CodingScheme> {
    if let Some(name) = &raw.preset {
        let extra = raw.kind.is_some()
            || raw.blocklength.is_some()
            || raw.mod_order.is_some()
            || raw.lam1.is_some()
            || raw.lam2.is_some()
            || raw.mu1.is_some()
            || raw.mu2.is_some();
        if extra {
            return Err(Error::invalid("scheme", "a preset takes no other keys"));
        }
        return ber::preset(name).ok_or_else(|| {
            Error::invalid("scheme.preset", format!("unknown preset '{name}'; known: {}", ber::PRESET_NAMES.join(", ")))
        });
    }
    let blocklength = raw.blocklength.ok_or_else(|| Error::invalid("scheme.blocklength", "required"))?;
    let scheme = match raw.kind.as_deref() {
        Some("random") => CodingScheme::Random { blocklength },
        Some("practical") => {
            let need = |v: Option<f64>, k: &str| v.ok_or_else(|| Error::invalid(format!("scheme.{k}"), "required"));
            CodingScheme::Practical {
                blocklength,
                mod_order: raw.mod_order.ok_or_else(|| Error::invalid("scheme.mod_order", "required"))?,
                coeffs: PracticalCoeffs {
                    lam1: need(raw.lam1, "lam1")?,
                    lam2: need(raw.lam2, "lam2")?,
                    mu1: need(raw.mu1, "mu1")?,
                    mu2: need(raw.mu2, "mu2")?,
                },
            }
        }
        Some(other) => {
            return Err(Error::invalid("scheme.kind", format!("expected 'random' or 'practical', got '{other}'")))
        }
        None => return Err(Error::invalid("scheme", "needs either preset or kind")),
    };
    scheme.validate()?;
    Ok(scheme)
}

fn sweep_from(raw: &RawSweep) -> Result<Sweep> {
    let axis = match raw.axis.as_str() {
        "p_max" => SweepAxis::PMax,
        "snr" => SweepAxis::Snr,
        "l_max" => SweepAxis::LMax,
        other => return Err(Error::invalid("sweep.axis", format!("expected p_max, snr or l_max, got '{other}'"))),
    };
    let lin = [raw.start, raw.stop, raw.step];
    let db = [raw.start_db, raw.stop_db, raw.step_db];
    let (in_db, [start, stop, step]) = if lin.iter().all(Option::is_some) && db.iter().all(Option::is_none) {
        (false, lin.map(Option::unwrap))
    } else if db.iter().all(Option::is_some) && lin.iter().all(Option::is_none) {
        (true, db.map(Option::unwrap))
    } else {
        return Err(Error::invalid("sweep", "give start/stop/step all linear or all with the _db suffix"));
    };
    if axis == SweepAxis::Snr && !in_db {
        return Err(Error::invalid("sweep", "the snr axis is an offset in dB; use start_db/stop_db/step_db"));
    }
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::invalid("sweep", "needs start <= stop and a positive step"));
    }
    // tolerate rounding in the last step
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    let values = (0..n).map(|i| start + i as f64 * step).collect();
    Ok(Sweep { axis, values, in_db })
}

impl ExperimentConfig {
    /// Parse a configuration; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, source_name: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string().trim_end().replace('\n', " "),
        })?;
        let channels = raw
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                ChannelSpec::new(
                    one_of(&format!("channels[{i}].gain"), c.gain_sq, c.gain_db)?,
                    one_of(&format!("channels[{i}].noise_var"), c.noise_var, c.noise_var_db)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let link = LinkConfig {
            channels,
            p_max: one_of("p_max", raw.p_max, raw.p_max_db)?,
            l_max: raw.l_max,
            m1_dim: raw.m1_dim,
            alpha: raw.alpha,
            scheme: scheme_from(&raw.scheme)?,
        };
        link.validate()?;
        let table_path = base_dir.join(&raw.table);
        if !table_path.is_file() {
            return Err(Error::Io(format!("model table {} does not exist", table_path.display())));
        }
        let sim = raw
            .sim
            .map(|s| {
                let c = SimConfig {
                    n_samples: s.n_samples,
                    seed: raw.seed,
                    mode: if s.stream { FlipMode::Stream } else { FlipMode::Block },
                };
                c.validate().map(|_| c)
            })
            .transpose()?;
        let output_dir = match raw.output_dir {
            Some(d) => base_dir.join(d),
            None => std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        Ok(ExperimentConfig {
            link,
            table_path,
            sweep: raw.sweep.as_ref().map(sweep_from).transpose()?,
            sim,
            seed: raw.seed,
            output_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, &path.display().to_string(), base)
    }

    /// Replace the seed everywhere it is used.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = &mut self.sim {
            s.seed = seed;
        }
    }

    /// The link at every sweep point, or just the base link.
    pub fn grid(&self) -> Vec<LinkConfig> {
        let Some(sweep) = &self.sweep else {
            return vec![self.link.clone()];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let x = if sweep.in_db { db_to_linear(v) } else { v };
                let mut c = self.link.clone();
                match sweep.axis {
                    SweepAxis::PMax => c.p_max = x,
                    SweepAxis::LMax => c.l_max = x,
                    SweepAxis::Snr => {
                        for ch in &mut c.channels {
                            ch.gain_sq *= x;
                        }
                    }
                }
                c
            })
            .collect()
    }
}
