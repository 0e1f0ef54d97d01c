//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use semcom_alloc::{ChannelSpec, CodingScheme, LinkConfig, LogisticParams, ModelTable, SourceModel};

/// Exponential(1) draws behind the published eight-channel experiments.
pub const PAPER_GAINS: [f64; 8] = [2.0748, 1.5739, 1.2348, 0.6717, 0.5964, 0.3451, 0.1132, 0.1095];

pub fn link(gains: &[f64], p_max: f64, l_max: f64, alpha: f64, scheme: CodingScheme) -> LinkConfig {
    LinkConfig {
        channels: gains.iter().map(|&g| ChannelSpec::new(g, 1.0).unwrap()).collect(),
        p_max,
        l_max,
        m1_dim: 3072.0,
        alpha,
        scheme,
    }
}

pub fn random256() -> CodingScheme {
    CodingScheme::Random { blocklength: 256 }
}

/// A codec whose curves sit at mid-range values.
pub fn source_model(id: &str, rate_rs: f64) -> SourceModel {
    SourceModel {
        model_id: id.into(),
        rate_rs,
        bpp: rate_rs / 3072.0,
        obs: LogisticParams::new(-2.5, 2.0, 1.5, -4.0),
        sem: LogisticParams::new(0.2, 0.7, 2.0, -3.5),
    }
}

/// `n` codecs with rates 100, 200, ...: more bits buy a lower error-free
/// floor while the fully corrupted distortion stays the same.
pub fn monotone_table(n: usize) -> ModelTable {
    let models = (0..n)
        .map(|i| {
            let t = i as f64;
            SourceModel {
                model_id: format!("m{:02}", i + 1),
                rate_rs: 100.0 * (t + 1.0),
                bpp: 0.02 + 0.14 * t,
                obs: LogisticParams::new(-1.0 - 0.25 * t, 1.2 + 0.25 * t, 1.5, -3.5),
                sem: LogisticParams::new(0.45 - 0.04 * t, 0.5 + 0.04 * t, 2.0, -3.5),
            }
        })
        .collect();
    ModelTable::new(models).unwrap()
}
