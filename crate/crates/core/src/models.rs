//! Domain data model: sub-channels, source-codec fingerprints, coding schemes,
//! the model look-up table and the allocation record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// One parallel Gaussian sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Linear power gain `|h|^2`.
    pub gain_sq: f64,
    /// Noise variance in watts.
    pub noise_var: f64,
}

impl ChannelSpec {
    pub fn new(gain_sq: f64, noise_var: f64) -> Result<Self> {
        let c = ChannelSpec { gain_sq, noise_var };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_sq >= 0.0) || !self.gain_sq.is_finite() {
            return Err(Error::invalid("gain_sq", format!("must be finite and >= 0, got {}", self.gain_sq)));
        }
        if !(self.noise_var > 0.0) || !self.noise_var.is_finite() {
            return Err(Error::invalid("noise_var", format!("must be finite and > 0, got {}", self.noise_var)));
        }
        Ok(())
    }

    /// Gain-to-noise ratio `|h|^2 / sigma^2`; SNR per watt.
    pub fn gnr(&self) -> f64 {
        self.gain_sq / self.noise_var
    }
}

/// Received SNR `|h|^2 P / sigma^2`.
pub fn snr(channel: &ChannelSpec, power: f64) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::domain(format!("power must be >= 0, got {power}")));
    }
    Ok(channel.gnr() * power)
}

/// The four parameters of a generalized logistic in `x = log10(BER)`:
/// `base + span / (1 + exp(-slope (x - mid)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub base: f64,
    pub span: f64,
    pub slope: f64,
    pub mid: f64,
}

impl LogisticParams {
    pub fn new(base: f64, span: f64, slope: f64, mid: f64) -> Self {
        LogisticParams { base, span, slope, mid }
    }

    /// Evaluate at `x = log10(BER)`; total on the real line.
    pub fn eval(&self, x: f64) -> f64 {
        let z = -self.slope * (x - self.mid);
        if z > 700.0 {
            // 1/(1+e^z) underflows; keep the base exact
            return self.base + self.span * (-z).exp();
        }
        self.base + self.span / (1.0 + z.exp())
    }

    /// `d/dx` of [`eval`](Self::eval).
    pub fn derivative(&self, x: f64) -> f64 {
        let s = sigmoid(self.slope * (x - self.mid));
        self.span * self.slope * s * (1.0 - s)
    }

    /// Fraction of the span reached at `x`, i.e. `1/(1+exp(-slope (x-mid)))`.
    pub fn fraction(&self, x: f64) -> f64 {
        sigmoid(self.slope * (x - self.mid))
    }

    /// Natural log of the fraction, stable for very negative `x`.
    pub fn ln_fraction(&self, x: f64) -> f64 {
        let u = self.slope * (x - self.mid);
        // ln sigmoid(u) = -softplus(-u)
        -softplus(-u)
    }

    fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [("base", self.base), ("span", self.span), ("slope", self.slope), ("mid", self.mid)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{field}.{name}"), "must be finite"));
            }
        }
        if self.span < 0.0 {
            return Err(Error::invalid(format!("{field}.span"), "must be >= 0"));
        }
        if !(self.slope > 0.0) {
            return Err(Error::invalid(format!("{field}.slope"), "must be > 0"));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp()
    } else {
        u.exp().ln_1p()
    }
}

/// Fingerprint of one pre-trained semantic codec: its source rate and the two
/// distortion-vs-BER curves. The observation curve lives in log10-distortion
/// space, the semantic curve in linear (Hamming) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub model_id: String,
    /// Bits per source sample.
    pub rate_rs: f64,
    /// Bits per pixel; informational only.
    pub bpp: f64,
    pub obs: LogisticParams,
    pub sem: LogisticParams,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        if self.model_id.is_empty() {
            return Err(Error::invalid("model_id", "must be nonempty"));
        }
        if !(self.rate_rs > 0.0) || !self.rate_rs.is_finite() {
            return Err(Error::invalid(
                format!("{}.rate_rs", self.model_id),
                format!("must be finite and > 0, got {}", self.rate_rs),
            ));
        }
        self.obs.validate(&format!("{}.obs", self.model_id))?;
        self.sem.validate(&format!("{}.sem", self.model_id))?;
        if self.sem.base < -1e-9 || self.sem.base + self.sem.span > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("{}.sem", self.model_id), "base and base + span must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Look-up table of source models, strictly increasing in source rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTable {
    #[serde(rename = "models")]
    entries: Vec<SourceModel>,
}

impl ModelTable {
    pub fn new(entries: Vec<SourceModel>) -> Result<Self> {
        let t = ModelTable { entries };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("models", "table must be nonempty"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, m) in self.entries.iter().enumerate() {
            m.validate()?;
            if !seen.insert(m.model_id.as_str()) {
                return Err(Error::invalid("model_id", format!("duplicate model_id '{}'", m.model_id)));
            }
            if i > 0 && !(m.rate_rs > self.entries[i - 1].rate_rs) {
                return Err(Error::invalid(
                    format!("{}.rate_rs", m.model_id),
                    "rate_rs must be strictly increasing through the table",
                ));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[SourceModel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<&SourceModel> {
        self.entries.iter().find(|m| m.model_id == model_id)
    }

    /// Insert a model keeping the rate ordering; fails on any invariant break.
    pub fn insert(&mut self, model: SourceModel) -> Result<()> {
        let pos = self.entries.partition_point(|m| m.rate_rs < model.rate_rs);
        let mut entries = self.entries.clone();
        entries.insert(pos, model);
        let t = ModelTable::new(entries)?;
        *self = t;
        Ok(())
    }
}

/// Regression coefficients of the practical-coding BER model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PracticalCoeffs {
    pub lam1: f64,
    pub lam2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Channel coding scheme used on every sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodingScheme {
    /// Finite-blocklength random coding; symbols per block.
    Random { blocklength: u32 },
    /// A practical code with M-QAM and the fitted log-linear BER model.
    Practical {
        blocklength: u32,
        mod_order: u32,
        #[serde(flatten)]
        coeffs: PracticalCoeffs,
    },
}

impl CodingScheme {
    pub fn blocklength(&self) -> u32 {
        match *self {
            CodingScheme::Random { blocklength } => blocklength,
            CodingScheme::Practical { blocklength, .. } => blocklength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocklength() < 2 {
            return Err(Error::invalid("scheme.blocklength", "must be >= 2"));
        }
        if let CodingScheme::Practical { mod_order, coeffs, .. } = self {
            if *mod_order < 2 {
                return Err(Error::invalid("scheme.mod_order", "must be >= 2"));
            }
            for v in [coeffs.lam1, coeffs.lam2, coeffs.mu1, coeffs.mu2] {
                if !v.is_finite() {
                    return Err(Error::invalid("scheme coefficients", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Everything that defines one allocation instance apart from the source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub channels: Vec<ChannelSpec>,
    /// Total power budget, watts.
    pub p_max: f64,
    /// Maximum average channel uses per source sample.
    pub l_max: f64,
    /// Observation dimension, used only to report the bandwidth ratio.
    pub m1_dim: f64,
    /// Weight on the observation distortion; `1 - alpha` goes to the semantic one.
    pub alpha: f64,
    pub scheme: CodingScheme,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("channels", "need at least one channel"));
        }
        for c in &self.channels {
            c.validate()?;
        }
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(Error::invalid("p_max", format!("must be > 0, got {}", self.p_max)));
        }
        if !(self.l_max > 0.0) || !self.l_max.is_finite() {
            return Err(Error::invalid("l_max", format!("must be > 0, got {}", self.l_max)));
        }
        if !(self.m1_dim > 0.0) {
            return Err(Error::invalid("m1_dim", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        self.scheme.validate()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Sum rate `K R_s / L_max` every allocation for `model` must reach.
    pub fn required_rate_sum(&self, model: &SourceModel) -> f64 {
        self.num_channels() as f64 * model.rate_rs / self.l_max
    }

    /// SNR of channel `k` at power `p` (no validation).
    pub fn snr_at(&self, k: usize, p: f64) -> f64 {
        self.channels[k].gnr() * p
    }
}

/// Average channel uses per source sample, `K R_s / sum(R_c)`.
pub fn average_channel_uses(rate_rs: f64, rates: &[f64]) -> Result<f64> {
    if !(rate_rs > 0.0) {
        return Err(Error::domain(format!("rate_rs must be > 0, got {rate_rs}")));
    }
    if rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::domain("channel coding rates must be >= 0"));
    }
    let sum: f64 = rates.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::domain("at least one channel coding rate must be > 0"));
    }
    Ok(rates.len() as f64 * rate_rs / sum)
}

/// A complete decision plus the model's predictions at that decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub model: SourceModel,
    /// Watts per channel.
    pub powers: Vec<f64>,
    /// Channel coding rates, bits per channel use.
    pub rates: Vec<f64>,
    /// Predicted BER, clamped to at most 0.5.
    pub ber: Vec<f64>,
    /// Predicted log10 BER (clamped to at most log10 0.5; may be far below the
    /// smallest positive double).
    pub log10_ber: Vec<f64>,
    /// Predicted log10 observation distortion per channel.
    pub d_obs_log: Vec<f64>,
    /// Predicted semantic distortion per channel.
    pub d_sem: Vec<f64>,
    /// Weighted average distortion.
    pub d_ave: f64,
    /// Average bandwidth ratio `L_ave / M1`.
    pub abr: f64,
}

impl Allocation {
    /// Check the feasibility invariants against `config`.
    pub fn check_feasible(&self, config: &LinkConfig) -> Result<()> {
        let k = config.num_channels();
        if self.powers.len() != k || self.rates.len() != k {
            return Err(Error::invalid("allocation", "length does not match channel count"));
        }
        let p_sum: f64 = self.powers.iter().sum();
        if p_sum > config.p_max + 1e-8 {
            return Err(Error::invalid("powers", format!("sum {p_sum} exceeds budget {}", config.p_max)));
        }
        for i in 0..k {
            if self.powers[i] < 0.0 || self.rates[i] < 0.0 {
                return Err(Error::invalid("allocation", "negative power or rate"));
            }
            let cap = numerics::capacity(config.snr_at(i, self.powers[i]))?;
            if self.rates[i] > cap + 1e-8 {
                return Err(Error::invalid(
                    format!("rates[{i}]"),
                    format!("rate {} exceeds capacity {cap}", self.rates[i]),
                ));
            }
        }
        let uses = average_channel_uses(self.model.rate_rs, &self.rates)?;
        if uses > config.l_max * (1.0 + 1e-6) {
            return Err(Error::invalid("rates", format!("average channel uses {uses} exceed l_max {}", config.l_max)));
        }
        Ok(())
    }

    /// Channels carrying more than `10 * R_MIN` bits per use.
    pub fn active_channels(&self) -> usize {
        self.rates.iter().filter(|&&r| r > 10.0 * crate::optimizer::R_MIN).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_channel_uses_examples() {
        assert_eq!(average_channel_uses(1000.0, &[0.5, 0.5]).unwrap(), 2000.0);
        assert_eq!(average_channel_uses(300.0, &[0.6]).unwrap(), 500.0);
        assert_eq!(average_channel_uses(2048.0, &[0.25; 4]).unwrap(), 8192.0);
        assert!(average_channel_uses(1000.0, &[0.0, 0.0]).is_err());
        assert!(average_channel_uses(0.0, &[1.0]).is_err());
    }

    #[test]
    fn average_channel_uses_is_homogeneous() {
        let rates = [0.3, 0.7, 1.1];
        let base = average_channel_uses(512.0, &rates).unwrap();
        for c in [0.1, 2.0, 17.0] {
            let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
            let v = average_channel_uses(512.0, &scaled).unwrap();
            assert!((v - base / c).abs() < 1e-9 * base);
        }
    }

    #[test]
    fn snr_examples() {
        let unit = ChannelSpec::new(1.0, 1.0).unwrap();
        assert_eq!(snr(&unit, 1.0).unwrap(), 1.0);
        assert_eq!(snr(&unit, 0.0).unwrap(), 0.0);
        let strong = ChannelSpec::new(2.0748, 1.0).unwrap();
        assert_eq!(snr(&strong, 1.0).unwrap(), 2.0748);
        assert!(snr(&unit, -1.0).is_err());
        assert!(ChannelSpec::new(1.0, 0.0).is_err());
        assert!(ChannelSpec::new(-1.0, 1.0).is_err());
    }

    fn model(id: &str, rs: f64) -> SourceModel {
        SourceModel {
            model_id: id.into(),
            rate_rs: rs,
            bpp: rs / 65536.0,
            obs: LogisticParams::new(-3.0, 2.0, 2.0, -5.0),
            sem: LogisticParams::new(0.2, 0.75, 3.0, -4.0),
        }
    }

    #[test]
    fn table_validation() {
        assert!(ModelTable::new(vec![]).is_err());
        assert!(ModelTable::new(vec![model("a", 10.0), model("a", 20.0)]).is_err());
        assert!(ModelTable::new(vec![model("a", 20.0), model("b", 10.0)]).is_err());
        let mut t = ModelTable::new(vec![model("a", 10.0), model("c", 30.0)]).unwrap();
        t.insert(model("b", 20.0)).unwrap();
        let ids: Vec<&str> = t.entries().iter().map(|m| m.model_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(t.insert(model("d", 20.0)).is_err());
        for m in t.entries() {
            assert_eq!(t.get(&m.model_id), Some(m));
        }
        let mut bad = model("x", 1.0);
        bad.sem = LogisticParams::new(0.5, 0.6, 1.0, -3.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn logistic_is_stable_far_from_mid() {
        let p = LogisticParams::new(-3.0, 2.0, 8.0, -5.0);
        assert_eq!(p.eval(-1e6), -3.0);
        assert!((p.eval(1e6) - -1.0).abs() < 1e-15);
        assert!((p.ln_fraction(-300.0) - (8.0 * (-295.0))).abs() < 1e-9);
        assert!(p.ln_fraction(1e3) <= 0.0);
    }
}
