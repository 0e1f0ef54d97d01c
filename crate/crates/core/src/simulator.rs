//! Seeded Monte Carlo check of an allocation against the error model.
//!
//! Every source sample goes to one channel with probability proportional to
//! its rate and is split into `T_k = ceil(B / N_k)` blocks of `N_k = R_k L`
//! bits. Block errors are Bernoulli with the model's block error
//! probability. Under random coding an erroneous block flips exactly one bit;
//! under practical coding it flips each bit with the BER conditioned on at
//! least one flip. The last block of a sample is padded; flips that land in
//! the padding do not touch the source. A random-coding block never carries
//! less than one source bit, so channels parked at the rate floor still flip
//! at most one bit per block.
//!
//! Samples use their own ChaCha stream keyed by the seed, so results do not
//! depend on chunking or thread count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::ber;
use crate::distortion;
use crate::error::{Error, Result};
use crate::models::{Allocation, CodingScheme, LinkConfig, ModelTable, SourceModel};
use crate::numerics::CompensatedSum;
use crate::optimizer::{select_model_with, ScaOptions, SelectionReport};
use crate::par::Exec;

/// Samples per work item; fixed so the reduction order never changes.
const CHUNK: u64 = 4096;

/// How bit errors are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipMode {
    /// Block errors, then flips inside erroneous blocks.
    #[default]
    Block,
    /// Every source bit flips independently with the reported BER.
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_samples: u64,
    pub seed: u64,
    pub mode: FlipMode,
}

impl SimConfig {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        SimConfig { n_samples, seed, mode: FlipMode::Block }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-channel counts and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSim {
    pub samples: u64,
    pub blocks: u64,
    pub block_errors: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub predicted_block_error: f64,
    pub predicted_ber: f64,
    pub empirical_ber: f64,
    /// Wilson 95% interval for the bit error rate.
    pub ber_interval: (f64, f64),
}

impl ChannelSim {
    pub fn empirical_block_error(&self) -> f64 {
        if self.blocks == 0 {
            0.0
        } else {
            self.block_errors as f64 / self.blocks as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_samples: u64,
    pub seed: u64,
    pub channels: Vec<ChannelSim>,
    /// Rate-weighted distortion at the empirical per-channel BERs.
    pub empirical_d_ave: f64,
    /// Delta-method standard error of `empirical_d_ave`.
    pub std_error: f64,
    /// Rate-weighted log10 observation distortion at the empirical BERs.
    pub empirical_log10_d_obs: f64,
    /// Rate-weighted semantic distortion at the empirical BERs.
    pub empirical_d_sem: f64,
    pub predicted_d_ave: f64,
    pub max_abs_gap: f64,
    /// Mean over samples of the distortion at each sample's own BER. This is
    /// not an estimate of the prediction: the distortion curves are nonlinear
    /// in BER and most samples see no error at all.
    pub per_sample_d_ave: f64,
}

/// Block geometry of one channel.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    /// Bits per block (real for random coding).
    n: f64,
    blocks: u64,
    /// Source bits in the last block.
    last: f64,
    block_error: f64,
    ber: f64,
}

fn geometry(alloc: &Allocation, config: &LinkConfig, k: usize, bits: u64) -> Result<Option<Geometry>> {
    let rate = alloc.rates[k];
    if rate <= 0.0 {
        return Ok(None);
    }
    let gamma = config.snr_at(k, alloc.powers[k]);
    let l = config.scheme.blocklength() as f64;
    let (n, random) = match config.scheme {
        CodingScheme::Random { .. } => ((rate * l).max(1.0), true),
        CodingScheme::Practical { .. } => ((rate * l).round().max(1.0), false),
    };
    let blocks = (bits as f64 / n).ceil().max(1.0);
    let last = bits as f64 - (blocks - 1.0) * n;
    let block_error = ber::sim_block_error_prob(&config.scheme, gamma, rate)?;
    Ok(Some(Geometry {
        n,
        blocks: blocks as u64,
        last,
        block_error,
        // one flip per erroneous block of n bits; equals the model BER whenever R L >= 1
        ber: if random { block_error / n } else { alloc.ber[k] },
    }))
}

#[derive(Debug, Clone, Default)]
struct Tally {
    samples: u64,
    blocks: u64,
    block_errors: u64,
    bit_errors: u64,
    /// Sum of squared per-sample flip counts, for the variance.
    flips_sq: u128,
}

#[derive(Debug, Clone, Default)]
struct ChunkStats {
    tallies: Vec<Tally>,
    per_sample_d: CompensatedSum,
}

impl ChunkStats {
    fn merge(&mut self, other: &ChunkStats) {
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.samples += b.samples;
            a.blocks += b.blocks;
            a.block_errors += b.block_errors;
            a.bit_errors += b.bit_errors;
            a.flips_sq += b.flips_sq;
        }
        self.per_sample_d.merge(&other.per_sample_d);
    }
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability checked above").sample(rng)
}

/// Source-bit flips in one erroneous practical-coding block whose first
/// `source` positions carry data.
fn conditional_flips(rng: &mut ChaCha8Rng, g: &Geometry, source: u64) -> u64 {
    let n = g.n as u64;
    let rho = g.ber;
    // first flipped position, given at least one flip
    let u: f64 = rng.random();
    let first = if rho >= 1.0 {
        0
    } else {
        ((-u * g.block_error).ln_1p() / (-rho).ln_1p()).floor().clamp(0.0, (n - 1) as f64) as u64
    };
    let hit = u64::from(first < source);
    let rest = source.min(n).saturating_sub(first + 1);
    hit + binomial(rng, rest, rho)
}

/// Bit flips landing on the source for one sample sent over a channel.
fn sample_flips(rng: &mut ChaCha8Rng, scheme: &CodingScheme, g: &Geometry, bits: u64, mode: FlipMode) -> (u64, u64) {
    if mode == FlipMode::Stream {
        return (0, binomial(rng, bits, g.ber));
    }
    let full = g.blocks - 1;
    let full_errors = binomial(rng, full, g.block_error);
    let last_error = rng.random::<f64>() < g.block_error;
    let errors = full_errors + u64::from(last_error);
    let flips = match scheme {
        CodingScheme::Random { .. } => {
            let last_hit = last_error && rng.random::<f64>() * g.n < g.last;
            full_errors + u64::from(last_hit)
        }
        CodingScheme::Practical { .. } => {
            let n = g.n as u64;
            let mut f = 0;
            for _ in 0..full_errors {
                f += conditional_flips(rng, g, n);
            }
            if last_error {
                f += conditional_flips(rng, g, g.last.round() as u64);
            }
            f
        }
    };
    (errors, flips)
}

fn wilson(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `(log10 D_o, D_s)` at a measured BER; zero maps to the error-free floor.
fn curves_at(model: &SourceModel, ber: f64) -> (f64, f64) {
    if ber > 0.0 {
        let lb = ber.log10();
        (distortion::eval_obs_log10(model, lb), distortion::eval_sem_log10(model, lb))
    } else {
        (distortion::eval_obs_floor(model), distortion::eval_sem_floor(model))
    }
}

fn distortion_at(model: &SourceModel, ber: f64, alpha: f64) -> f64 {
    let (obs, sem) = curves_at(model, ber);
    alpha * 10f64.powf(obs) + (1.0 - alpha) * sem
}

/// Slope of the per-channel distortion with respect to the BER itself.
fn distortion_slope(model: &SourceModel, ber: f64, alpha: f64) -> f64 {
    let lb = ber.log10();
    let obs = model.obs.eval(lb);
    let d_lb = alpha * 10f64.powf(obs) * std::f64::consts::LN_10 * model.obs.derivative(lb)
        + (1.0 - alpha) * model.sem.derivative(lb);
    d_lb / (ber * std::f64::consts::LN_10)
}

/// Simulate `sim.n_samples` source samples through `alloc`.
pub fn simulate(alloc: &Allocation, config: &LinkConfig, sim: &SimConfig, exec: Exec) -> Result<SimReport> {
    sim.validate()?;
    config.validate()?;
    alloc.check_feasible(config)?;
    let k = config.num_channels();
    let model = &alloc.model;
    let bits = model.rate_rs.round().max(1.0) as u64;
    let geo = (0..k).map(|i| geometry(alloc, config, i, bits)).collect::<Result<Vec<_>>>()?;
    let chooser =
        WeightedIndex::new(&alloc.rates).map_err(|e| Error::domain(format!("rates cannot weight samples: {e}")))?;
    let base = ChaCha8Rng::seed_from_u64(sim.seed);
    let alpha = config.alpha;

    let n_chunks = sim.n_samples.div_ceil(CHUNK) as usize;
    let chunks = exec.map(n_chunks, |c| {
        let mut stats = ChunkStats { tallies: vec![Tally::default(); k], ..Default::default() };
        let start = c as u64 * CHUNK;
        let end = (start + CHUNK).min(sim.n_samples);
        for s in start..end {
            let mut rng = base.clone();
            rng.set_stream(s);
            let ch = chooser.sample(&mut rng);
            let g = geo[ch].as_ref().expect("a zero-rate channel has zero sampling weight");
            let (errors, flips) = sample_flips(&mut rng, &config.scheme, g, bits, sim.mode);
            let t = &mut stats.tallies[ch];
            t.samples += 1;
            t.blocks += if sim.mode == FlipMode::Block { g.blocks } else { 0 };
            t.block_errors += errors;
            t.bit_errors += flips;
            t.flips_sq += u128::from(flips) * u128::from(flips);
            stats.per_sample_d.add(distortion_at(model, flips as f64 / bits as f64, alpha));
        }
        stats
    });
    let mut total = ChunkStats { tallies: vec![Tally::default(); k], ..Default::default() };
    for c in &chunks {
        total.merge(c);
    }

    let mut channels = Vec::with_capacity(k);
    let mut emp_bers = Vec::with_capacity(k);
    let mut variance = CompensatedSum::default();
    let rate_sum: f64 = alloc.rates.iter().sum();
    for (i, t) in total.tallies.iter().enumerate() {
        let sent = t.samples * bits;
        let emp = if sent > 0 { t.bit_errors as f64 / sent as f64 } else { 0.0 };
        let (pred_block, pred_ber) = geo[i].map_or((0.0, alloc.ber[i]), |g| (g.block_error, g.ber));
        channels.push(ChannelSim {
            samples: t.samples,
            blocks: t.blocks,
            block_errors: t.block_errors,
            bits: sent,
            bit_errors: t.bit_errors,
            predicted_block_error: pred_block,
            predicted_ber: pred_ber,
            empirical_ber: emp,
            ber_interval: wilson(t.bit_errors, sent),
        });
        emp_bers.push(emp);
        if alloc.rates[i] > 0.0 {
            // variance of the channel's BER estimate from the per-sample flip counts
            let var_est = if t.samples >= 2 {
                let n = t.samples as f64;
                let mean = t.bit_errors as f64 / n;
                let var_flips = ((t.flips_sq as f64) - n * mean * mean).max(0.0) / (n - 1.0);
                var_flips / (n * (bits as f64).powi(2))
            } else {
                // too few samples for a spread; binomial plug-in at the prediction
                let n = t.samples.max(1) as f64 * bits as f64;
                pred_ber * (1.0 - pred_ber) / n
            };
            let w = alloc.rates[i] / rate_sum;
            let coef = (w * distortion_slope(model, pred_ber, alpha)).powi(2);
            if coef > 0.0 {
                variance.add(coef * var_est);
            }
        }
    }
    let (mut d, mut obs, mut sem) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for (i, &b) in emp_bers.iter().enumerate() {
        if alloc.rates[i] > 0.0 {
            let w = alloc.rates[i] / rate_sum;
            let (o, s) = curves_at(model, b);
            d.add(w * distortion_at(model, b, alpha));
            obs.add(w * o);
            sem.add(w * s);
        }
    }
    let empirical_d_ave = d.value();
    let predicted_d_ave = alloc.d_ave;
    Ok(SimReport {
        n_samples: sim.n_samples,
        seed: sim.seed,
        channels,
        empirical_d_ave,
        std_error: variance.value().sqrt(),
        empirical_log10_d_obs: obs.value(),
        empirical_d_sem: sem.value(),
        predicted_d_ave,
        max_abs_gap: (empirical_d_ave - predicted_d_ave).abs(),
        per_sample_d_ave: total.per_sample_d.value() / sim.n_samples as f64,
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub config: LinkConfig,
    /// The selection and, when requested, its simulation; the error text for
    /// points where no model is feasible.
    pub outcome: std::result::Result<(SelectionReport, Option<SimReport>), String>,
}

/// Select a model at every grid point and optionally simulate the winner.
/// Point `i` is simulated with seed `sim.seed + i`.
pub fn sweep(
    grid: &[LinkConfig],
    table: &ModelTable,
    sim: Option<&SimConfig>,
    exec: Exec,
    opts: &ScaOptions,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "needs at least one point"));
    }
    table.validate()?;
    if let Some(s) = sim {
        s.validate()?;
    }
    let points = exec.map(grid.len(), |i| {
        let config = &grid[i];
        let outcome = select_model_with(config, table, Exec::Sequential, opts).and_then(|sel| {
            let report = match sim {
                Some(s) => {
                    let cfg = SimConfig { seed: s.seed.wrapping_add(i as u64), ..*s };
                    Some(simulate(&sel.best.allocation, config, &cfg, Exec::Sequential)?)
                }
                None => None,
            };
            Ok((sel, report))
        });
        SweepPoint { index: i, config: config.clone(), outcome: outcome.map_err(|e| e.to_string()) }
    });
    Ok(points)
}
