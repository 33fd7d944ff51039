//! Experiment configuration and runners: BER sweeps, certification, spectra
//! and an end-to-end decoding demo.
//!
//! Monte-Carlo work is split into frames. A frame is an independent
//! transmission of `frame_blocks` code blocks, decoded on its own. Frame `b`
//! of SNR point `i` draws all randomness from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `(i << 32) | b`, so results do
//! not depend on which worker ran it. Frames run in fixed-size waves and the
//! stopping rule is checked between waves, which makes a sweep reproducible
//! for any worker count.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    diversity_scan_exhaustive, diversity_scan_random, factored_signal, gram_check, midpoint_grid,
    psd_estimate, BandwidthRule, DiversityScan, KeyValue, SpectrumReport,
};
use crate::channel::{apply, draw_channel, ChannelRealization, SnrSpec};
use crate::cpm::{CpmParams, PulseKind, PulseShape};
use crate::encoder::{
    bits_to_symbols, encode_stream, encode_symbols, symbols_to_bits, CorrectionKind, CorrectionScheme,
    SolutionBranch,
};
use crate::error::{Error, Result};
use crate::receiver::Receiver;

/// Frames simulated between two checks of the stopping rule.
pub const WAVE_FRAMES: usize = 8;

/// Points with fewer errors than this are flagged as low confidence.
pub const LOW_CONFIDENCE_ERRORS: u64 = 100;

/// Flat experiment description, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alphabet_size: u32,
    pub mod_index_num: u32,
    pub mod_index_den: u32,
    pub pulse: PulseKind,
    pub memory_len: usize,
    pub samples_per_symbol: usize,
    pub symbol_duration: f64,
    pub symbol_energy: f64,
    pub scheme: CorrectionKind,
    pub branch: SolutionBranch,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Initial phase of each antenna in cycles; empty means all zero.
    pub initial_phases: Vec<f64>,
    /// `Eb/N0` grid in dB, ascending.
    pub snr_db: Vec<f64>,
    pub target_errors: u64,
    pub max_blocks: u64,
    pub frame_blocks: usize,
    /// Viterbi path memory in code blocks; 0 disables truncation.
    pub truncation_depth: usize,
    /// Fading coherence in symbol slots; 0 means one code block.
    pub fading_slots: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub certify_blocks: usize,
    pub diversity_symbols: usize,
    pub diversity_pairs: usize,
    pub psd_symbols: usize,
    /// `Eb/N0` of the decoding demo; omitted means noiseless.
    pub demo_snr_db: Option<f64>,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alphabet_size: 4,
            mod_index_num: 1,
            mod_index_den: 4,
            pulse: PulseKind::Rec,
            memory_len: 2,
            samples_per_symbol: 8,
            symbol_duration: 1.0,
            symbol_energy: 1.0,
            scheme: CorrectionKind::LinPc,
            branch: SolutionBranch::Primary,
            n_tx: 3,
            n_rx: 1,
            initial_phases: Vec::new(),
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            target_errors: 200,
            max_blocks: 200_000,
            frame_blocks: 100,
            truncation_depth: 10,
            fading_slots: 0,
            seed: 1,
            workers: 1,
            certify_blocks: 256,
            diversity_symbols: 3,
            diversity_pairs: 10_000,
            psd_symbols: 1 << 14,
            demo_snr_db: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn params(&self) -> Result<CpmParams> {
        let pulse = PulseShape { kind: self.pulse, length: self.memory_len };
        let mut p = CpmParams::new(
            self.alphabet_size,
            self.mod_index_num,
            self.mod_index_den,
            pulse,
            self.samples_per_symbol,
        )?;
        p.symbol_duration = self.symbol_duration;
        p.symbol_energy = self.symbol_energy;
        p.validate()?;
        Ok(p)
    }

    pub fn scheme(&self) -> Result<CorrectionScheme> {
        let params = self.params()?;
        CorrectionScheme::new(self.scheme, &params, self.n_tx, self.branch)
    }

    pub fn initial_phases(&self) -> Result<Vec<f64>> {
        match self.initial_phases.len() {
            0 => Ok(vec![0.0; self.n_tx]),
            n if n == self.n_tx => Ok(self.initial_phases.clone()),
            n => Err(Error::Config(format!("{n} initial phases for {} antennas", self.n_tx))),
        }
    }

    /// Code blocks sharing one fading realization.
    pub fn blocks_per_fade(&self) -> Result<usize> {
        if self.fading_slots == 0 {
            return Ok(1);
        }
        if !self.fading_slots.is_multiple_of(self.n_tx) {
            return Err(Error::Config(format!(
                "fading_slots = {} is not a multiple of the block length {}",
                self.fading_slots, self.n_tx
            )));
        }
        Ok(self.fading_slots / self.n_tx)
    }

    /// Checks everything a BER sweep needs.
    pub fn validate_sweep(&self) -> Result<()> {
        self.params()?;
        self.scheme()?;
        self.initial_phases()?;
        self.blocks_per_fade()?;
        if self.snr_db.is_empty() {
            return Err(Error::Config("empty SNR grid".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) || self.snr_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("SNR grid must be finite and strictly ascending".into()));
        }
        if self.n_rx == 0 || self.frame_blocks == 0 || self.max_blocks == 0 || self.target_errors == 0 {
            return Err(Error::Config("n_rx, frame_blocks, max_blocks and target_errors must be positive".into()));
        }
        Ok(())
    }

    fn truncation(&self) -> Option<usize> {
        (self.truncation_depth > 0).then_some(self.truncation_depth)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

/// Wilson score interval for `errors` successes out of `trials` at 95 %.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the lower bound is exactly 0 with no errors; skip the rounding residue
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    (lo, (centre + half).min(1.0))
}

/// Wilson interval widened for error clustering.
///
/// Bit errors under block fading arrive in bursts, so the bit-level binomial
/// interval is too narrow. Frames are independent: the design effect
/// `deff = Var_frames(p̂) / Var_binomial(p̂)` is estimated from per-frame error
/// counts (`sum_errors`, `sum_sq_errors` over `frames` frames of
/// `bits_per_frame` bits) and the Wilson interval is evaluated at the
/// effective sample size `bits/deff`. Returns `(lo, hi, deff)`.
pub fn clustered_interval(sum_errors: u64, sum_sq_errors: f64, frames: u64, bits_per_frame: u64) -> (f64, f64, f64) {
    let bits = frames * bits_per_frame;
    if sum_errors == 0 || frames < 2 {
        let (lo, hi) = wilson_interval(sum_errors, bits);
        return (lo, hi, 1.0);
    }
    let (f, e, n) = (frames as f64, sum_errors as f64, bits as f64);
    let p = e / n;
    let var_frames = f / (f - 1.0) * (sum_sq_errors - e * e / f) / (n * n);
    let var_binomial = p * (1.0 - p) / n;
    let deff = (var_frames / var_binomial).max(1.0);
    const Z: f64 = 1.959_963_984_540_054;
    let n_eff = n / deff;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_eff;
    let centre = (p + z2 / (2.0 * n_eff)) / denom;
    let half = Z * (p * (1.0 - p) / n_eff + z2 / (4.0 * n_eff * n_eff)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0), deff)
}

/// One point of a BER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub scheme: CorrectionKind,
    pub n_tx: usize,
    pub n_rx: usize,
    pub eb_n0_db: f64,
    pub errors: u64,
    pub bits: u64,
    pub blocks: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// 95 % interval accounting for errors clustered within frames.
    pub ci_lo_clustered: f64,
    pub ci_hi_clustered: f64,
    /// Variance inflation of the BER estimate over the bit-level binomial model.
    pub design_effect: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Column order of [`BerRecord::csv_row`].
pub const BER_CSV_HEADER: &str = "scheme,L_t,L_r,eb_n0_db,errors,bits,ber,ci_lo,ci_hi,seed";

impl BerRecord {
    pub fn low_confidence(&self) -> bool {
        self.errors < LOW_CONFIDENCE_ERRORS
    }

    /// CSV row without wall time, so output is reproducible byte for byte.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{}",
            self.scheme, self.n_tx, self.n_rx, self.eb_n0_db, self.errors, self.bits, self.ber, self.ci_lo,
            self.ci_hi, self.seed
        )
    }
}

pub fn ber_csv(records: &[BerRecord]) -> String {
    let mut out = String::from(BER_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Everything a frame simulation needs, shared read-only by all workers.
struct FrameContext<'a> {
    params: CpmParams,
    scheme: &'a CorrectionScheme,
    receiver: &'a Receiver,
    initial_phases: &'a [f64],
    n_rx: usize,
    frame_blocks: usize,
    blocks_per_fade: usize,
    truncation: Option<usize>,
}

/// Draws a channel for every block, reusing each for `blocks_per_fade` blocks.
fn block_channels<R: Rng + ?Sized>(
    rng: &mut R,
    n_rx: usize,
    n_tx: usize,
    n_blocks: usize,
    blocks_per_fade: usize,
    n0: f64,
) -> Vec<ChannelRealization> {
    let mut out = Vec::with_capacity(n_blocks);
    let mut current = draw_channel(rng, n_rx, n_tx, n0);
    for b in 0..n_blocks {
        if b > 0 && b % blocks_per_fade == 0 {
            current = draw_channel(rng, n_rx, n_tx, n0);
        }
        out.push(current.clone());
    }
    out
}

/// Simulates one frame; returns (bit errors, bits).
fn simulate_frame(ctx: &FrameContext<'_>, n0: f64, rng: &mut ChaCha8Rng) -> Result<(u64, u64)> {
    let params = &ctx.params;
    let n_tx = ctx.scheme.n_tx;
    let m = params.alphabet_size as usize;
    let symbols: Vec<i32> =
        (0..ctx.frame_blocks * n_tx).map(|_| params.level(rng.random_range(0..m))).collect();
    let blocks = encode_symbols(params, ctx.scheme, &symbols, ctx.initial_phases)?;
    let chans = block_channels(rng, ctx.n_rx, n_tx, blocks.len(), ctx.blocks_per_fade, n0);
    let mut rx = vec![Vec::with_capacity(symbols.len() * params.samples_per_symbol); ctx.n_rx];
    for (b, c) in blocks.iter().zip(&chans) {
        for (acc, y) in rx.iter_mut().zip(apply(&b.samples, c, params, rng)?) {
            acc.extend(y);
        }
    }
    let decoded = ctx.receiver.decode(&rx, &chans, ctx.truncation)?;
    let sent = symbols_to_bits(&symbols, params.alphabet_size)?;
    let errors = sent.iter().zip(&decoded.bits).filter(|(a, b)| a != b).count() as u64;
    Ok((errors, sent.len() as u64))
}

fn unit_rng(seed: u64, point: usize, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | frame as u64);
    rng
}

/// Runs the BER sweep described by `cfg`. `progress` is called after each point.
pub fn ber_sweep(cfg: &ExperimentConfig, mut progress: impl FnMut(&BerRecord)) -> Result<Vec<BerRecord>> {
    cfg.validate_sweep()?;
    let params = cfg.params()?;
    let scheme = cfg.scheme()?;
    let init = cfg.initial_phases()?;
    let receiver = Receiver::new(&params, &scheme, &init)?;
    let ctx = FrameContext {
        params,
        scheme: &scheme,
        receiver: &receiver,
        initial_phases: &init,
        n_rx: cfg.n_rx,
        frame_blocks: cfg.frame_blocks,
        blocks_per_fade: cfg.blocks_per_fade()?,
        truncation: cfg.truncation(),
    };
    let pool = cfg.pool()?;
    let mut records = Vec::with_capacity(cfg.snr_db.len());
    for (point, &snr) in cfg.snr_db.iter().enumerate() {
        let start = Instant::now();
        let n0 = SnrSpec::new(snr)?.n0(&params);
        let max_frames = cfg.max_blocks.div_ceil(cfg.frame_blocks as u64) as usize;
        let (mut errors, mut bits, mut frames) = (0u64, 0u64, 0usize);
        let mut sum_sq = 0.0f64;
        while frames < max_frames && errors < cfg.target_errors {
            let wave = WAVE_FRAMES.min(max_frames - frames);
            let results: Vec<(u64, u64)> = pool.install(|| {
                (frames..frames + wave)
                    .into_par_iter()
                    .map(|f| simulate_frame(&ctx, n0, &mut unit_rng(cfg.seed, point, f)))
                    .collect::<Result<_>>()
            })?;
            for (e, b) in results {
                sum_sq += (e * e) as f64;
                errors += e;
                bits += b;
            }
            frames += wave;
        }
        let (ci_lo, ci_hi) = wilson_interval(errors, bits);
        let frame_bits = if frames > 0 { bits / frames as u64 } else { 0 };
        let (ci_lo_clustered, ci_hi_clustered, design_effect) =
            clustered_interval(errors, sum_sq, frames as u64, frame_bits);
        let record = BerRecord {
            scheme: scheme.kind,
            n_tx: scheme.n_tx,
            n_rx: cfg.n_rx,
            eb_n0_db: snr,
            errors,
            bits,
            blocks: (frames * cfg.frame_blocks) as u64,
            ber: if bits > 0 { errors as f64 / bits as f64 } else { 0.0 },
            ci_lo,
            ci_hi,
            ci_lo_clustered,
            ci_hi_clustered,
            design_effect,
            seed: cfg.seed,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        records.push(record);
    }
    Ok(records)
}

/// Least-squares slope of `log10(BER)` against `Eb/N0` (dB), returned as
/// dB per decade (positive for a falling curve). Points with zero errors are skipped.
pub fn db_per_decade(records: &[BerRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.errors > 0).map(|r| (r.eb_n0_db, r.ber.log10())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

// ---------------------------------------------------------------- certification

/// Thresholds of the certification run, relative to `E_s`.
pub const GRAM_TOLERANCE: f64 = 1e-9;
pub const FACTORED_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub scheme: CorrectionKind,
    pub n_tx: usize,
    pub perturbation: f64,
    pub blocks: usize,
    pub max_off_diagonal_rel: f64,
    pub max_diagonal_dev_rel: f64,
    pub diversity: Option<DiversityScan>,
    pub factored_max_error: f64,
    pub notices: Vec<String>,
}

impl CertifyReport {
    pub fn orthogonality_pass(&self) -> bool {
        self.max_off_diagonal_rel <= GRAM_TOLERANCE && self.max_diagonal_dev_rel <= GRAM_TOLERANCE
    }

    pub fn diversity_pass(&self) -> bool {
        self.diversity.as_ref().is_none_or(|d| d.rank_failures == 0)
    }

    pub fn factored_pass(&self) -> bool {
        self.factored_max_error <= FACTORED_TOLERANCE
    }

    pub fn pass(&self) -> bool {
        self.orthogonality_pass() && self.diversity_pass() && self.factored_pass()
    }
}

impl KeyValue for CertifyReport {
    fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("scheme".into(), self.scheme.to_string()),
            ("n_tx".into(), self.n_tx.to_string()),
            ("perturbation".into(), self.perturbation.to_string()),
            ("gram_blocks".into(), self.blocks.to_string()),
            ("gram_max_off_diagonal_rel".into(), format!("{:e}", self.max_off_diagonal_rel)),
            ("gram_max_diagonal_dev_rel".into(), format!("{:e}", self.max_diagonal_dev_rel)),
            ("orthogonality".into(), pass_str(self.orthogonality_pass()).into()),
        ];
        match &self.diversity {
            Some(d) => {
                kv.extend(d.key_values().into_iter().map(|(k, v)| (format!("diversity_{k}"), v)));
                kv.push(("diversity".into(), pass_str(self.diversity_pass()).into()));
            }
            None => kv.push(("diversity".into(), "skipped".into())),
        }
        kv.push(("factored_max_error".into(), format!("{:e}", self.factored_max_error)));
        kv.push(("factored".into(), pass_str(self.factored_pass()).into()));
        for n in &self.notices {
            kv.push(("notice".into(), n.clone()));
        }
        kv.push(("result".into(), pass_str(self.pass()).into()));
        kv
    }
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

/// Random symbols for certification.
fn random_symbols<R: Rng + ?Sized>(params: &CpmParams, n: usize, rng: &mut R) -> Vec<i32> {
    let m = params.alphabet_size as usize;
    (0..n).map(|_| params.level(rng.random_range(0..m))).collect()
}

/// Largest sample-wise gap between the recursive encoder and the factored form.
pub fn factored_consistency(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    symbols: &[i32],
    initial_phases: &[f64],
) -> Result<f64> {
    let blocks = encode_symbols(params, scheme, symbols, initial_phases)?;
    let grid = midpoint_grid(params, symbols.len());
    let fact = factored_signal(params, scheme, symbols, initial_phases, &grid)?;
    let mut worst = 0.0f64;
    for (m, f) in fact.iter().enumerate() {
        let rec = blocks.iter().flat_map(|b| b.samples[m].iter());
        for (a, b) in rec.zip(f) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Orthogonality over `certify_blocks` random blocks, the diversity scan and
/// the factored-form check. `perturbation` (cycles per slot, normally 0)
/// detunes the first antenna as a negative control.
pub fn certify(cfg: &ExperimentConfig, perturbation: f64) -> Result<CertifyReport> {
    let params = cfg.params()?;
    let mut scheme = cfg.scheme()?;
    if perturbation != 0.0 {
        scheme = scheme.perturbed(&params, perturbation);
    }
    let init = cfg.initial_phases()?;
    let n_tx = scheme.n_tx;
    let mut rng = unit_rng(cfg.seed, usize::MAX >> 32, 0);
    let mut notices = Vec::new();

    let symbols = random_symbols(&params, cfg.certify_blocks * n_tx, &mut rng);
    let blocks = encode_symbols(&params, &scheme, &symbols, &init)?;
    let (mut off, mut diag) = (0.0f64, 0.0f64);
    for b in &blocks {
        let g = gram_check(&params, b);
        off = off.max(g.off_diagonal_ratio());
        diag = diag.max(g.diagonal_ratio());
    }
    if n_tx == 1 {
        notices.push("single antenna: orthogonality is trivial and the diversity scan is skipped".into());
    }

    let diversity = if n_tx == 1 {
        None
    } else {
        let n_c = cfg.diversity_symbols;
        let seqs = (params.alphabet_size as f64).powi(n_c as i32);
        if seqs * seqs <= 1e5 {
            Some(diversity_scan_exhaustive(&params, &scheme, n_c, &init)?)
        } else {
            Some(diversity_scan_random(&params, &scheme, n_c, cfg.diversity_pairs, &init, &mut rng)?)
        }
    };

    let fact_symbols = random_symbols(&params, 8 * n_tx, &mut rng);
    let factored_max_error = factored_consistency(&params, &scheme, &fact_symbols, &init)?;

    Ok(CertifyReport {
        scheme: scheme.kind,
        n_tx,
        perturbation,
        blocks: blocks.len(),
        max_off_diagonal_rel: off,
        max_diagonal_dev_rel: diag,
        diversity,
        factored_max_error,
        notices,
    })
}

// ---------------------------------------------------------------- spectrum

/// Spectrum of every antenna of the configured scheme.
pub fn run_psd(cfg: &ExperimentConfig, rule: BandwidthRule) -> Result<Vec<SpectrumReport>> {
    let params = cfg.params()?;
    let scheme = cfg.scheme()?;
    (0..scheme.n_tx)
        .map(|m| {
            let mut rng = unit_rng(cfg.seed, usize::MAX >> 33, m);
            psd_estimate(&params, &scheme, m, cfg.psd_symbols, rule, &mut rng)
        })
        .collect()
}

// ---------------------------------------------------------------- decoding demo

/// Result of [`decode_demo`].
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub input_bits: usize,
    pub decoded_bits: Vec<u8>,
    pub bit_errors: usize,
    pub symbol_errors: usize,
    pub symbols: usize,
    pub padded_bits: usize,
    /// One line per block.
    pub trace: String,
}

impl DemoReport {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.input_bits.max(1) as f64
    }

    pub fn ser(&self) -> f64 {
        self.symbol_errors as f64 / self.symbols.max(1) as f64
    }
}

impl KeyValue for DemoReport {
    fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("bits".into(), self.input_bits.to_string()),
            ("padded_bits".into(), self.padded_bits.to_string()),
            ("bit_errors".into(), self.bit_errors.to_string()),
            ("ber".into(), format!("{:e}", self.ber())),
            ("symbols".into(), self.symbols.to_string()),
            ("symbol_errors".into(), self.symbol_errors.to_string()),
            ("ser".into(), format!("{:e}", self.ser())),
        ]
    }
}

/// Parses a bit file: `0`/`1` characters, whitespace ignored.
pub fn parse_bits(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Config(format!("bit file contains `{other}`"))),
        })
        .collect()
}

pub fn format_bits(bits: &[u8]) -> String {
    let mut s: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
    s.push('\n');
    s
}

/// Encode → channel → decode for a given bit stream.
pub fn decode_demo(cfg: &ExperimentConfig, bits: &[u8]) -> Result<DemoReport> {
    let params = cfg.params()?;
    let scheme = cfg.scheme()?;
    let init = cfg.initial_phases()?;
    let n_tx = scheme.n_tx;
    let stream = encode_stream(&params, &scheme, bits, &init)?;
    let n0 = match cfg.demo_snr_db {
        Some(db) => SnrSpec::new(db)?.n0(&params),
        None => 0.0,
    };
    let mut rng = unit_rng(cfg.seed, usize::MAX >> 34, 0);
    let chans = block_channels(&mut rng, cfg.n_rx.max(1), n_tx, stream.blocks.len(), cfg.blocks_per_fade()?, n0);
    let mut rx = vec![Vec::new(); cfg.n_rx.max(1)];
    for (b, c) in stream.blocks.iter().zip(&chans) {
        for (acc, y) in rx.iter_mut().zip(apply(&b.samples, c, &params, &mut rng)?) {
            acc.extend(y);
        }
    }
    let receiver = Receiver::new(&params, &scheme, &init)?;
    let decoded = receiver.decode(&rx, &chans, cfg.truncation())?;
    let sent_bits = symbols_to_bits(&stream.symbols, params.alphabet_size)?;
    debug_assert_eq!(bits_to_symbols(&sent_bits, params.alphabet_size)?, stream.symbols);

    let mut trace = String::from("block,sent,decoded,symbol_errors,channel_gain\n");
    for (l, (b, c)) in stream.blocks.iter().zip(&chans).enumerate() {
        let dec = &decoded.symbols[l * n_tx..(l + 1) * n_tx];
        let errs = b.symbols.iter().zip(dec).filter(|(a, b)| a != b).count();
        let gain: f64 = c.gains.iter().flatten().map(|a| a.norm_sqr()).sum();
        let join = |s: &[i32]| s.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(trace, "{l},{},{},{errs},{gain:.6}", join(&b.symbols), join(dec));
    }
    let symbol_errors = stream.symbols.iter().zip(&decoded.symbols).filter(|(a, b)| a != b).count();
    let decoded_bits = decoded.bits[..bits.len()].to_vec();
    let bit_errors = bits.iter().zip(&decoded_bits).filter(|(a, b)| a != b).count();
    Ok(DemoReport {
        input_bits: bits.len(),
        decoded_bits,
        bit_errors,
        symbol_errors,
        symbols: stream.symbols.len(),
        padded_bits: stream.padded_bits,
        trace,
    })
}

/// Loads a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text)
}
