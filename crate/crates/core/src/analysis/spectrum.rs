//! Welch power spectral density of one transmit antenna and its bandwidth
//! relative to uncorrected CPM carrying the same data.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::cpm::CpmParams;
use crate::encoder::{build_correction, encode_symbols, CorrectionKind, CorrectionScheme};
use crate::error::{Error, Result};

use super::KeyValue;

/// Fewest symbols accepted by [`psd_estimate`].
pub const MIN_PSD_SYMBOLS: usize = 1 << 14;

/// Segment length in symbols (`1024·N_sps` samples).
pub const SEGMENT_SYMBOLS: usize = 1024;

/// Half-width of the moving average applied before measuring bandwidth,
/// in units of `1/T`.
pub const SMOOTHING_HALF_WIDTH: f64 = 1.0 / 16.0;

/// How a bandwidth is read off a spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `2·max|f|` over frequencies whose smoothed PSD is within `db` of the peak.
    PsdLevel { db: f64 },
    /// Smallest band `[-B/2, B/2]` holding all but `10^{-db/10}` of the power.
    PowerContainment { db: f64 },
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::PsdLevel { db: 30.0 }
    }
}

impl std::fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BandwidthRule::PsdLevel { db } => write!(f, "psd-level-{db}dB"),
            BandwidthRule::PowerContainment { db } => write!(f, "containment-{db}dB"),
        }
    }
}

/// One-segment-length Welch estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// Ascending normalised frequencies `f·T`, zero at index `len/2`.
    pub freq_norm: Vec<f64>,
    /// Power per unit normalised frequency; `Σ psd·Δf` is the mean power.
    pub psd: Vec<f64>,
    pub segments: usize,
}

impl Periodogram {
    pub fn bin_width(&self) -> f64 {
        self.freq_norm.get(1).map_or(0.0, |f1| f1 - self.freq_norm[0])
    }

    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width()
    }

    /// Centred moving average over `±half_width` (normalised frequency), circular.
    pub fn smoothed(&self, half_width: f64) -> Vec<f64> {
        let n = self.psd.len();
        let w = (half_width / self.bin_width()).round() as usize;
        let span = (2 * w + 1) as f64;
        let mut acc: f64 = (0..=2 * w).map(|i| self.psd[(n + i - w) % n]).sum();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            out.push(acc / span);
            acc += self.psd[(k + w + 1) % n] - self.psd[(n + k - w) % n];
        }
        out
    }

    pub fn bandwidth(&self, rule: BandwidthRule) -> f64 {
        match rule {
            BandwidthRule::PsdLevel { db } => {
                let s = self.smoothed(SMOOTHING_HALF_WIDTH);
                let peak = s.iter().copied().fold(0.0, f64::max);
                let floor = peak * 10f64.powf(-db / 10.0);
                2.0 * self
                    .freq_norm
                    .iter()
                    .zip(&s)
                    .filter(|(_, &v)| v >= floor)
                    .map(|(f, _)| f.abs())
                    .fold(0.0, f64::max)
            }
            BandwidthRule::PowerContainment { db } => {
                let total: f64 = self.psd.iter().sum();
                let target = total * (1.0 - 10f64.powf(-db / 10.0));
                let centre = self.psd.len() / 2;
                let mut inside = self.psd[centre];
                let mut k = 0;
                while inside < target && k + 1 < centre {
                    k += 1;
                    inside += self.psd[centre - k] + self.psd.get(centre + k).copied().unwrap_or(0.0);
                }
                2.0 * (k as f64 + 0.5) * self.bin_width()
            }
        }
    }
}

/// Welch estimate with Hann windows and 50 % overlap.
///
/// `samples` are taken at `samples_per_symbol / T`; frequencies are reported
/// in units of `1/T`.
pub fn welch(samples: &[Complex64], samples_per_symbol: usize, segment_len: usize) -> Periodogram {
    let hop = segment_len / 2;
    let window: Vec<f64> = (0..segment_len)
        .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / segment_len as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let mut acc = vec![0.0; segment_len];
    let mut buf = vec![Complex64::default(); segment_len];
    let mut segments = 0;
    let mut start = 0;
    while start + segment_len <= samples.len() {
        for ((b, x), w) in buf.iter_mut().zip(&samples[start..start + segment_len]).zip(&window) {
            *b = x * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    // |X|²/(fs·Σw²) with fs = N_sps in normalised units
    let scale = 1.0 / (segments.max(1) as f64 * samples_per_symbol as f64 * wpow);
    let half = segment_len / 2;
    let df = samples_per_symbol as f64 / segment_len as f64;
    let freq_norm = (0..segment_len).map(|i| (i as f64 - half as f64) * df).collect();
    let psd = (0..segment_len).map(|i| acc[(i + segment_len - half) % segment_len] * scale).collect();
    Periodogram { freq_norm, psd, segments }
}

/// Spectrum of one antenna and its bandwidth against uncorrected CPM.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub kind: CorrectionKind,
    pub antenna: usize,
    pub n_symbols: usize,
    pub rule: BandwidthRule,
    pub freq_norm: Vec<f64>,
    /// Smoothed PSD in dB relative to its peak.
    pub psd_db: Vec<f64>,
    pub bandwidth: f64,
    pub reference_bandwidth: f64,
    /// Relative deviation of `Σ psd·Δf` from the mean sample power.
    pub parseval_error: f64,
}

impl SpectrumReport {
    pub fn expansion_ratio(&self) -> f64 {
        self.bandwidth / self.reference_bandwidth
    }

    /// `freq_norm,psd_db` series.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_norm,psd_db\n");
        for (f, p) in self.freq_norm.iter().zip(&self.psd_db) {
            let _ = writeln!(out, "{f:.6},{p:.4}");
        }
        out
    }
}

impl KeyValue for SpectrumReport {
    fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("scheme".into(), self.kind.to_string()),
            ("antenna".into(), (self.antenna + 1).to_string()),
            ("n_symbols".into(), self.n_symbols.to_string()),
            ("rule".into(), self.rule.to_string()),
            ("bandwidth".into(), format!("{:.6}", self.bandwidth)),
            ("reference_bandwidth".into(), format!("{:.6}", self.reference_bandwidth)),
            ("expansion_ratio".into(), format!("{:.6}", self.expansion_ratio())),
            ("parseval_error".into(), format!("{:e}", self.parseval_error)),
        ]
    }
}

fn antenna_stream(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    antenna: usize,
    symbols: &[i32],
) -> Result<Vec<Complex64>> {
    let blocks = encode_symbols(params, scheme, symbols, &vec![0.0; scheme.n_tx])?;
    Ok(blocks.iter().flat_map(|b| b.samples[antenna].iter().copied()).collect())
}

/// Welch spectrum of `antenna` (zero-based) over `n_symbols` random symbols,
/// compared with the single-antenna uncorrected signal carrying the same data.
pub fn psd_estimate<R: Rng + ?Sized>(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    antenna: usize,
    n_symbols: usize,
    rule: BandwidthRule,
    rng: &mut R,
) -> Result<SpectrumReport> {
    if n_symbols < MIN_PSD_SYMBOLS {
        return Err(Error::TooFewSymbols { min: MIN_PSD_SYMBOLS, got: n_symbols });
    }
    if antenna >= scheme.n_tx {
        return Err(Error::Dimension(format!("antenna {antenna} of {}", scheme.n_tx)));
    }
    let n_symbols = n_symbols.div_ceil(scheme.n_tx) * scheme.n_tx;
    let m = params.alphabet_size as usize;
    let symbols: Vec<i32> = (0..n_symbols).map(|_| params.level(rng.random_range(0..m))).collect();
    let seg = SEGMENT_SYMBOLS * params.samples_per_symbol;

    let x = antenna_stream(params, scheme, antenna, &symbols)?;
    let pg = welch(&x, params.samples_per_symbol, seg);
    let mean_power = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
    let parseval_error = (pg.total_power() / mean_power - 1.0).abs();

    let reference = build_correction(CorrectionKind::None, params, 1)?;
    let xr = antenna_stream(params, &reference, 0, &symbols)?;
    let pr = welch(&xr, params.samples_per_symbol, seg);

    let smooth = pg.smoothed(SMOOTHING_HALF_WIDTH);
    let peak = smooth.iter().copied().fold(0.0, f64::max);
    let psd_db = smooth.iter().map(|&v| 10.0 * (v / peak).max(1e-30).log10()).collect();
    Ok(SpectrumReport {
        kind: scheme.kind,
        antenna,
        n_symbols,
        rule,
        bandwidth: pg.bandwidth(rule),
        reference_bandwidth: pr.bandwidth(rule),
        freq_norm: pg.freq_norm,
        psd_db,
        parseval_error,
    })
}
