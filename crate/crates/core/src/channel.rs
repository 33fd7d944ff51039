//! Flat block-Rayleigh MIMO channel with complex AWGN.
//!
//! Noise on the sample grid has variance `N0·N/T` per complex sample, so that
//! a discrete integral `Σ y[k]·s*[k]·T/N` has the same statistics as the
//! continuous matched-filter output `∫ y(t)s*(t)dt` under white noise of
//! spectral density `N0`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cpm::CpmParams;
use crate::error::{Error, Result};

/// Fading matrix `A` (`L_r × L_t`) and noise level for one fading block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `gains[n][m]` couples transmit antenna `m` into receive antenna `n`.
    pub gains: Vec<Vec<Complex64>>,
    /// One-sided complex noise spectral density.
    pub n0: f64,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Vec<Complex64>>, n0: f64) -> Self {
        Self { gains, n0 }
    }

    /// Identity coupling (requires `L_r = L_t`), handy for noiseless checks.
    pub fn identity(n: usize, n0: f64) -> Self {
        let gains = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::default() }).collect())
            .collect();
        Self { gains, n0 }
    }

    /// Every receive antenna sees every transmit antenna with unit gain.
    pub fn all_ones(n_rx: usize, n_tx: usize, n0: f64) -> Self {
        Self { gains: vec![vec![Complex64::new(1.0, 0.0); n_tx]; n_rx], n0 }
    }

    pub fn n_rx(&self) -> usize {
        self.gains.len()
    }

    pub fn n_tx(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }

    pub fn with_n0(mut self, n0: f64) -> Self {
        self.n0 = n0;
        self
    }
}

/// SNR point on the `Eb/N0` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSpec {
    pub eb_n0_db: f64,
}

impl SnrSpec {
    pub fn new(eb_n0_db: f64) -> Result<Self> {
        if !eb_n0_db.is_finite() {
            return Err(Error::Config(format!("Eb/N0 {eb_n0_db} dB is not finite")));
        }
        Ok(Self { eb_n0_db })
    }

    /// `Es/N0` in dB for `bits_per_symbol` bits per symbol.
    pub fn es_n0_db(&self, bits_per_symbol: usize) -> f64 {
        self.eb_n0_db + 10.0 * (bits_per_symbol as f64).log10()
    }

    /// Noise density giving this `Eb/N0` with `Eb = Es/log2(M)`.
    pub fn n0(&self, params: &CpmParams) -> f64 {
        let eb = params.symbol_energy / params.bits_per_symbol() as f64;
        eb / 10f64.powf(self.eb_n0_db / 10.0)
    }
}

/// Circular complex Gaussian sample with `E|z|² = power`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let sigma = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sigma, im * sigma)
}

/// Fresh i.i.d. Rayleigh fading matrix with unit mean power per coefficient.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, n_rx: usize, n_tx: usize, n0: f64) -> ChannelRealization {
    let gains = (0..n_rx)
        .map(|_| (0..n_tx).map(|_| complex_gaussian(rng, 1.0)).collect())
        .collect();
    ChannelRealization { gains, n0 }
}

/// Noise variance of one complex sample, `N0·N/T`.
pub fn sample_noise_variance(params: &CpmParams, n0: f64) -> f64 {
    n0 / params.dt()
}

/// `y_n[k] = Σ_m α_{n,m}·s_m[k] + w_n[k]`.
///
/// `tx[m]` holds the samples of transmit antenna `m`; all antennas must have
/// the same length. Returns one sample vector per receive antenna.
pub fn apply<R: Rng + ?Sized>(
    tx: &[Vec<Complex64>],
    chan: &ChannelRealization,
    params: &CpmParams,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    if chan.n_tx() != tx.len() {
        return Err(Error::Dimension(format!(
            "channel has {} transmit columns, block has {} antennas",
            chan.n_tx(),
            tx.len()
        )));
    }
    let len = tx.first().map_or(0, Vec::len);
    if tx.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension("transmit antennas have unequal lengths".into()));
    }
    let var = sample_noise_variance(params, chan.n0);
    let out = chan
        .gains
        .iter()
        .map(|row| {
            (0..len)
                .map(|k| {
                    let clean: Complex64 = row.iter().zip(tx).map(|(a, s)| a * s[k]).sum();
                    if var > 0.0 {
                        clean + complex_gaussian(rng, var)
                    } else {
                        clean
                    }
                })
                .collect()
        })
        .collect();
    Ok(out)
}
