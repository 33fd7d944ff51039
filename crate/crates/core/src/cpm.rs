//! Single-antenna continuous phase modulation.
//!
//! Phases are tracked in cycles (multiples of 2π). A symbol slot of duration
//! `T` is sampled on the midpoint grid `τ_k = (k + 1/2)/N · T`, `k = 0..N`,
//! and the boundary phases at `τ = 0` and `τ = T` are carried alongside the
//! samples so slot-to-slot continuity can be checked exactly.
//!
//! The phase inside slot `n` is
//!
//! ```text
//! φ(τ) = θ(n) + h · Σ_{k=0}^{γ-1} d_{n-k} · q(τ + kT) + c(τ)
//! ```
//!
//! where `θ(n)` is the phase memory, the sum runs over the symbols whose
//! pulses are still active and `c` is an optional per-slot correction profile.
//! Once a symbol has been active for `γ` slots its contribution saturates at
//! `h·d/2` and moves into the phase memory.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-pulse family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    /// Rectangular frequency pulse, linear phase ramp.
    Rec,
    /// Raised-cosine frequency pulse.
    Rc,
}

impl std::str::FromStr for PulseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rec" | "lrec" => Ok(PulseKind::Rec),
            "rc" | "lrc" => Ok(PulseKind::Rc),
            other => Err(Error::Config(format!("unknown pulse kind `{other}`"))),
        }
    }
}

/// Phase smoothing function `q(t)` spanning `length` symbol intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub length: usize,
}

impl PulseShape {
    pub fn rec(length: usize) -> Self {
        Self { kind: PulseKind::Rec, length }
    }

    pub fn rc(length: usize) -> Self {
        Self { kind: PulseKind::Rc, length }
    }

    /// Evaluates `q` at `t`, measured in symbol durations.
    ///
    /// `q(t) = 0` for `t <= 0` and `q(t) = 1/2` for `t >= γ`, both exactly.
    pub fn eval(&self, t: f64) -> f64 {
        let span = self.length as f64;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= span {
            return 0.5;
        }
        let ramp = t / (2.0 * span);
        match self.kind {
            PulseKind::Rec => ramp,
            PulseKind::Rc => ramp - (2.0 * PI * t / span).sin() / (4.0 * PI),
        }
    }
}

/// CPM parameter set shared by every antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmParams {
    /// Alphabet size `M`, a power of two.
    pub alphabet_size: u32,
    /// Numerator `m0` of `h = 2·m0/p`.
    pub mod_index_num: u32,
    /// Denominator `p` of `h = 2·m0/p`; also the number of trellis phase states.
    pub mod_index_den: u32,
    pub pulse: PulseShape,
    pub samples_per_symbol: usize,
    pub symbol_duration: f64,
    pub symbol_energy: f64,
}

/// Smallest oversampling factor accepted for waveform integrals.
pub const MIN_SAMPLES_PER_SYMBOL: usize = 8;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl CpmParams {
    /// Creates and validates a parameter set with `T = 1` and `Es = 1`.
    pub fn new(
        alphabet_size: u32,
        mod_index_num: u32,
        mod_index_den: u32,
        pulse: PulseShape,
        samples_per_symbol: usize,
    ) -> Result<Self> {
        let params = Self {
            alphabet_size,
            mod_index_num,
            mod_index_den,
            pulse,
            samples_per_symbol,
            symbol_duration: 1.0,
            symbol_energy: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// The configuration used for the BER benchmarks: `h = 1/2`, `M = 4`, 2REC.
    pub fn reference(samples_per_symbol: usize) -> Self {
        Self::new(4, 1, 4, PulseShape::rec(2), samples_per_symbol)
            .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.alphabet_size < 2 || !self.alphabet_size.is_power_of_two() {
            return fail(format!("alphabet size {} is not a power of two >= 2", self.alphabet_size));
        }
        if self.mod_index_num == 0 || self.mod_index_den == 0 {
            return fail("modulation index terms must be positive".into());
        }
        if gcd(self.mod_index_num, self.mod_index_den) != 1 {
            return fail(format!(
                "m0={} and p={} are not coprime",
                self.mod_index_num, self.mod_index_den
            ));
        }
        if self.pulse.length == 0 {
            return fail("memory length must be positive".into());
        }
        if self.samples_per_symbol < MIN_SAMPLES_PER_SYMBOL {
            return fail(format!(
                "samples per symbol {} below floor {}",
                self.samples_per_symbol, MIN_SAMPLES_PER_SYMBOL
            ));
        }
        if !(self.symbol_duration.is_finite() && self.symbol_duration > 0.0) {
            return fail("symbol duration must be positive".into());
        }
        if !(self.symbol_energy.is_finite() && self.symbol_energy > 0.0) {
            return fail("symbol energy must be positive".into());
        }
        Ok(())
    }

    pub fn with_samples_per_symbol(mut self, n: usize) -> Self {
        self.samples_per_symbol = n;
        self
    }

    /// Modulation index `h = 2·m0/p`.
    pub fn h(&self) -> f64 {
        2.0 * self.mod_index_num as f64 / self.mod_index_den as f64
    }

    pub fn memory_len(&self) -> usize {
        self.pulse.length
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.alphabet_size.trailing_zeros() as usize
    }

    /// Alphabet levels `{-M+1, -M+3, …, M-1}` in ascending order.
    pub fn alphabet(&self) -> Vec<i32> {
        (0..self.alphabet_size as usize).map(|i| self.level(i)).collect()
    }

    /// Level for alphabet index `i` (0 is the most negative level).
    pub fn level(&self, index: usize) -> i32 {
        2 * index as i32 - self.alphabet_size as i32 + 1
    }

    /// Alphabet index of `symbol`, if it is a valid level.
    pub fn level_index(&self, symbol: i32) -> Option<usize> {
        let m = self.alphabet_size as i32;
        if symbol % 2 == 0 || symbol.abs() > m - 1 {
            return None;
        }
        Some(((symbol + m - 1) / 2) as usize)
    }

    pub fn check_symbol(&self, symbol: i32) -> Result<()> {
        self.level_index(symbol).map(|_| ()).ok_or(Error::SymbolOutOfAlphabet {
            symbol,
            alphabet_size: self.alphabet_size,
        })
    }

    /// `q(t)` with `t` in seconds.
    pub fn q(&self, t: f64) -> f64 {
        self.pulse.eval(t / self.symbol_duration)
    }

    /// Midpoint sample instants of one slot, in symbol durations.
    pub fn slot_grid(&self) -> Vec<f64> {
        let n = self.samples_per_symbol as f64;
        (0..self.samples_per_symbol).map(|k| (k as f64 + 0.5) / n).collect()
    }

    /// Integration weight of one sample, `T/N`.
    pub fn dt(&self) -> f64 {
        self.symbol_duration / self.samples_per_symbol as f64
    }

    /// Constant envelope `√(Es/(L_t·T))`.
    pub fn amplitude(&self, n_tx: usize) -> f64 {
        (self.symbol_energy / (n_tx as f64 * self.symbol_duration)).sqrt()
    }
}

/// Phase memory and the symbols whose pulses are still active.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    /// Phase accumulator in cycles, kept in `[0, 1)`.
    pub theta: f64,
    /// The last `γ-1` symbol levels, oldest first. `0.0` marks an idle slot
    /// before transmission started.
    pub history: Vec<f64>,
}

impl PhaseState {
    /// Start-of-transmission state: given phase, idle history.
    pub fn new(params: &CpmParams, theta: f64) -> Self {
        Self {
            theta: theta.rem_euclid(1.0),
            history: vec![0.0; params.memory_len() - 1],
        }
    }

    pub fn with_history(theta: f64, history: Vec<f64>) -> Self {
        Self { theta: theta.rem_euclid(1.0), history }
    }
}

/// Sampled phase of one slot, in cycles, plus its boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPhase {
    pub samples: Vec<f64>,
    pub start: f64,
    pub end: f64,
}

/// Slot-relative correction offset `c(τ)` on the midpoint grid, in cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionProfile {
    pub samples: Vec<f64>,
    pub start: f64,
    pub end: f64,
}

impl CorrectionProfile {
    pub fn zero(n: usize) -> Self {
        Self { samples: vec![0.0; n], start: 0.0, end: 0.0 }
    }

    /// Samples `f(τ/T)` on the midpoint grid together with `f(0)` and `f(1)`.
    pub fn from_fn(params: &CpmParams, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: params.slot_grid().into_iter().map(&f).collect(),
            start: f(0.0),
            end: f(1.0),
        }
    }

    /// Phase drift `c(T) - c(0)` carried into the phase memory.
    pub fn increment(&self) -> f64 {
        self.end - self.start
    }
}

/// `exp(j2π·cycles)`, reduced modulo one first to keep precision on long runs.
pub fn cis(cycles: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * cycles.rem_euclid(1.0)).sin_cos();
    Complex64::new(c, s)
}

/// Phase over one slot for alphabet symbol `symbol`.
pub fn phase_trajectory(
    params: &CpmParams,
    state: &PhaseState,
    symbol: i32,
    correction: &CorrectionProfile,
) -> Result<SlotPhase> {
    params.check_symbol(symbol)?;
    phase_trajectory_level(params, state, symbol as f64, correction)
}

/// Phase over one slot for an arbitrary real symbol level.
///
/// Used directly for shifted (pseudo) alphabets, which are not integers.
pub fn phase_trajectory_level(
    params: &CpmParams,
    state: &PhaseState,
    level: f64,
    correction: &CorrectionProfile,
) -> Result<SlotPhase> {
    let n = params.samples_per_symbol;
    if correction.samples.len() != n {
        return Err(Error::Dimension(format!(
            "correction profile has {} samples, slot has {n}",
            correction.samples.len()
        )));
    }
    if state.history.len() + 1 != params.memory_len() {
        return Err(Error::Dimension(format!(
            "phase state history has {} symbols, memory length is {}",
            state.history.len(),
            params.memory_len()
        )));
    }
    let h = params.h();
    let pulse = params.pulse;
    let gamma = params.memory_len();
    // Symbol started k slots ago sits at history[γ-1-k]; the current one at k = 0.
    let data = |tau: f64| -> f64 {
        let mut acc = level * pulse.eval(tau);
        for (j, &d) in state.history.iter().enumerate() {
            let k = (gamma - 1 - j) as f64;
            acc += d * pulse.eval(tau + k);
        }
        h * acc
    };
    let samples = params
        .slot_grid()
        .into_iter()
        .zip(&correction.samples)
        .map(|(tau, c)| state.theta + data(tau) + c)
        .collect();
    Ok(SlotPhase {
        samples,
        start: state.theta + data(0.0) + correction.start,
        end: state.theta + data(1.0) + correction.end,
    })
}

/// Advances the phase memory by one slot.
///
/// `θ' = θ + h/2·d_exit + xi_correction (mod 1)` where `d_exit` is the symbol
/// whose pulse saturates at the end of this slot.
pub fn phase_memory_step(
    params: &CpmParams,
    state: &PhaseState,
    level: f64,
    xi_correction: f64,
) -> PhaseState {
    let (exiting, history) = if state.history.is_empty() {
        (level, Vec::new())
    } else {
        let mut history = state.history[1..].to_vec();
        history.push(level);
        (state.history[0], history)
    };
    PhaseState {
        theta: (state.theta + params.h() / 2.0 * exiting + xi_correction).rem_euclid(1.0),
        history,
    }
}

/// Constant-envelope samples `√(Es/(L_t T))·exp(j2πφ)`.
pub fn modulate_slot(params: &CpmParams, phase: &[f64], n_tx: usize) -> Vec<Complex64> {
    let amp = params.amplitude(n_tx);
    phase.iter().map(|&p| cis(p) * amp).collect()
}

/// Conventional CPM waveform for a sequence of (possibly non-integer) levels.
///
/// Returns the concatenated samples and the final state.
pub fn conventional_waveform(
    params: &CpmParams,
    initial: &PhaseState,
    levels: &[f64],
    n_tx: usize,
) -> Result<(Vec<Complex64>, PhaseState)> {
    let zero = CorrectionProfile::zero(params.samples_per_symbol);
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(levels.len() * params.samples_per_symbol);
    for &d in levels {
        let phase = phase_trajectory_level(params, &state, d, &zero)?;
        out.extend(modulate_slot(params, &phase.samples, n_tx));
        state = phase_memory_step(params, &state, d, 0.0);
    }
    Ok((out, state))
}
