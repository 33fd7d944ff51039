//! Parallel-code space-time encoder.
//!
//! Every antenna carries the same data symbol in each slot (parallel mapping);
//! orthogonality across antennas comes only from deterministic per-antenna
//! phase corrections. Each correction is a slot-relative profile `κ_m·u(τ)`
//! where `u` is a unit ramp (`u(0) = 0`, `u(1) = 1`) and `κ_m` is the phase
//! drift per slot of antenna `m`. The drift accumulates in the phase memory,
//! so over one block of `L_t` slots the antenna pair `(m, m')` rotates through
//! `L_t` equally spaced phases and its cross-correlation sums to zero.
//!
//! | `L_t` | drifts `κ_m` (cycles/slot)          |
//! |-------|-------------------------------------|
//! | 1     | `0`                                 |
//! | 2     | `0, 1/2`                            |
//! | 3     | `1/3, 0, -1/3` (or `2/3, 0, -2/3`)  |

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cpm::{
    modulate_slot, phase_memory_step, phase_trajectory, CorrectionProfile, CpmParams, PhaseState,
    SlotPhase,
};
use crate::error::{Error, Result};

/// Correction-factor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionKind {
    /// No correction: plain CPM on every antenna.
    None,
    /// Linear ramp.
    LinPc,
    /// Raised-cosine ramp `(1 - cos(πτ/T))/2`.
    RcPc,
    /// Ramp built from the CPM phase pulse; equivalent to offset alphabets.
    OffPc,
    /// User supplied unit ramp.
    Custom,
}

impl CorrectionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CorrectionKind::None => "none",
            CorrectionKind::LinPc => "linpc",
            CorrectionKind::RcPc => "rcpc",
            CorrectionKind::OffPc => "offpc",
            CorrectionKind::Custom => "custom",
        }
    }
}

impl fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CorrectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(CorrectionKind::None),
            "linpc" => Ok(CorrectionKind::LinPc),
            "rcpc" => Ok(CorrectionKind::RcPc),
            "offpc" => Ok(CorrectionKind::OffPc),
            other => Err(Error::Config(format!("unknown correction scheme `{other}`"))),
        }
    }
}

/// Which root of `1 + e^{ja1} + e^{j(a1+a2)} = 0` the three-antenna code uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionBranch {
    /// `a1 = a2 = 2π/3`.
    #[default]
    Primary,
    /// `a1 = a2 = 4π/3`.
    Conjugate,
}

type Ramp = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Per-antenna correction profiles for one code family.
#[derive(Clone)]
pub struct CorrectionScheme {
    pub kind: CorrectionKind,
    pub n_tx: usize,
    pub branch: SolutionBranch,
    /// Phase drift per slot `κ_m`, in cycles.
    pub increments: Vec<f64>,
    /// Slot-relative profile of each antenna (identical for every slot).
    pub profiles: Vec<CorrectionProfile>,
    perturbation: f64,
    ramp: Ramp,
}

impl fmt::Debug for CorrectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorrectionScheme")
            .field("kind", &self.kind)
            .field("n_tx", &self.n_tx)
            .field("branch", &self.branch)
            .field("increments", &self.increments)
            .field("perturbation", &self.perturbation)
            .finish_non_exhaustive()
    }
}

fn drift_pattern(kind: CorrectionKind, n_tx: usize, branch: SolutionBranch) -> Result<Vec<f64>> {
    if kind == CorrectionKind::None {
        if !(1..=3).contains(&n_tx) {
            return Err(Error::UnsupportedScheme(format!("{n_tx} transmit antennas")));
        }
        return Ok(vec![0.0; n_tx]);
    }
    match (n_tx, branch) {
        (1, SolutionBranch::Primary) => Ok(vec![0.0]),
        (2, SolutionBranch::Primary) => Ok(vec![0.0, 0.5]),
        (3, SolutionBranch::Primary) => Ok(vec![1.0 / 3.0, 0.0, -1.0 / 3.0]),
        (3, SolutionBranch::Conjugate) => Ok(vec![2.0 / 3.0, 0.0, -2.0 / 3.0]),
        (n, SolutionBranch::Conjugate) if (1..=3).contains(&n) => Err(Error::UnsupportedScheme(
            format!("{kind} conjugate branch needs 3 antennas, got {n}"),
        )),
        (n, _) => Err(Error::UnsupportedScheme(format!("{kind} with {n} transmit antennas"))),
    }
}

/// Unit ramp of a built-in family, as a function of `τ/T`.
fn builtin_ramp(kind: CorrectionKind, params: &CpmParams) -> Ramp {
    match kind {
        CorrectionKind::None | CorrectionKind::LinPc | CorrectionKind::Custom => Arc::new(|t| t),
        CorrectionKind::RcPc => Arc::new(|t: f64| 0.5 * (1.0 - (std::f64::consts::PI * t).cos())),
        CorrectionKind::OffPc => {
            let pulse = params.pulse;
            let gamma = pulse.length;
            // 2·Σ_k [q(τ+k) - q(k)] telescopes to 2·(q(γ) - q(0)) = 1 at τ = 1.
            Arc::new(move |t: f64| {
                2.0 * (0..gamma)
                    .map(|k| pulse.eval(t + k as f64) - pulse.eval(k as f64))
                    .sum::<f64>()
            })
        }
    }
}

impl CorrectionScheme {
    pub fn new(
        kind: CorrectionKind,
        params: &CpmParams,
        n_tx: usize,
        branch: SolutionBranch,
    ) -> Result<Self> {
        if kind == CorrectionKind::Custom {
            return Err(Error::UnsupportedScheme(
                "custom ramps are built with CorrectionScheme::custom".into(),
            ));
        }
        let increments = drift_pattern(kind, n_tx, branch)?;
        Ok(Self::assemble(kind, params, n_tx, branch, increments, builtin_ramp(kind, params), 0.0))
    }

    /// Scheme with a user ramp `u`; requires `u(0) = 0` and `u(1) = 1`.
    pub fn custom(
        params: &CpmParams,
        n_tx: usize,
        branch: SolutionBranch,
        ramp: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if ramp(0.0).abs() > 1e-12 || (ramp(1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::UnsupportedScheme(format!(
                "custom ramp endpoints are ({}, {}), need (0, 1)",
                ramp(0.0),
                ramp(1.0)
            )));
        }
        let increments = drift_pattern(CorrectionKind::Custom, n_tx, branch)?;
        Ok(Self::assemble(
            CorrectionKind::Custom,
            params,
            n_tx,
            branch,
            increments,
            Arc::new(ramp),
            0.0,
        ))
    }

    fn assemble(
        kind: CorrectionKind,
        params: &CpmParams,
        n_tx: usize,
        branch: SolutionBranch,
        increments: Vec<f64>,
        ramp: Ramp,
        perturbation: f64,
    ) -> Self {
        let profiles = increments
            .iter()
            .enumerate()
            .map(|(m, &kappa)| {
                let extra = if m == 0 { perturbation } else { 0.0 };
                let ramp = ramp.clone();
                CorrectionProfile::from_fn(params, move |t| kappa * ramp(t) + extra * t)
            })
            .collect();
        let mut increments = increments;
        increments[0] += perturbation;
        Self { kind, n_tx, branch, increments, profiles, perturbation, ramp }
    }

    /// Copy whose first antenna drifts `eps` cycles per slot more than designed.
    ///
    /// Breaks orthogonality; used as a negative control.
    pub fn perturbed(&self, params: &CpmParams, eps: f64) -> Self {
        let mut base = self.increments.clone();
        base[0] -= self.perturbation;
        Self::assemble(
            self.kind,
            params,
            self.n_tx,
            self.branch,
            base,
            self.ramp.clone(),
            self.perturbation + eps,
        )
    }

    pub fn perturbation(&self) -> f64 {
        self.perturbation
    }

    /// Unit ramp `u(τ/T)`.
    pub fn ramp(&self, t: f64) -> f64 {
        (self.ramp)(t)
    }

    /// Cumulative correction of antenna `m` at time `t` (in symbol durations)
    /// measured from the start of transmission.
    pub fn cumulative(&self, m: usize, t: f64) -> f64 {
        let slot = t.floor();
        let frac = t - slot;
        let base = self.increments[m] - if m == 0 { self.perturbation } else { 0.0 };
        let extra = if m == 0 { self.perturbation } else { 0.0 };
        base * (slot + self.ramp(frac)) + extra * t
    }
}

/// Builds the correction scheme `kind` for `n_tx` antennas on the primary branch.
pub fn build_correction(
    kind: CorrectionKind,
    params: &CpmParams,
    n_tx: usize,
) -> Result<CorrectionScheme> {
    CorrectionScheme::new(kind, params, n_tx, SolutionBranch::Primary)
}

/// Shifted symbol alphabet that reproduces an offPC antenna as plain CPM.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAlphabet {
    pub antenna: usize,
    pub offset: f64,
    pub levels: Vec<f64>,
}

/// Per-antenna pseudo alphabets of an offPC scheme: levels shifted by `2κ_m/h`.
pub fn pseudo_alphabets(params: &CpmParams, scheme: &CorrectionScheme) -> Result<Vec<PseudoAlphabet>> {
    if scheme.kind != CorrectionKind::OffPc {
        return Err(Error::UnsupportedScheme(format!(
            "pseudo alphabets exist only for offpc, not {}",
            scheme.kind
        )));
    }
    let h = params.h();
    Ok(scheme
        .increments
        .iter()
        .enumerate()
        .map(|(antenna, &kappa)| {
            let offset = 2.0 * kappa / h;
            PseudoAlphabet {
                antenna,
                offset,
                levels: params.alphabet().into_iter().map(|d| d as f64 + offset).collect(),
            }
        })
        .collect())
}

/// Gray-maps `log2(M)` bits (MSB first) to an alphabet level.
///
/// The Gray codeword of alphabet index `i` is `i ^ (i >> 1)`, so neighbouring
/// levels differ in exactly one bit. For `M = 4`: `00→-3, 01→-1, 11→+1, 10→+3`.
pub fn gray_map(bits: &[u8], alphabet_size: u32) -> Result<i32> {
    let k = alphabet_size.trailing_zeros() as usize;
    if bits.len() != k {
        return Err(Error::BitCount { expected: k, got: bits.len() });
    }
    let mut gray = 0u32;
    for &b in bits {
        gray = (gray << 1) | u32::from(b & 1);
    }
    let mut index = gray;
    let mut shift = gray >> 1;
    while shift != 0 {
        index ^= shift;
        shift >>= 1;
    }
    Ok(2 * index as i32 - alphabet_size as i32 + 1)
}

/// Inverse of [`gray_map`].
pub fn gray_unmap(symbol: i32, alphabet_size: u32) -> Result<Vec<u8>> {
    let m = alphabet_size as i32;
    if symbol % 2 == 0 || symbol.abs() > m - 1 {
        return Err(Error::SymbolOutOfAlphabet { symbol, alphabet_size });
    }
    let index = ((symbol + m - 1) / 2) as u32;
    let gray = index ^ (index >> 1);
    let k = alphabet_size.trailing_zeros();
    Ok((0..k).rev().map(|b| ((gray >> b) & 1) as u8).collect())
}

/// One space-time block: `L_t` antennas × `L_t` slots.
#[derive(Debug, Clone)]
pub struct CodeBlock {
    /// `samples[m]` holds the `L_t·N` samples of antenna `m`.
    pub samples: Vec<Vec<Complex64>>,
    /// `phases[m][r]` is the phase of antenna `m` in slot `r`.
    pub phases: Vec<Vec<SlotPhase>>,
    pub symbols: Vec<i32>,
    pub end_states: Vec<PhaseState>,
}

impl CodeBlock {
    pub fn n_tx(&self) -> usize {
        self.samples.len()
    }
}

/// Encodes one block of `L_t` symbols starting from per-antenna `states`.
pub fn encode_block(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    states: &[PhaseState],
    symbols: &[i32],
) -> Result<CodeBlock> {
    let n_tx = scheme.n_tx;
    if symbols.len() != n_tx {
        return Err(Error::BlockLength { expected: n_tx, got: symbols.len() });
    }
    if states.len() != n_tx {
        return Err(Error::Dimension(format!("{} phase states for {n_tx} antennas", states.len())));
    }
    let n = params.samples_per_symbol;
    let mut samples = vec![Vec::with_capacity(n_tx * n); n_tx];
    let mut phases = vec![Vec::with_capacity(n_tx); n_tx];
    let mut end_states = Vec::with_capacity(n_tx);
    for m in 0..n_tx {
        let profile = &scheme.profiles[m];
        let mut state = states[m].clone();
        for &d in symbols {
            let phase = phase_trajectory(params, &state, d, profile)?;
            samples[m].extend(modulate_slot(params, &phase.samples, n_tx));
            phases[m].push(phase);
            state = phase_memory_step(params, &state, d as f64, profile.increment());
        }
        end_states.push(state);
    }
    Ok(CodeBlock { samples, phases, symbols: symbols.to_vec(), end_states })
}

/// Stateful block encoder for one transmission.
#[derive(Debug, Clone)]
pub struct StreamEncoder {
    params: CpmParams,
    scheme: CorrectionScheme,
    states: Vec<PhaseState>,
}

impl StreamEncoder {
    /// Starts a transmission with idle history and the given initial phases.
    pub fn new(params: &CpmParams, scheme: &CorrectionScheme, initial_phases: &[f64]) -> Result<Self> {
        if initial_phases.len() != scheme.n_tx {
            return Err(Error::Dimension(format!(
                "{} initial phases for {} antennas",
                initial_phases.len(),
                scheme.n_tx
            )));
        }
        Ok(Self {
            params: *params,
            scheme: scheme.clone(),
            states: initial_phases.iter().map(|&t| PhaseState::new(params, t)).collect(),
        })
    }

    pub fn encode_block(&mut self, symbols: &[i32]) -> Result<CodeBlock> {
        let block = encode_block(&self.params, &self.scheme, &self.states, symbols)?;
        self.states.clone_from(&block.end_states);
        Ok(block)
    }

    pub fn states(&self) -> &[PhaseState] {
        &self.states
    }
}

/// Where source symbol `index` was placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolPlacement {
    pub index: usize,
    pub block: usize,
    pub slot: usize,
}

#[derive(Debug, Clone)]
pub struct EncodedStream {
    pub blocks: Vec<CodeBlock>,
    pub symbols: Vec<i32>,
    pub trace: Vec<SymbolPlacement>,
    /// Zero bits appended to complete the last symbol and block.
    pub padded_bits: usize,
    /// Symbols made entirely or partly of padding.
    pub padded_symbols: usize,
}

impl EncodedStream {
    /// Concatenated samples of antenna `m`.
    pub fn antenna_samples(&self, m: usize) -> Vec<Complex64> {
        self.blocks.iter().flat_map(|b| b.samples[m].iter().copied()).collect()
    }
}

/// Gray-maps a bit stream to symbols, zero-padding the tail.
pub fn bits_to_symbols(bits: &[u8], alphabet_size: u32) -> Result<Vec<i32>> {
    let k = alphabet_size.trailing_zeros() as usize;
    bits.chunks(k)
        .map(|chunk| {
            let mut word = chunk.to_vec();
            word.resize(k, 0);
            gray_map(&word, alphabet_size)
        })
        .collect()
}

pub fn symbols_to_bits(symbols: &[i32], alphabet_size: u32) -> Result<Vec<u8>> {
    let mut bits = Vec::with_capacity(symbols.len() * alphabet_size.trailing_zeros() as usize);
    for &d in symbols {
        bits.extend(gray_unmap(d, alphabet_size)?);
    }
    Ok(bits)
}

/// Encodes a symbol sequence whose length is a multiple of `L_t`.
pub fn encode_symbols(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    symbols: &[i32],
    initial_phases: &[f64],
) -> Result<Vec<CodeBlock>> {
    let n_tx = scheme.n_tx;
    if !symbols.len().is_multiple_of(n_tx) {
        return Err(Error::BlockLength { expected: n_tx, got: symbols.len() % n_tx });
    }
    let mut enc = StreamEncoder::new(params, scheme, initial_phases)?;
    symbols.chunks(n_tx).map(|c| enc.encode_block(c)).collect()
}

/// Maps bits to symbols and symbols to blocks: block `l`, slot `r` carries
/// source symbol `L_t·l + r` on every antenna.
pub fn encode_stream(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    bits: &[u8],
    initial_phases: &[f64],
) -> Result<EncodedStream> {
    let k = params.bits_per_symbol();
    let per_block = k * scheme.n_tx;
    let padded_bits = (per_block - bits.len() % per_block) % per_block;
    let mut padded = bits.to_vec();
    padded.resize(bits.len() + padded_bits, 0);
    let symbols = bits_to_symbols(&padded, params.alphabet_size)?;
    let padded_symbols = padded_bits.div_ceil(k);
    let blocks = encode_symbols(params, scheme, &symbols, initial_phases)?;
    let trace = (0..symbols.len())
        .map(|index| SymbolPlacement {
            index,
            block: index / scheme.n_tx,
            slot: index % scheme.n_tx,
        })
        .collect();
    Ok(EncodedStream { blocks, symbols, trace, padded_bits, padded_symbols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpm::{conventional_waveform, PulseShape};

    fn params() -> CpmParams {
        CpmParams::new(4, 1, 4, PulseShape::rec(2), 16).unwrap()
    }

    #[test]
    fn gray_table_m4() {
        let table = [([0, 0], -3), ([0, 1], -1), ([1, 1], 1), ([1, 0], 3)];
        for (bits, level) in table {
            assert_eq!(gray_map(&bits, 4).unwrap(), level);
            assert_eq!(gray_unmap(level, 4).unwrap(), bits.to_vec());
        }
        assert_eq!(gray_map(&[0], 2).unwrap(), -1);
        assert_eq!(gray_map(&[1], 2).unwrap(), 1);
    }

    #[test]
    fn gray_adjacent_levels_differ_in_one_bit() {
        for m in [2u32, 4, 8, 16] {
            let k = m.trailing_zeros() as usize;
            let mut seen = std::collections::HashSet::new();
            for word in 0..m {
                let bits: Vec<u8> = (0..k).rev().map(|b| ((word >> b) & 1) as u8).collect();
                let d = gray_map(&bits, m).unwrap();
                assert!(seen.insert(d));
                assert_eq!(gray_unmap(d, m).unwrap(), bits);
            }
            let levels: Vec<i32> = (0..m as i32).map(|i| 2 * i - m as i32 + 1).collect();
            for w in levels.windows(2) {
                let a = gray_unmap(w[0], m).unwrap();
                let b = gray_unmap(w[1], m).unwrap();
                assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1);
            }
        }
    }

    #[test]
    fn gray_wrong_bit_count() {
        assert_eq!(gray_map(&[0, 1, 1], 4), Err(Error::BitCount { expected: 2, got: 3 }));
        assert!(gray_unmap(0, 4).is_err());
    }

    #[test]
    fn linpc_profiles() {
        let p = params();
        let s = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        assert!((s.profiles[0].end - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.profiles[2].end + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.profiles[0].start, 0.0);
        for kind in [CorrectionKind::LinPc, CorrectionKind::RcPc, CorrectionKind::OffPc] {
            let s = build_correction(kind, &p, 3).unwrap();
            assert!(s.profiles[1].samples.iter().all(|&c| c == 0.0));
            assert_eq!(s.profiles[1].increment(), 0.0);
            for (a, b) in s.profiles[0].samples.iter().zip(&s.profiles[2].samples) {
                assert!((a + b).abs() < 1e-15);
            }
            assert!((s.profiles[0].increment() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rcpc_profile_shape() {
        let p = params();
        let s = build_correction(CorrectionKind::RcPc, &p, 3).unwrap();
        for (tau, c) in p.slot_grid().iter().zip(&s.profiles[0].samples) {
            let expect = (1.0 - (std::f64::consts::PI * tau).cos()) / 6.0;
            assert!((c - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn none_profiles_are_zero() {
        let p = params();
        let s = build_correction(CorrectionKind::None, &p, 3).unwrap();
        for prof in &s.profiles {
            assert!(prof.samples.iter().all(|&c| c == 0.0));
            assert_eq!(prof.increment(), 0.0);
        }
    }

    #[test]
    fn unsupported_combinations() {
        let p = params();
        assert!(build_correction(CorrectionKind::LinPc, &p, 4).is_err());
        assert!(build_correction(CorrectionKind::None, &p, 0).is_err());
        assert!(CorrectionScheme::new(CorrectionKind::LinPc, &p, 2, SolutionBranch::Conjugate).is_err());
        assert!(CorrectionScheme::new(CorrectionKind::Custom, &p, 3, SolutionBranch::Primary).is_err());
        assert!(CorrectionScheme::custom(&p, 3, SolutionBranch::Primary, |t| 0.5 * t).is_err());
        assert!(CorrectionScheme::custom(&p, 3, SolutionBranch::Primary, |t| t * t).is_ok());
    }

    #[test]
    fn pseudo_alphabet_values() {
        let p = params();
        let s = build_correction(CorrectionKind::OffPc, &p, 3).unwrap();
        let a = pseudo_alphabets(&p, &s).unwrap();
        let expect1 = [-5.0 / 3.0, 1.0 / 3.0, 7.0 / 3.0, 13.0 / 3.0];
        let expect3 = [-13.0 / 3.0, -7.0 / 3.0, -1.0 / 3.0, 5.0 / 3.0];
        for (x, e) in a[0].levels.iter().zip(expect1) {
            assert!((x - e).abs() < 1e-14);
        }
        for (x, e) in a[2].levels.iter().zip(expect3) {
            assert!((x - e).abs() < 1e-14);
        }
        assert_eq!(a[1].levels, vec![-3.0, -1.0, 1.0, 3.0]);
        let lin = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        assert!(pseudo_alphabets(&p, &lin).is_err());
    }

    #[test]
    fn single_antenna_matches_conventional_cpm() {
        let p = params();
        let s = build_correction(CorrectionKind::None, &p, 1).unwrap();
        let symbols = [3, -1, 1, 1, -3, 3, -3];
        let blocks = encode_symbols(&p, &s, &symbols, &[0.2]).unwrap();
        let stream: Vec<_> = blocks.iter().flat_map(|b| b.samples[0].clone()).collect();
        let levels: Vec<f64> = symbols.iter().map(|&d| d as f64).collect();
        let (reference, _) = conventional_waveform(&p, &PhaseState::new(&p, 0.2), &levels, 1).unwrap();
        assert_eq!(stream, reference);
    }

    #[test]
    fn linpc_outer_antennas_are_mirror_images() {
        let p = params();
        let s = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let symbols = [1, -3, 3, 3, -1, 1];
        let blocks = encode_symbols(&p, &s, &symbols, &[0.0; 3]).unwrap();
        for b in &blocks {
            for (k, ((s1, s2), s3)) in b.samples[0].iter().zip(&b.samples[1]).zip(&b.samples[2]).enumerate() {
                // antenna 2 carries the common data phase alone
                let common = s2 / s2.norm();
                let a = s1 * common.conj();
                let c = s3 * common.conj();
                assert!((a - c.conj()).norm() < 1e-12, "sample {k}");
            }
        }
    }

    #[test]
    fn block_length_error() {
        let p = params();
        let s = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let states = vec![PhaseState::new(&p, 0.0); 3];
        assert_eq!(
            encode_block(&p, &s, &states, &[1, 1]).unwrap_err(),
            Error::BlockLength { expected: 3, got: 2 }
        );
    }

    #[test]
    fn stream_mapping_and_padding() {
        let p = params();
        let s = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let bits = [0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1];
        let enc = encode_stream(&p, &s, &bits, &[0.0; 3]).unwrap();
        assert_eq!(enc.blocks.len(), 2);
        assert_eq!(enc.symbols, vec![-3, -1, 1, 3, -1, 1]);
        assert_eq!(enc.blocks[0].symbols, vec![-3, -1, 1]);
        assert_eq!(enc.trace[4], SymbolPlacement { index: 4, block: 1, slot: 1 });
        assert_eq!(enc.padded_bits, 0);

        let enc = encode_stream(&p, &s, &bits[..7], &[0.0; 3]).unwrap();
        assert_eq!(enc.padded_bits, 5);
        assert_eq!(enc.padded_symbols, 3);
        assert_eq!(enc.symbols.len(), 6);

        let one = build_correction(CorrectionKind::None, &p, 1).unwrap();
        let enc = encode_stream(&p, &one, &bits[..6], &[0.0]).unwrap();
        assert_eq!(enc.blocks.len(), 3);
        // full rate: every slot carries one new source symbol
        assert_eq!(enc.symbols.len(), enc.blocks.iter().map(|b| b.symbols.len()).sum::<usize>());
    }
}
