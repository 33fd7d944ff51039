//! Coherent MLSE receiver.
//!
//! Because every antenna carries the same data and the corrections are
//! data-independent, a single CPM trellis serves all antennas: the state is
//! the common phase `θ̂ ∈ {0, 1/p, …, (p-1)/p}` plus the last `γ-1` symbols,
//! `p·M^{γ-1}` states in all. Antenna `m` in block slot `r` is the common
//! waveform rotated by the known offset `θ_m(init) + r·κ_m` and multiplied by
//! its correction phasor.
//!
//! Thanks to block orthogonality the full block metric
//! `D1 = Σ_n ∫ |y_n - Σ_m α_{n,m} s_m|²` and the separable metric
//! `D2 = Σ_n Σ_m ∫ |y_n - α_{n,m} s_m|²` differ by `(L_t - 1)·Σ_n ∫|y_n|²`,
//! which does not depend on the hypothesis. The Viterbi search uses `D2`
//! slot by slot; [`exhaustive_ml`] minimises `D1` directly and serves as the
//! oracle.
//!
//! Ties are broken towards the lowest state index, then the lowest symbol
//! index, here and in the exhaustive search (lowest lexicographic sequence).

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::cpm::{cis, modulate_slot, phase_trajectory_level, CpmParams, PhaseState};
use crate::encoder::{encode_symbols, symbols_to_bits, CodeBlock, CorrectionScheme};
use crate::error::{Error, Result};

/// A trellis state: common phase index and symbol history (alphabet indices, oldest first).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrellisState {
    pub phase: u32,
    pub history: Vec<usize>,
}

/// State space and transitions of the shared CPM trellis.
#[derive(Debug, Clone)]
pub struct TrellisSpec {
    pub phase_states: u32,
    pub alphabet_size: u32,
    pub memory_len: usize,
    pub n_tx: usize,
    mod_index_num: u32,
    states: Vec<TrellisState>,
    next: Vec<usize>,
}

fn pow(base: usize, exp: usize) -> usize {
    (0..exp).fold(1, |acc, _| acc * base)
}

impl TrellisSpec {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Data transitions leaving each state per slot.
    pub fn branches_per_state(&self) -> usize {
        self.alphabet_size as usize
    }

    /// Partial metrics summed per state and slot (`L_t·M`).
    pub fn partial_metrics_per_state(&self) -> usize {
        self.n_tx * self.alphabet_size as usize
    }

    pub fn state(&self, index: usize) -> &TrellisState {
        &self.states[index]
    }

    pub fn states(&self) -> &[TrellisState] {
        &self.states
    }

    /// Index of `state`, if it belongs to the trellis.
    pub fn index_of(&self, state: &TrellisState) -> Option<usize> {
        let m = self.alphabet_size as usize;
        if state.phase >= self.phase_states
            || state.history.len() + 1 != self.memory_len
            || state.history.iter().any(|&d| d >= m)
        {
            return None;
        }
        let hist = state.history.iter().fold(0, |acc, &d| acc * m + d);
        Some(state.phase as usize * pow(m, self.memory_len - 1) + hist)
    }

    pub fn next_state(&self, index: usize, symbol_index: usize) -> usize {
        self.next[index * self.alphabet_size as usize + symbol_index]
    }

    /// Applies symbol `symbol_index` to a state, computing the result from scratch.
    pub fn transition(&self, state: &TrellisState, symbol_index: usize) -> TrellisState {
        let m = self.alphabet_size as i64;
        let level = |i: usize| 2 * i as i64 - m + 1;
        let (exiting, history) = if state.history.is_empty() {
            (level(symbol_index), Vec::new())
        } else {
            let mut h = state.history[1..].to_vec();
            h.push(symbol_index);
            (level(state.history[0]), h)
        };
        // h/2·d = m0·d/p cycles
        let p = self.phase_states as i64;
        let phase = (state.phase as i64 + self.mod_index_num as i64 * exiting).rem_euclid(p) as u32;
        TrellisState { phase, history }
    }
}

/// Enumerates the trellis for `params` shared by the `scheme.n_tx` antennas.
pub fn build_trellis(params: &CpmParams, scheme: &CorrectionScheme) -> TrellisSpec {
    let m = params.alphabet_size as usize;
    let hist_len = params.memory_len() - 1;
    let n_hist = pow(m, hist_len);
    let states: Vec<TrellisState> = (0..params.mod_index_den)
        .flat_map(|phase| {
            (0..n_hist).map(move |code| {
                let mut history = vec![0; hist_len];
                let mut c = code;
                for slot in history.iter_mut().rev() {
                    *slot = c % m;
                    c /= m;
                }
                TrellisState { phase, history }
            })
        })
        .collect();
    let mut spec = TrellisSpec {
        phase_states: params.mod_index_den,
        alphabet_size: params.alphabet_size,
        memory_len: params.memory_len(),
        n_tx: scheme.n_tx,
        mod_index_num: params.mod_index_num,
        states,
        next: Vec::new(),
    };
    let next = (0..spec.states.len())
        .flat_map(|s| (0..m).map(move |d| (s, d)))
        .map(|(s, d)| {
            let t = spec.transition(&spec.states[s], d);
            spec.index_of(&t).expect("transition stays inside the trellis")
        })
        .collect();
    spec.next = next;
    spec
}

fn level_of(params: &CpmParams, index: usize) -> f64 {
    params.level(index) as f64
}

/// Regenerates antenna waveforms for one slot from a trellis hypothesis.
///
/// `history` holds alphabet indices, or `None` for idle slots before the
/// start of transmission.
fn hypothesis_slot(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    initial_phases: &[f64],
    phase: u32,
    history: &[Option<usize>],
    symbol_index: usize,
    slot: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let hist: Vec<f64> = history.iter().map(|h| h.map_or(0.0, |i| level_of(params, i))).collect();
    let common = phase as f64 / params.mod_index_den as f64;
    (0..scheme.n_tx)
        .map(|m| {
            let theta = common + initial_phases[m] + slot as f64 * scheme.increments[m];
            let state = PhaseState::with_history(theta, hist.clone());
            let ph = phase_trajectory_level(
                params,
                &state,
                level_of(params, symbol_index),
                &scheme.profiles[m],
            )?;
            Ok(modulate_slot(params, &ph.samples, scheme.n_tx))
        })
        .collect()
}

/// Separable metric of one slot: `Σ_n Σ_m ∫_slot |y_n - α_{n,m} s_m|²`,
/// evaluated directly from regenerated waveforms.
///
/// `slot_rx[n]` holds the slot samples of receive antenna `n`; `slot` is the
/// position `r` inside the code block.
#[allow(clippy::too_many_arguments)]
pub fn branch_metric_separable(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    initial_phases: &[f64],
    slot_rx: &[Vec<Complex64>],
    chan: &ChannelRealization,
    state: &TrellisState,
    symbol_index: usize,
    slot: usize,
) -> Result<f64> {
    let history: Vec<Option<usize>> = state.history.iter().map(|&i| Some(i)).collect();
    let s = hypothesis_slot(params, scheme, initial_phases, state.phase, &history, symbol_index, slot)?;
    let dt = params.dt();
    let mut metric = 0.0;
    for (y, row) in slot_rx.iter().zip(&chan.gains) {
        for (alpha, sm) in row.iter().zip(&s) {
            metric += y.iter().zip(sm).map(|(y, s)| (y - alpha * s).norm_sqr()).sum::<f64>() * dt;
        }
    }
    Ok(metric)
}

/// Full block metric `D1 = Σ_n ∫_block |y_n - Σ_m α_{n,m} s_m|²`.
pub fn metric_full_block(
    params: &CpmParams,
    rx: &[Vec<Complex64>],
    chan: &ChannelRealization,
    candidate: &CodeBlock,
) -> f64 {
    let dt = params.dt();
    rx.iter()
        .zip(&chan.gains)
        .map(|(y, row)| {
            y.iter()
                .enumerate()
                .map(|(k, y)| {
                    let s: Complex64 = row.iter().zip(&candidate.samples).map(|(a, s)| a * s[k]).sum();
                    (y - s).norm_sqr()
                })
                .sum::<f64>()
                * dt
        })
        .sum()
}

/// Separable block metric `D2 = Σ_n Σ_m ∫_block |y_n - α_{n,m} s_m|²`.
pub fn metric_separable_block(
    params: &CpmParams,
    rx: &[Vec<Complex64>],
    chan: &ChannelRealization,
    candidate: &CodeBlock,
) -> f64 {
    let dt = params.dt();
    rx.iter()
        .zip(&chan.gains)
        .map(|(y, row)| {
            row.iter()
                .zip(&candidate.samples)
                .map(|(a, s)| y.iter().zip(s).map(|(y, s)| (y - a * s).norm_sqr()).sum::<f64>())
                .sum::<f64>()
                * dt
        })
        .sum()
}

/// Energy `Σ_n ∫ |y_n|²` of a received segment.
pub fn received_energy(params: &CpmParams, rx: &[Vec<Complex64>]) -> f64 {
    rx.iter().flat_map(|y| y.iter()).map(|z| z.norm_sqr()).sum::<f64>() * params.dt()
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub symbols: Vec<i32>,
    pub bits: Vec<u8>,
    /// Path metric of the winning survivor, relative to the renormalised floor.
    pub final_metric: f64,
    /// Branch extensions evaluated in slots where the full trellis is active.
    pub branch_extensions: u64,
    /// Number of such slots.
    pub full_trellis_slots: usize,
}

/// Decoder state space including the start-up states whose history still
/// contains idle (pre-transmission) slots. Histories are coded in base
/// `M + 1` with digit `M` meaning idle; idle digits only occur as a prefix.
#[derive(Debug, Clone)]
struct ExtendedTrellis {
    n_hist_codes: usize,
    /// (phase, history code) per extended state
    phase: Vec<u32>,
    hist_code: Vec<usize>,
    next: Vec<usize>,
    /// Extended indices of the main trellis states, in main index order.
    main: Vec<usize>,
    /// Extended indices of start-up states (idle prefix), ascending.
    startup: Vec<usize>,
    start: usize,
}

impl ExtendedTrellis {
    fn new(params: &CpmParams) -> Self {
        let m = params.alphabet_size as usize;
        let base = m + 1;
        let hist_len = params.memory_len() - 1;
        let n_hist_codes = pow(base, hist_len);
        let p = params.mod_index_den as usize;
        let n = p * n_hist_codes;
        let digits = |code: usize| -> Vec<usize> {
            let mut d = vec![0; hist_len];
            let mut c = code;
            for slot in d.iter_mut().rev() {
                *slot = c % base;
                c /= base;
            }
            d
        };
        let encode = |d: &[usize]| d.iter().fold(0, |acc, &x| acc * base + x);
        let valid = |d: &[usize]| {
            let idle = d.iter().take_while(|&&x| x == m).count();
            d[idle..].iter().all(|&x| x < m)
        };
        let mut phase = Vec::with_capacity(n);
        let mut hist_code = Vec::with_capacity(n);
        let mut next = vec![usize::MAX; n * m];
        let mut main = Vec::new();
        let mut startup = Vec::new();
        for s in 0..n {
            let ph = (s / n_hist_codes) as u32;
            let code = s % n_hist_codes;
            let d = digits(code);
            phase.push(ph);
            hist_code.push(code);
            if !valid(&d) {
                continue;
            }
            if d.iter().all(|&x| x < m) {
                main.push(s);
            } else {
                startup.push(s);
            }
            for sym in 0..m {
                let exiting = if hist_len == 0 { Some(sym) } else { Some(d[0]).filter(|&x| x < m) };
                let dphase = exiting.map_or(0, |i| params.mod_index_num as i64 * params.level(i) as i64);
                let nph = (ph as i64 + dphase).rem_euclid(p as i64) as usize;
                let nd: Vec<usize> = if hist_len == 0 {
                    Vec::new()
                } else {
                    d[1..].iter().copied().chain(std::iter::once(sym)).collect()
                };
                next[s * m + sym] = nph * n_hist_codes + encode(&nd);
            }
        }
        let start = encode(&vec![m; hist_len]);
        Self { n_hist_codes, phase, hist_code, next, main, startup, start }
    }

    fn len(&self) -> usize {
        self.phase.len()
    }
}

/// Viterbi receiver for one (params, scheme, initial phases) configuration.
///
/// Immutable after construction; share it across worker threads freely.
#[derive(Debug, Clone)]
pub struct Receiver {
    params: CpmParams,
    scheme: CorrectionScheme,
    initial_phases: Vec<f64>,
    trellis: TrellisSpec,
    ext: ExtendedTrellis,
    /// `templates[code·M + sym][k]`: data part of the common waveform.
    templates: Vec<Vec<Complex64>>,
    /// `corr[m][k]`: correction phasor of antenna `m`.
    corr: Vec<Vec<Complex64>>,
    /// `rot[r][m][phase]`: `exp(-j2π(phase/p + θ_m + r·κ_m))`.
    rot: Vec<Vec<Vec<Complex64>>>,
}

impl Receiver {
    pub fn new(params: &CpmParams, scheme: &CorrectionScheme, initial_phases: &[f64]) -> Result<Self> {
        let n_tx = scheme.n_tx;
        if initial_phases.len() != n_tx {
            return Err(Error::Dimension(format!("{} initial phases for {n_tx} antennas", initial_phases.len())));
        }
        // The per-slot offset r·κ_m must repeat every block.
        for &kappa in &scheme.increments {
            let per_block = kappa * n_tx as f64;
            if (per_block - per_block.round()).abs() > 1e-9 {
                return Err(Error::UnsupportedScheme(format!(
                    "drift {kappa} per slot does not return to the trellis phase grid after a block"
                )));
            }
        }
        let trellis = build_trellis(params, scheme);
        let ext = ExtendedTrellis::new(params);
        let m = params.alphabet_size as usize;
        let hist_len = params.memory_len() - 1;
        let h = params.h();
        let grid = params.slot_grid();
        let mut templates = Vec::with_capacity(ext.n_hist_codes * m);
        for code in 0..ext.n_hist_codes {
            let mut digits = vec![0; hist_len];
            let mut c = code;
            for slot in digits.iter_mut().rev() {
                *slot = c % (m + 1);
                c /= m + 1;
            }
            for sym in 0..m {
                let w = grid
                    .iter()
                    .map(|&tau| {
                        let mut acc = level_of(params, sym) * params.pulse.eval(tau);
                        for (j, &dj) in digits.iter().enumerate() {
                            if dj < m {
                                acc += level_of(params, dj) * params.pulse.eval(tau + (hist_len - j) as f64);
                            }
                        }
                        cis(h * acc)
                    })
                    .collect();
                templates.push(w);
            }
        }
        let corr = scheme
            .profiles
            .iter()
            .map(|prof| prof.samples.iter().map(|&c| cis(c)).collect())
            .collect();
        let p = params.mod_index_den;
        let rot = (0..n_tx)
            .map(|r| {
                (0..n_tx)
                    .map(|mm| {
                        (0..p)
                            .map(|ph| {
                                cis(-(ph as f64 / p as f64
                                    + initial_phases[mm]
                                    + r as f64 * scheme.increments[mm]))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            params: *params,
            scheme: scheme.clone(),
            initial_phases: initial_phases.to_vec(),
            trellis,
            ext,
            templates,
            corr,
            rot,
        })
    }

    pub fn trellis(&self) -> &TrellisSpec {
        &self.trellis
    }

    pub fn params(&self) -> &CpmParams {
        &self.params
    }

    pub fn scheme(&self) -> &CorrectionScheme {
        &self.scheme
    }

    /// Hypothesis-dependent part of the slot metrics, `G[phase][template]`,
    /// so that `branch metric = constant - 2·G`.
    fn slot_correlations(&self, slot_rx: &[&[Complex64]], chan: &ChannelRealization, r: usize) -> (f64, Vec<f64>) {
        let params = &self.params;
        let n = params.samples_per_symbol;
        let n_tx = self.scheme.n_tx;
        let dt = params.dt();
        let amp = params.amplitude(n_tx);
        let n_tmpl = self.templates.len();
        let p = params.mod_index_den as usize;
        let energy: f64 = slot_rx.iter().flat_map(|y| y.iter()).map(|z| z.norm_sqr()).sum::<f64>() * dt;
        let mut constant = n_tx as f64 * energy;
        let mut table = vec![0.0; p * n_tmpl];
        let mut combined = vec![Complex64::default(); n];
        for m in 0..n_tx {
            combined.iter_mut().for_each(|z| *z = Complex64::default());
            for (y, row) in slot_rx.iter().zip(&chan.gains) {
                let a = row[m].conj();
                constant += row[m].norm_sqr() * amp * amp * params.symbol_duration;
                for (acc, yk) in combined.iter_mut().zip(y.iter()) {
                    *acc += a * yk;
                }
            }
            for (acc, c) in combined.iter_mut().zip(&self.corr[m]) {
                *acc *= c.conj() * (amp * dt);
            }
            let rot = &self.rot[r][m];
            for (t, w) in self.templates.iter().enumerate() {
                let g: Complex64 = combined.iter().zip(w).map(|(y, w)| y * w.conj()).sum();
                for (ph, rot) in rot.iter().enumerate() {
                    table[ph * n_tmpl + t] += (rot * g).re;
                }
            }
        }
        (constant, table)
    }

    /// Viterbi decoding of a block-aligned stream.
    ///
    /// `rx[n]` holds all samples of receive antenna `n`; `chans[l]` is the
    /// channel of block `l`. With `truncation = Some(D)` the symbols of block
    /// `l` are released after block `l + D` has been processed; `None` keeps
    /// all survivors until the end.
    pub fn decode(
        &self,
        rx: &[Vec<Complex64>],
        chans: &[ChannelRealization],
        truncation: Option<usize>,
    ) -> Result<Decoded> {
        let params = &self.params;
        let n = params.samples_per_symbol;
        let n_tx = self.scheme.n_tx;
        let block_len = n * n_tx;
        let total = rx.first().map_or(0, Vec::len);
        if rx.iter().any(|y| y.len() != total) {
            return Err(Error::Dimension("receive antennas have unequal lengths".into()));
        }
        if !total.is_multiple_of(block_len) {
            return Err(Error::NotBlockAligned { samples: total, block: block_len });
        }
        let n_blocks = total / block_len;
        if chans.len() != n_blocks {
            return Err(Error::Dimension(format!("{} channel realizations for {n_blocks} blocks", chans.len())));
        }
        for c in chans {
            if c.n_rx() != rx.len() || c.n_tx() != n_tx {
                return Err(Error::Dimension(format!(
                    "channel is {}x{}, receiver expects {}x{n_tx}",
                    c.n_rx(),
                    c.n_tx(),
                    rx.len()
                )));
            }
        }

        let m = params.alphabet_size as usize;
        let ext = &self.ext;
        let n_ext = ext.len();
        let n_tmpl = self.templates.len();
        let gamma = params.memory_len();

        let mut metric = vec![f64::INFINITY; n_ext];
        metric[ext.start] = 0.0;
        let mut next_metric = vec![f64::INFINITY; n_ext];
        // survivors[slot][state] = (predecessor, symbol index)
        let mut survivors: VecDeque<Vec<(u32, u8)>> = VecDeque::new();
        let mut first_slot = 0usize;
        let mut decided: Vec<usize> = Vec::with_capacity(n_blocks * n_tx);
        let mut extensions = 0u64;
        let mut full_slots = 0usize;

        let best_state = |metric: &[f64]| -> usize {
            let mut best = 0;
            for (s, &v) in metric.iter().enumerate() {
                if v < metric[best] {
                    best = s;
                }
            }
            best
        };
        let traceback = |survivors: &VecDeque<Vec<(u32, u8)>>, from: usize, count: usize| -> Vec<usize> {
            // symbols of the oldest `count` slots in the buffer
            let mut state = from;
            let mut out = vec![0; survivors.len()];
            for (i, surv) in survivors.iter().enumerate().rev() {
                let (pred, sym) = surv[state];
                out[i] = sym as usize;
                state = pred as usize;
            }
            out.truncate(count);
            out
        };

        for slot in 0..n_blocks * n_tx {
            let block = slot / n_tx;
            let r = slot % n_tx;
            let range = slot * n..(slot + 1) * n;
            let slot_rx: Vec<&[Complex64]> = rx.iter().map(|y| &y[range.clone()]).collect();
            let (constant, table) = self.slot_correlations(&slot_rx, &chans[block], r);

            next_metric.iter_mut().for_each(|v| *v = f64::INFINITY);
            let mut surv = vec![(u32::MAX, 0u8); n_ext];
            let full = slot >= gamma - 1;
            let active: Box<dyn Iterator<Item = &usize>> = if full {
                Box::new(ext.main.iter())
            } else {
                Box::new(ext.startup.iter().chain(ext.main.iter()))
            };
            let mut ordered: Vec<usize> = active.copied().collect();
            ordered.sort_unstable();
            for s in ordered {
                let base = metric[s];
                let row = ext.phase[s] as usize * n_tmpl + ext.hist_code[s] * m;
                for sym in 0..m {
                    if full {
                        extensions += 1;
                    }
                    if !base.is_finite() {
                        continue;
                    }
                    let cand = base + constant - 2.0 * table[row + sym];
                    let t = ext.next[s * m + sym];
                    if cand < next_metric[t] {
                        next_metric[t] = cand;
                        surv[t] = (s as u32, sym as u8);
                    }
                }
            }
            if full {
                full_slots += 1;
            }
            let floor = next_metric.iter().copied().fold(f64::INFINITY, f64::min);
            for (dst, src) in metric.iter_mut().zip(&next_metric) {
                *dst = src - floor;
            }
            survivors.push_back(surv);

            if r == n_tx - 1 {
                if let Some(depth) = truncation {
                    if block >= depth {
                        let release = block - depth;
                        debug_assert_eq!(first_slot, release * n_tx);
                        let syms = traceback(&survivors, best_state(&metric), n_tx);
                        decided.extend(syms);
                        for _ in 0..n_tx {
                            survivors.pop_front();
                        }
                        first_slot += n_tx;
                    }
                }
            }
        }
        let best = best_state(&metric);
        let rest = survivors.len();
        decided.extend(traceback(&survivors, best, rest));

        let symbols: Vec<i32> = decided.iter().map(|&i| params.level(i)).collect();
        let bits = symbols_to_bits(&symbols, params.alphabet_size)?;
        Ok(Decoded {
            symbols,
            bits,
            final_metric: metric[best],
            branch_extensions: extensions,
            full_trellis_slots: full_slots,
        })
    }

    /// Direct separable metric for a trellis state, see [`branch_metric_separable`].
    pub fn branch_metric(
        &self,
        slot_rx: &[Vec<Complex64>],
        chan: &ChannelRealization,
        state: &TrellisState,
        symbol_index: usize,
        slot: usize,
    ) -> Result<f64> {
        branch_metric_separable(
            &self.params,
            &self.scheme,
            &self.initial_phases,
            slot_rx,
            chan,
            state,
            symbol_index,
            slot,
        )
    }

    /// The same metric through the correlation tables used by [`Receiver::decode`].
    pub fn branch_metric_fast(
        &self,
        slot_rx: &[Vec<Complex64>],
        chan: &ChannelRealization,
        state: &TrellisState,
        symbol_index: usize,
        slot: usize,
    ) -> f64 {
        let views: Vec<&[Complex64]> = slot_rx.iter().map(Vec::as_slice).collect();
        let (constant, table) = self.slot_correlations(&views, chan, slot);
        let m = self.params.alphabet_size as usize;
        let code = state.history.iter().fold(0, |acc, &d| acc * (m + 1) + d);
        constant - 2.0 * table[state.phase as usize * self.templates.len() + code * m + symbol_index]
    }
}

/// Default search budget of [`exhaustive_ml`].
pub const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

/// Brute-force ML sequence estimate: the sequence minimising the summed
/// full-block metric `D1` over all `M^{L_t·n_blocks}` hypotheses, each
/// re-encoded from the start of transmission.
pub fn exhaustive_ml(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    initial_phases: &[f64],
    rx: &[Vec<Complex64>],
    chans: &[ChannelRealization],
    n_blocks: usize,
) -> Result<Vec<i32>> {
    let n_tx = scheme.n_tx;
    let m = params.alphabet_size as u128;
    let len = n_tx * n_blocks;
    let size = (0..len).try_fold(1u128, |acc, _| acc.checked_mul(m)).unwrap_or(u128::MAX);
    if size > EXHAUSTIVE_BUDGET {
        return Err(Error::SearchBudget { size, budget: EXHAUSTIVE_BUDGET });
    }
    let block_len = params.samples_per_symbol * n_tx;
    if rx.iter().any(|y| y.len() != block_len * n_blocks) || chans.len() != n_blocks {
        return Err(Error::Dimension(format!("expected {n_blocks} blocks of received samples and channels")));
    }
    let mut best: Option<(f64, Vec<i32>)> = None;
    for code in 0..size {
        let mut c = code;
        let mut symbols = vec![0i32; len];
        for s in symbols.iter_mut().rev() {
            *s = params.level((c % m) as usize);
            c /= m;
        }
        let blocks = encode_symbols(params, scheme, &symbols, initial_phases)?;
        let metric: f64 = blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let seg: Vec<Vec<Complex64>> =
                    rx.iter().map(|y| y[l * block_len..(l + 1) * block_len].to_vec()).collect();
                metric_full_block(params, &seg, &chans[l], b)
            })
            .sum();
        if best.as_ref().is_none_or(|(v, _)| metric < *v) {
            best = Some((metric, symbols));
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply, draw_channel};
    use crate::cpm::PulseShape;
    use crate::encoder::{build_correction, CorrectionKind, StreamEncoder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(m: u32, gamma: usize) -> CpmParams {
        CpmParams::new(m, 1, 4, PulseShape::rec(gamma), 8).unwrap()
    }

    #[test]
    fn state_count_law() {
        for (p, m, gamma) in [(4, 4, 2), (4, 2, 2), (4, 2, 3), (3, 4, 1), (5, 8, 2), (4, 4, 3)] {
            let params = CpmParams::new(m, 1, p, PulseShape::rec(gamma), 8).unwrap();
            let scheme = build_correction(CorrectionKind::LinPc, &params, 3).unwrap();
            let t = build_trellis(&params, &scheme);
            assert_eq!(t.n_states(), p as usize * (m as usize).pow(gamma as u32 - 1));
            assert_eq!(t.partial_metrics_per_state(), 3 * m as usize);
        }
    }

    #[test]
    fn full_response_trellis_has_phase_states_only() {
        let p = params(4, 1);
        let scheme = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let t = build_trellis(&p, &scheme);
        assert_eq!(t.n_states(), 4);
        assert!(t.states().iter().all(|s| s.history.is_empty()));
    }

    #[test]
    fn noiseless_single_antenna_metric_is_zero() {
        let p = params(4, 2);
        let scheme = build_correction(CorrectionKind::None, &p, 1).unwrap();
        let mut enc = StreamEncoder::new(&p, &scheme, &[0.0]).unwrap();
        enc.encode_block(&[3]).unwrap();
        let state_before = enc.states()[0].clone();
        let block = enc.encode_block(&[-1]).unwrap();
        let recv = Receiver::new(&p, &scheme, &[0.0]).unwrap();
        // history [+3], phase after one exited idle symbol = 0
        assert_eq!(state_before.theta, 0.0);
        let st = TrellisState { phase: 0, history: vec![3] };
        let chan = ChannelRealization::identity(1, 0.0);
        let rx = vec![block.samples[0].clone()];
        let truth = recv.branch_metric(&rx, &chan, &st, 1, 0).unwrap();
        assert!(truth < 1e-18, "{truth}");
        for sym in [0, 2, 3] {
            assert!(recv.branch_metric(&rx, &chan, &st, sym, 0).unwrap() > 1e-3);
        }
    }

    #[test]
    fn fast_metric_matches_direct() {
        let p = params(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [CorrectionKind::LinPc, CorrectionKind::OffPc, CorrectionKind::RcPc] {
            let scheme = build_correction(kind, &p, 3).unwrap();
            let init = [0.1, 0.7, 0.4];
            let recv = Receiver::new(&p, &scheme, &init).unwrap();
            let chan = draw_channel(&mut rng, 2, 3, 0.0);
            let rx: Vec<Vec<Complex64>> = (0..2)
                .map(|_| (0..8).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect())
                .collect();
            for (i, st) in recv.trellis().states().iter().enumerate().step_by(3) {
                for sym in 0..4 {
                    let r = i % 3;
                    let a = recv.branch_metric(&rx, &chan, st, sym, r).unwrap();
                    let b = recv.branch_metric_fast(&rx, &chan, st, sym, r);
                    assert!((a - b).abs() < 1e-12 * a.max(1.0), "{kind} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn noiseless_decoding_is_error_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (m, gamma) in [(4, 2), (2, 3), (4, 1)] {
            let p = params(m, gamma);
            for (n_tx, kind) in [(1, CorrectionKind::None), (2, CorrectionKind::LinPc), (3, CorrectionKind::OffPc), (3, CorrectionKind::RcPc)] {
                let scheme = build_correction(kind, &p, n_tx).unwrap();
                let init: Vec<f64> = (0..n_tx).map(|i| 0.13 * i as f64).collect();
                let symbols: Vec<i32> = (0..n_tx * 12).map(|_| p.level(rng.random_range(0..m as usize))).collect();
                let blocks = encode_symbols(&p, &scheme, &symbols, &init).unwrap();
                let mut rx = vec![Vec::new(); 2];
                let mut chans = Vec::new();
                for b in &blocks {
                    let c = draw_channel(&mut rng, 2, n_tx, 0.0);
                    for (acc, y) in rx.iter_mut().zip(apply(&b.samples, &c, &p, &mut rng).unwrap()) {
                        acc.extend(y);
                    }
                    chans.push(c);
                }
                let recv = Receiver::new(&p, &scheme, &init).unwrap();
                for depth in [None, Some(1), Some(3)] {
                    let out = recv.decode(&rx, &chans, depth).unwrap();
                    assert_eq!(out.symbols, symbols, "M={m} γ={gamma} L_t={n_tx} {kind} D={depth:?}");
                }
            }
        }
    }

    #[test]
    fn branch_extension_count() {
        let p = CpmParams::reference(8);
        let scheme = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let recv = Receiver::new(&p, &scheme, &[0.0; 3]).unwrap();
        let symbols = vec![1; 30];
        let blocks = encode_symbols(&p, &scheme, &symbols, &[0.0; 3]).unwrap();
        let chan = ChannelRealization::all_ones(1, 3, 0.0);
        let rx = vec![blocks.iter().flat_map(|b| b.samples.iter().fold(vec![Complex64::default(); 24], |mut acc, s| {
            acc.iter_mut().zip(s).for_each(|(a, s)| *a += s);
            acc
        })).collect::<Vec<_>>()];
        let out = recv.decode(&rx, &vec![chan; 10], Some(10)).unwrap();
        assert_eq!(out.full_trellis_slots, 29);
        assert_eq!(out.branch_extensions, 16 * 4 * 29);
    }

    #[test]
    fn misaligned_stream() {
        let p = CpmParams::reference(8);
        let scheme = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let recv = Receiver::new(&p, &scheme, &[0.0; 3]).unwrap();
        let rx = vec![vec![Complex64::default(); 25]];
        assert_eq!(
            recv.decode(&rx, &[], None).unwrap_err(),
            Error::NotBlockAligned { samples: 25, block: 24 }
        );
    }

    #[test]
    fn perturbed_scheme_rejected_by_receiver() {
        let p = CpmParams::reference(8);
        let scheme = build_correction(CorrectionKind::LinPc, &p, 3).unwrap().perturbed(&p, 0.01);
        assert!(Receiver::new(&p, &scheme, &[0.0; 3]).is_err());
    }

    #[test]
    fn exhaustive_budget() {
        let p = CpmParams::reference(8);
        let scheme = build_correction(CorrectionKind::LinPc, &p, 3).unwrap();
        let rx = vec![vec![Complex64::default(); 24 * 4]];
        let chans = vec![ChannelRealization::all_ones(1, 3, 0.0); 4];
        assert!(matches!(
            exhaustive_ml(&p, &scheme, &[0.0; 3], &rx, &chans, 4),
            Err(Error::SearchBudget { .. })
        ));
    }
}
