//! Numerical certificates for the structural properties of the code:
//! block orthogonality, the orthogonality roots, the factored signal form,
//! the rank of the error-event signal matrix, and the spectral cost.

pub mod spectrum;

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::cpm::{cis, CpmParams};
use crate::encoder::{CodeBlock, CorrectionScheme};
use crate::error::{Error, Result};

pub use spectrum::{psd_estimate, BandwidthRule, SpectrumReport, MIN_PSD_SYMBOLS};

/// Records that serialise as `key=value` lines.
pub trait KeyValue {
    fn key_values(&self) -> Vec<(String, String)>;

    fn to_kv_string(&self) -> String {
        self.key_values().into_iter().fold(String::new(), |mut out, (k, v)| {
            let _ = writeln!(out, "{k}={v}");
            out
        })
    }
}

/// Complex matrix as CSV with columns `row,col,re,im`.
pub fn matrix_csv(m: &DMatrix<Complex64>) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{i},{j},{:e},{:e}", z.re, z.im);
        }
    }
    out
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

// ---------------------------------------------------------------- Gram

/// Gram matrix `∫_block s s^H dt` of one code block.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub gram: DMatrix<Complex64>,
    pub symbol_energy: f64,
    /// `max_{m≠m'} |G_{m,m'}|`.
    pub max_off_diagonal: f64,
    /// `max_m |G_{m,m} - E_s|`.
    pub max_diagonal_deviation: f64,
}

impl GramReport {
    pub fn off_diagonal_ratio(&self) -> f64 {
        self.max_off_diagonal / self.symbol_energy
    }

    pub fn diagonal_ratio(&self) -> f64 {
        self.max_diagonal_deviation / self.symbol_energy
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.off_diagonal_ratio() <= tol && self.diagonal_ratio() <= tol
    }
}

impl KeyValue for GramReport {
    fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("n_tx".into(), self.gram.nrows().to_string()),
            ("max_off_diagonal_rel".into(), format!("{:e}", self.off_diagonal_ratio())),
            ("max_diagonal_dev_rel".into(), format!("{:e}", self.diagonal_ratio())),
        ]
    }
}

/// Discrete Gram matrix of a block on its sampling grid (midpoint rule).
///
/// Only the upper triangle is summed; the lower triangle is its conjugate,
/// so the result is Hermitian exactly.
pub fn gram_check(params: &CpmParams, block: &CodeBlock) -> GramReport {
    let n = block.n_tx();
    let dt = params.dt();
    let mut gram = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g: Complex64 = block.samples[i].iter().zip(&block.samples[j]).map(|(a, b)| a * b.conj()).sum();
            let g = g * dt;
            if i == j {
                gram[(i, i)] = Complex64::new(g.re, 0.0);
            } else {
                gram[(i, j)] = g;
                gram[(j, i)] = g.conj();
            }
        }
    }
    let es = params.symbol_energy;
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for i in 0..n {
        diag = diag.max((gram[(i, i)].re - es).abs());
        for j in 0..n {
            if i != j {
                off = off.max(gram[(i, j)].norm());
            }
        }
    }
    GramReport { gram, symbol_energy: es, max_off_diagonal: off, max_diagonal_deviation: diag }
}

// ---------------------------------------------------------------- roots

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if TAU - w < 1e-12 {
        0.0
    } else {
        w
    }
}

fn three_term(a1: f64, a2: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, a1) + Complex64::from_polar(1.0, a1 + a2)
}

/// All `(a1, a2) ∈ [0, 2π)²` with `1 + e^{ja1} + e^{j(a1+a2)} = 0`.
///
/// Coarse grid scan for local minima of `|·|²`, then Newton refinement on the
/// real 2×2 system; duplicates (mod 2π) are merged. Sorted by `a1`.
pub fn solve_orthogonality_pairs() -> Vec<(f64, f64)> {
    const GRID: usize = 360;
    let step = TAU / GRID as f64;
    let f = |i: usize, j: usize| three_term(i as f64 * step, j as f64 * step).norm_sqr();
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for i in 0..GRID {
        for j in 0..GRID {
            let v = f(i, j);
            let is_min = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| {
                    let ii = (i as i64 + di).rem_euclid(GRID as i64) as usize;
                    let jj = (j as i64 + dj).rem_euclid(GRID as i64) as usize;
                    (di == 0 && dj == 0) || v <= f(ii, jj)
                })
            });
            if !is_min || v > 0.5 {
                continue;
            }
            let (mut a1, mut a2) = (i as f64 * step, j as f64 * step);
            for _ in 0..50 {
                let r = three_term(a1, a2);
                let e1 = Complex64::from_polar(1.0, a1);
                let e12 = Complex64::from_polar(1.0, a1 + a2);
                let j = Complex64::i();
                let d1 = j * (e1 + e12);
                let d2 = j * e12;
                let det = d1.re * d2.im - d2.re * d1.im;
                if det.abs() < 1e-300 {
                    break;
                }
                let s1 = (r.re * d2.im - d2.re * r.im) / det;
                let s2 = (d1.re * r.im - r.re * d1.im) / det;
                a1 -= s1;
                a2 -= s2;
                if s1.abs() + s2.abs() < 1e-16 {
                    break;
                }
            }
            if three_term(a1, a2).norm() > 1e-12 {
                continue;
            }
            let cand = (wrap(a1), wrap(a2));
            let near = |x: f64, y: f64| {
                let d = (x - y).abs();
                d.min(TAU - d) < 1e-8
            };
            if !roots.iter().any(|r| near(r.0, cand.0) && near(r.1, cand.1)) {
                roots.push(cand);
            }
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots
}

/// All `a1 ∈ [0, 2π)` with `1 + e^{ja1} = 0` (two antennas).
///
/// Grid scan for minima of `|1 + e^{ja}|² = 2 + 2cos a`, then Newton on its
/// derivative `-2 sin a`.
pub fn solve_orthogonality_pairs_two_term() -> Vec<f64> {
    const GRID: usize = 360;
    let step = TAU / GRID as f64;
    let f = |a: f64| (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, a)).norm_sqr();
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..GRID {
        let mut a = i as f64 * step;
        let v = f(a);
        if v > f(a - step) || v > f(a + step) || v > 0.5 {
            continue;
        }
        for _ in 0..50 {
            let s = a.sin() / a.cos();
            a -= s;
            if s.abs() < 1e-16 {
                break;
            }
        }
        if f(a).sqrt() > 1e-12 {
            continue;
        }
        let root = wrap(a);
        if !roots.iter().any(|r| (r - root).abs() < 1e-8) {
            roots.push(root);
        }
    }
    roots
}

// ---------------------------------------------------------------- factored form

/// Data phase `h·Σ_i d_i q(t - iT)` in cycles, `t` in symbol durations.
fn data_phase(params: &CpmParams, symbols: &[i32], t: f64) -> f64 {
    let gamma = params.memory_len() as f64;
    let h = params.h();
    let first = (t - gamma).floor().max(0.0) as usize;
    let last = (t.ceil().max(0.0) as usize).min(symbols.len());
    // symbols before `first` have saturated at 1/2
    let settled: f64 = symbols[..first.min(last)].iter().map(|&d| d as f64).sum::<f64>() * 0.5;
    let active: f64 = (first.min(last)..last)
        .map(|i| symbols[i] as f64 * params.pulse.eval(t - i as f64))
        .sum();
    h * (settled + active)
}

fn check_symbols(params: &CpmParams, symbols: &[i32]) -> Result<()> {
    symbols.iter().try_for_each(|&d| params.check_symbol(d))
}

/// Continuous-time form of the transmitted signals, evaluated at `grid`
/// (times in symbol durations from the start of transmission):
///
/// `s_m(t) = A·exp(j2π[θ_m(1) + h·Σ_i d_i q(t - iT) + c_m(t)])`
///
/// where `c_m` is the non-resetting correction of `scheme` (drift `κ_m` per
/// slot plus the slot-relative ramp). No phase memory is involved.
pub fn factored_signal(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    symbols: &[i32],
    initial_phases: &[f64],
    grid: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    check_symbols(params, symbols)?;
    if initial_phases.len() != scheme.n_tx {
        return Err(Error::Dimension(format!(
            "{} initial phases for {} antennas",
            initial_phases.len(),
            scheme.n_tx
        )));
    }
    let amp = params.amplitude(scheme.n_tx);
    Ok((0..scheme.n_tx)
        .map(|m| {
            grid.iter()
                .map(|&t| cis(initial_phases[m] + data_phase(params, symbols, t) + scheme.cumulative(m, t)) * amp)
                .collect()
        })
        .collect())
}

/// Factored form with corrections written as `c_m(t) = w_m·c̄(t)`.
///
/// With `w_m = (m-1)/L_t` and `c̄(t) = -t/T` this differs from the linear
/// scheme only by a phase common to all antennas.
pub fn factored_signal_weighted(
    params: &CpmParams,
    symbols: &[i32],
    initial_phases: &[f64],
    weights: &[f64],
    cbar: impl Fn(f64) -> f64,
    grid: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    check_symbols(params, symbols)?;
    if initial_phases.len() != weights.len() {
        return Err(Error::Dimension("initial phases and weights differ in length".into()));
    }
    let amp = params.amplitude(weights.len());
    Ok(weights
        .iter()
        .zip(initial_phases)
        .map(|(&w, &theta)| {
            grid.iter()
                .map(|&t| cis(theta + data_phase(params, symbols, t) + w * cbar(t)) * amp)
                .collect()
        })
        .collect())
}

/// Midpoint grid over `n_symbols` slots, in symbol durations.
pub fn midpoint_grid(params: &CpmParams, n_symbols: usize) -> Vec<f64> {
    let n = params.samples_per_symbol;
    (0..n_symbols * n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

// ---------------------------------------------------------------- diversity

/// Signal matrix of one error event `(d, d̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub sent: Vec<i32>,
    pub decided: Vec<i32>,
    pub c_s: DMatrix<Complex64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
}

/// Eigenvalues counting toward the rank must exceed this fraction of the largest.
pub const RANK_TOLERANCE: f64 = 1e-8;

impl DiversityReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.c_s.nrows()
    }
}

impl KeyValue for DiversityReport {
    fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("sent".into(), fmt_list(&self.sent)),
            ("decided".into(), fmt_list(&self.decided)),
            ("eigenvalues".into(), self.eigenvalues.iter().map(|e| format!("{e:e}")).collect::<Vec<_>>().join(";")),
            ("rank".into(), self.rank.to_string()),
        ]
    }
}

fn signal_matrix(params: &CpmParams, s: &[Vec<Complex64>], s_tilde: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let n_tx = s.len();
    // normalise by the amplitude so that Δ is unimodular-scaled
    let scale = 1.0 / params.amplitude(n_tx);
    let delta: Vec<Vec<Complex64>> = s
        .iter()
        .zip(s_tilde)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * scale).collect())
        .collect();
    let dt = params.dt();
    let mut c = DMatrix::<Complex64>::zeros(n_tx, n_tx);
    for i in 0..n_tx {
        for j in i..n_tx {
            let v: Complex64 = delta[i].iter().zip(&delta[j]).map(|(a, b)| a * b.conj()).sum::<Complex64>() * dt;
            if i == j {
                c[(i, i)] = Complex64::new(v.re, 0.0);
            } else {
                c[(i, j)] = v;
                c[(j, i)] = v.conj();
            }
        }
    }
    c
}

fn rank_report(sent: &[i32], decided: &[i32], c_s: DMatrix<Complex64>) -> DiversityReport {
    let mut eigenvalues: Vec<f64> = c_s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let max = eigenvalues.last().copied().unwrap_or(0.0);
    let rank = if max > 0.0 { eigenvalues.iter().filter(|&&e| e > RANK_TOLERANCE * max).count() } else { 0 };
    DiversityReport { sent: sent.to_vec(), decided: decided.to_vec(), c_s, eigenvalues, rank }
}

/// Signal matrix `C_s = ∫_0^{N_c T} Δ(t) Δ^H(t) dt` of the error event
/// `sent → decided`, built from the factored form on the midpoint grid.
pub fn diversity_rank(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    sent: &[i32],
    decided: &[i32],
    initial_phases: &[f64],
) -> Result<DiversityReport> {
    if sent.len() != decided.len() {
        return Err(Error::Dimension(format!("sequences of length {} and {}", sent.len(), decided.len())));
    }
    if sent == decided {
        return Err(Error::IdenticalSequences);
    }
    let grid = midpoint_grid(params, sent.len());
    let s = factored_signal(params, scheme, sent, initial_phases, &grid)?;
    let st = factored_signal(params, scheme, decided, initial_phases, &grid)?;
    Ok(rank_report(sent, decided, signal_matrix(params, &s, &st)))
}

/// [`diversity_rank`] with corrections `w_m·c̄(t)`.
pub fn diversity_rank_weighted(
    params: &CpmParams,
    sent: &[i32],
    decided: &[i32],
    initial_phases: &[f64],
    weights: &[f64],
    cbar: impl Fn(f64) -> f64 + Copy,
) -> Result<DiversityReport> {
    if sent == decided {
        return Err(Error::IdenticalSequences);
    }
    let grid = midpoint_grid(params, sent.len());
    let s = factored_signal_weighted(params, sent, initial_phases, weights, cbar, &grid)?;
    let st = factored_signal_weighted(params, decided, initial_phases, weights, cbar, &grid)?;
    Ok(rank_report(sent, decided, signal_matrix(params, &s, &st)))
}

/// Outcome of a scan over many error events.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityScan {
    pub pairs: usize,
    pub rank_failures: usize,
    /// Smallest `λ_min/λ_max` seen.
    pub worst_ratio: f64,
    /// Most negative `λ_min/trace(C_s)` seen (PSD sanity).
    pub min_trace_ratio: f64,
    pub worst: Option<DiversityReport>,
}

impl KeyValue for DiversityScan {
    fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("pairs".into(), self.pairs.to_string()),
            ("rank_failures".into(), self.rank_failures.to_string()),
            ("worst_eigen_ratio".into(), format!("{:e}", self.worst_ratio)),
        ];
        if let Some(w) = &self.worst {
            kv.extend(w.key_values().into_iter().map(|(k, v)| (format!("worst_{k}"), v)));
        }
        kv
    }
}

fn scan(params: &CpmParams, scheme: &CorrectionScheme, initial_phases: &[f64], pairs: &[(Vec<i32>, Vec<i32>)]) -> Result<DiversityScan> {
    let reports: Vec<DiversityReport> = pairs
        .par_iter()
        .map(|(d, dt)| diversity_rank(params, scheme, d, dt, initial_phases))
        .collect::<Result<_>>()?;
    let n_tx = scheme.n_tx;
    let mut out = DiversityScan {
        pairs: reports.len(),
        rank_failures: 0,
        worst_ratio: f64::INFINITY,
        min_trace_ratio: f64::INFINITY,
        worst: None,
    };
    for r in reports {
        if r.rank < n_tx {
            out.rank_failures += 1;
        }
        let trace: f64 = r.eigenvalues.iter().sum();
        out.min_trace_ratio = out.min_trace_ratio.min(r.min_eigenvalue() / trace);
        let ratio = r.min_eigenvalue() / r.max_eigenvalue();
        if ratio < out.worst_ratio {
            out.worst_ratio = ratio;
            out.worst = Some(r);
        }
    }
    Ok(out)
}

fn sequence(params: &CpmParams, mut code: usize, len: usize) -> Vec<i32> {
    let m = params.alphabet_size as usize;
    let mut s = vec![0; len];
    for x in s.iter_mut().rev() {
        *x = params.level(code % m);
        code /= m;
    }
    s
}

/// Every ordered pair of distinct length-`n_c` sequences.
pub fn diversity_scan_exhaustive(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    n_c: usize,
    initial_phases: &[f64],
) -> Result<DiversityScan> {
    let count = (params.alphabet_size as usize).pow(n_c as u32);
    let seqs: Vec<Vec<i32>> = (0..count).map(|c| sequence(params, c, n_c)).collect();
    let pairs: Vec<_> = (0..count)
        .flat_map(|i| (0..count).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| (seqs[i].clone(), seqs[j].clone()))
        .collect();
    scan(params, scheme, initial_phases, &pairs)
}

/// `n_pairs` random pairs of distinct length-`n_c` sequences.
pub fn diversity_scan_random<R: Rng + ?Sized>(
    params: &CpmParams,
    scheme: &CorrectionScheme,
    n_c: usize,
    n_pairs: usize,
    initial_phases: &[f64],
    rng: &mut R,
) -> Result<DiversityScan> {
    let m = params.alphabet_size as usize;
    let draw = |rng: &mut R| -> Vec<i32> { (0..n_c).map(|_| params.level(rng.random_range(0..m))).collect() };
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let a = draw(rng);
        let b = draw(rng);
        if a != b {
            pairs.push((a, b));
        }
    }
    scan(params, scheme, initial_phases, &pairs)
}
