use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stcpm::analysis::gram_check;
use stcpm::channel::{apply, complex_gaussian, draw_channel, sample_noise_variance};
use stcpm::cpm::cis;
use stcpm::encoder::{encode_symbols, CorrectionScheme};
use stcpm::receiver::{metric_full_block, metric_separable_block, received_energy};
use stcpm::{build_correction, ChannelRealization, CorrectionKind, CpmParams, PulseShape, Receiver, SnrSpec, SolutionBranch};

fn kind_strategy() -> impl Strategy<Value = CorrectionKind> {
    prop_oneof![
        Just(CorrectionKind::None),
        Just(CorrectionKind::LinPc),
        Just(CorrectionKind::RcPc),
        Just(CorrectionKind::OffPc),
    ]
}

fn corrected_kind() -> impl Strategy<Value = CorrectionKind> {
    prop_oneof![Just(CorrectionKind::LinPc), Just(CorrectionKind::RcPc), Just(CorrectionKind::OffPc)]
}

fn pulse_strategy() -> impl Strategy<Value = PulseShape> {
    (1usize..4, any::<bool>()).prop_map(|(l, rec)| if rec { PulseShape::rec(l) } else { PulseShape::rc(l) })
}

fn levels(params: &CpmParams, idx: &[usize]) -> Vec<i32> {
    idx.iter().map(|&i| params.level(i % params.alphabet_size as usize)).collect()
}

/// Phase distance modulo one cycle.
fn wrapped(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase_is_continuous_across_slots(
        kind in kind_strategy(),
        pulse in pulse_strategy(),
        n_tx in 1usize..4,
        idx in prop::collection::vec(0usize..4, 1..8),
        init in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let params = CpmParams::new(4, 1, 4, pulse, 8).unwrap();
        let scheme = build_correction(kind, &params, n_tx).unwrap();
        let symbols = levels(&params, &idx.repeat(n_tx));
        let blocks = encode_symbols(&params, &scheme, &symbols, &init[..n_tx]).unwrap();
        for (m, theta) in init.iter().enumerate().take(n_tx) {
            let slots: Vec<_> = blocks.iter().flat_map(|b| b.phases[m].iter()).collect();
            for (k, pair) in slots.windows(2).enumerate() {
                prop_assert!(wrapped(pair[0].end, pair[1].start) < 1e-12, "antenna {m} slot {k}");
            }
            prop_assert!(wrapped(slots[0].start, *theta) < 1e-12);
        }
    }

    #[test]
    fn envelope_is_constant(
        kind in kind_strategy(),
        n_tx in 1usize..4,
        idx in prop::collection::vec(0usize..4, 1..8),
    ) {
        let params = CpmParams::reference(8);
        let scheme = build_correction(kind, &params, n_tx).unwrap();
        let symbols = levels(&params, &idx.repeat(n_tx));
        let amp = params.amplitude(n_tx);
        for b in encode_symbols(&params, &scheme, &symbols, &vec![0.0; n_tx]).unwrap() {
            for s in b.samples.iter().flatten() {
                prop_assert!((s.norm() - amp).abs() < 1e-12);
            }
            // every antenna spends Es per block
            for s in &b.samples {
                let e: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() * params.dt();
                prop_assert!((e - params.symbol_energy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uncorrected_matches_textbook_cpm(
        m_log in 1u32..4,
        m0 in 1u32..4,
        p in 2u32..8,
        pulse in pulse_strategy(),
        theta0 in 0.0f64..1.0,
        idx in prop::collection::vec(0usize..8, 1..20),
    ) {
        let Ok(params) = CpmParams::new(1 << m_log, m0, p, pulse, 8) else { return Ok(()) };
        let scheme = build_correction(CorrectionKind::None, &params, 1).unwrap();
        let symbols = levels(&params, &idx);
        let blocks = encode_symbols(&params, &scheme, &symbols, &[theta0]).unwrap();
        let n = params.samples_per_symbol;
        let amp = params.amplitude(1);
        for (slot, b) in blocks.iter().enumerate() {
            for k in 0..n {
                // phase recomputed from scratch at t = slot + (k + 1/2)/N
                let t = slot as f64 + (k as f64 + 0.5) / n as f64;
                let phi = theta0
                    + params.h() * symbols.iter().enumerate().map(|(i, &d)| d as f64 * params.q(t - i as f64)).sum::<f64>();
                prop_assert!((b.samples[0][k] - cis(phi) * amp).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn code_blocks_are_orthogonal(
        kind in corrected_kind(),
        n_tx in 2usize..4,
        conjugate in any::<bool>(),
        pulse in pulse_strategy(),
        idx in prop::collection::vec(0usize..4, 3..30),
        init in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let params = CpmParams::new(4, 1, 4, pulse, 16).unwrap();
        let branch = if conjugate && n_tx == 3 { SolutionBranch::Conjugate } else { SolutionBranch::Primary };
        let scheme = CorrectionScheme::new(kind, &params, n_tx, branch).unwrap();
        let len = idx.len() / n_tx * n_tx;
        let symbols = levels(&params, &idx[..len]);
        for b in encode_symbols(&params, &scheme, &symbols, &init[..n_tx]).unwrap() {
            let g = gram_check(&params, &b);
            prop_assert!(g.off_diagonal_ratio() < 1e-9 && g.diagonal_ratio() < 1e-9);
        }
    }

    #[test]
    fn separable_metric_gap_is_hypothesis_free(
        kind in corrected_kind(),
        n_rx in 1usize..3,
        idx in prop::collection::vec(0usize..4, 3),
        seed in any::<u64>(),
    ) {
        let params = CpmParams::reference(8);
        let scheme = build_correction(kind, &params, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = encode_symbols(&params, &scheme, &levels(&params, &idx), &[0.0; 3]).unwrap().remove(0);
        // arbitrary received signal: not required to be a valid transmission
        let rx: Vec<Vec<Complex64>> =
            (0..n_rx).map(|_| (0..3 * params.samples_per_symbol).map(|_| complex_gaussian(&mut rng, 2.0)).collect()).collect();
        let chan = draw_channel(&mut rng, n_rx, 3, 1.0);
        let gap = metric_separable_block(&params, &rx, &chan, &block) - metric_full_block(&params, &rx, &chan, &block);
        let expected = 2.0 * received_energy(&params, &rx);
        prop_assert!((gap - expected).abs() <= 1e-9 * expected.max(1.0));
    }
}

#[test]
fn truncated_decoding_agrees_with_full_traceback() {
    let params = CpmParams::reference(8);
    let mut total = 0usize;
    let mut differ = 0usize;
    for (kind, snr) in [(CorrectionKind::LinPc, 10.0), (CorrectionKind::OffPc, 12.0), (CorrectionKind::RcPc, 15.0)] {
        let scheme = build_correction(kind, &params, 3).unwrap();
        let receiver = Receiver::new(&params, &scheme, &[0.0; 3]).unwrap();
        let n0 = SnrSpec::new(snr).unwrap().n0(&params);
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let symbols: Vec<i32> = (0..600).map(|_| params.level(rng.random_range(0..4))).collect();
            let blocks = encode_symbols(&params, &scheme, &symbols, &[0.0; 3]).unwrap();
            let chans: Vec<ChannelRealization> = blocks.iter().map(|_| draw_channel(&mut rng, 1, 3, n0)).collect();
            let mut rx = vec![Vec::new()];
            for (b, c) in blocks.iter().zip(&chans) {
                rx[0].extend(apply(&b.samples, c, &params, &mut rng).unwrap().remove(0));
            }
            let full = receiver.decode(&rx, &chans, None).unwrap();
            let cut = receiver.decode(&rx, &chans, Some(10)).unwrap();
            total += full.symbols.len();
            differ += full.symbols.iter().zip(&cut.symbols).filter(|(a, b)| a != b).count();
        }
    }
    assert!((differ as f64) < 1e-3 * total as f64, "{differ} of {total} decisions changed");
}

#[test]
fn noise_power_matches_density() {
    let params = CpmParams::reference(8);
    let n0 = 0.37;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let silent = vec![vec![Complex64::default(); 200_000]];
    let chan = ChannelRealization::all_ones(1, 1, n0);
    let noise = apply(&silent, &chan, &params, &mut rng).unwrap().remove(0);
    let mean = noise.iter().map(|z| z.norm_sqr()).sum::<f64>() / noise.len() as f64;
    let var = sample_noise_variance(&params, n0);
    assert!((mean / var - 1.0).abs() < 0.01, "{mean} vs {var}");
    // projected onto a unit-energy waveform the noise has variance N0
    let m = 20_000;
    let per = params.samples_per_symbol;
    let unit = (1.0 / (per as f64 * params.dt())).sqrt();
    let proj: Vec<Complex64> =
        noise.chunks(per).take(m).map(|c| c.iter().sum::<Complex64>() * unit * params.dt()).collect();
    let pv = proj.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    assert!((pv / n0 - 1.0).abs() < 0.05, "{pv} vs {n0}");
}

#[test]
fn fading_is_unit_power_and_independent_across_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let draws: Vec<Complex64> = (0..n).map(|_| draw_channel(&mut rng, 1, 1, 1.0).gains[0][0]).collect();
    let power = draws.iter().map(|a| a.norm_sqr()).sum::<f64>() / n as f64;
    assert!((power - 1.0).abs() < 0.005, "{power}");
    let across = draws.windows(2).map(|w| w[0] * w[1].conj()).sum::<Complex64>() / n as f64;
    assert!(across.norm() < 0.01, "{across}");
    // and between the entries of one matrix
    let mats: Vec<ChannelRealization> = (0..100_000).map(|_| draw_channel(&mut rng, 2, 3, 1.0)).collect();
    let within = mats.iter().map(|c| c.gains[0][0] * c.gains[1][2].conj()).sum::<Complex64>() / mats.len() as f64;
    assert!(within.norm() < 0.02, "{within}");
}

#[test]
fn received_energy_accounts_for_signal_and_noise() {
    let params = CpmParams::reference(8);
    let scheme = build_correction(CorrectionKind::LinPc, &params, 3).unwrap();
    let block = encode_symbols(&params, &scheme, &[3, -1, 1], &[0.2, 0.0, 0.7]).unwrap().remove(0);
    let chan = ChannelRealization::new(
        vec![vec![Complex64::new(0.3, -1.1), Complex64::new(0.8, 0.2), Complex64::new(-0.4, 0.5)]],
        0.25,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trials = 4000;
    let mean = (0..trials)
        .map(|_| received_energy(&params, &apply(&block.samples, &chan, &params, &mut rng).unwrap()))
        .sum::<f64>()
        / trials as f64;
    let signal: f64 = chan.gains[0].iter().map(|a| a.norm_sqr()).sum::<f64>() * params.symbol_energy;
    // sampled white noise carries N0 per sample: N0·N_sps per symbol time
    let noise = chan.n0 * (3 * params.samples_per_symbol) as f64;
    let expected = signal + noise;
    assert!((mean / expected - 1.0).abs() < 0.01, "{mean} vs {expected}");
}

#[test]
fn uninformative_channel_gives_coin_flip_decisions() {
    let params = CpmParams::reference(8);
    let scheme = build_correction(CorrectionKind::LinPc, &params, 3).unwrap();
    let receiver = Receiver::new(&params, &scheme, &[0.0; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut errors, mut bits) = (0usize, 0usize);
    for _ in 0..20 {
        let symbols: Vec<i32> = (0..600).map(|_| params.level(rng.random_range(0..4))).collect();
        let blocks = encode_symbols(&params, &scheme, &symbols, &[0.0; 3]).unwrap();
        let chans: Vec<ChannelRealization> =
            blocks.iter().map(|_| ChannelRealization::new(vec![vec![Complex64::default(); 3]], 0.1)).collect();
        let mut rx = vec![Vec::new()];
        for (b, c) in blocks.iter().zip(&chans) {
            rx[0].extend(apply(&b.samples, c, &params, &mut rng).unwrap().remove(0));
        }
        let sent = stcpm::encoder::symbols_to_bits(&symbols, 4).unwrap();
        let got = receiver.decode(&rx, &chans, Some(10)).unwrap().bits;
        errors += sent.iter().zip(&got).filter(|(a, b)| a != b).count();
        bits += sent.len();
    }
    let ber = errors as f64 / bits as f64;
    assert!((ber - 0.5).abs() < 0.02, "{ber}");
}

/// Textbook CPM over `symbols.len()` slots, coded without the crate's encoder.
fn textbook_waveform(params: &CpmParams, symbols: &[i32]) -> Vec<Complex64> {
    let n = params.samples_per_symbol;
    (0..symbols.len() * n)
        .map(|k| {
            let t = (k as f64 + 0.5) / n as f64;
            let phi: f64 = symbols.iter().enumerate().map(|(i, &d)| d as f64 * params.q(t - i as f64)).sum();
            Complex64::from_polar(1.0, std::f64::consts::TAU * params.h() * phi)
        })
        .collect()
}

/// SNR calibration: the full simulation chain (encoder, `Eb/N0` to noise
/// conversion, channel, trellis decoder) against an exhaustive-ML detector
/// with its own waveform, noise scaling and noise source, both on 5-symbol
/// transmissions over AWGN at `Eb/N0 = 8 dB`.
#[test]
fn awgn_ber_matches_independent_ml_reference() {
    use rand_distr::{Distribution, StandardNormal};
    use stcpm::experiment::clustered_interval;
    use stcpm::encoder::{gray_unmap, symbols_to_bits};

    const LEN: usize = 5;
    const TRIALS: u64 = 40_000;
    let params = CpmParams::reference(8);
    let bits_per_trial = 2 * LEN as u64;
    let bit_errors = |a: &[u8], b: &[u8]| a.iter().zip(b).filter(|(x, y)| x != y).count() as u64;

    // reference: Es = 1, Eb = Es/2, per-sample noise variance N0·N/T
    let n0 = 0.5 / 10f64.powf(0.8);
    let sigma = (n0 * params.samples_per_symbol as f64 / 2.0).sqrt();
    let hyps: Vec<Vec<i32>> = (0..4usize.pow(LEN as u32))
        .map(|c| (0..LEN).map(|k| params.level((c >> (2 * k)) & 3)).collect())
        .collect();
    let waves: Vec<Vec<Complex64>> = hyps.iter().map(|h| textbook_waveform(&params, h)).collect();
    let to_bits = |h: &[i32]| h.iter().flat_map(|&d| gray_unmap(d, 4).unwrap()).collect::<Vec<u8>>();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let (mut oe, mut osq) = (0u64, 0.0f64);
    for _ in 0..TRIALS {
        let sent = rng.random_range(0..hyps.len());
        let y: Vec<Complex64> = waves[sent]
            .iter()
            .map(|s| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                s + Complex64::new(re, im) * sigma
            })
            .collect();
        // equal-energy hypotheses: ML is maximum correlation
        let best = waves
            .iter()
            .map(|w| y.iter().zip(w).map(|(a, b)| (a * b.conj()).re).sum::<f64>())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        let e = bit_errors(&to_bits(&hyps[sent]), &to_bits(&hyps[best]));
        oe += e;
        osq += (e * e) as f64;
    }
    let oracle = clustered_interval(oe, osq, TRIALS, bits_per_trial);

    let scheme = build_correction(CorrectionKind::None, &params, 1).unwrap();
    let receiver = Receiver::new(&params, &scheme, &[0.0]).unwrap();
    let crate_n0 = SnrSpec::new(8.0).unwrap().n0(&params);
    let (mut ve, mut vsq) = (0u64, 0.0f64);
    for _ in 0..TRIALS {
        let symbols: Vec<i32> = (0..LEN).map(|_| params.level(rng.random_range(0..4))).collect();
        let blocks = encode_symbols(&params, &scheme, &symbols, &[0.0]).unwrap();
        let chans: Vec<ChannelRealization> = blocks.iter().map(|_| ChannelRealization::all_ones(1, 1, crate_n0)).collect();
        let mut rx = vec![Vec::new()];
        for (b, c) in blocks.iter().zip(&chans) {
            rx[0].extend(apply(&b.samples, c, &params, &mut rng).unwrap().remove(0));
        }
        let got = receiver.decode(&rx, &chans, None).unwrap().bits;
        let e = bit_errors(&symbols_to_bits(&symbols, 4).unwrap(), &got);
        ve += e;
        vsq += (e * e) as f64;
    }
    let decoder = clustered_interval(ve, vsq, TRIALS, bits_per_trial);
    let total = (TRIALS * bits_per_trial) as f64;
    println!("Eb/N0 8 dB: reference ML {:.3e} ({oe} errors), simulation {:.3e} ({ve} errors)", oe as f64 / total, ve as f64 / total);
    assert!(oe >= 100 && ve >= 100, "too few errors: reference {oe}, simulation {ve}");
    assert!(oracle.0 <= decoder.1 && decoder.0 <= oracle.1, "reference {oracle:?} vs simulation {decoder:?}");
}

#[test]
fn uncorrected_spectrum_against_itself_has_unit_expansion() {
    use stcpm::analysis::spectrum::{psd_estimate, BandwidthRule, MIN_PSD_SYMBOLS};
    let params = CpmParams::new(8, 1, 4, PulseShape::rec(2), 8).unwrap();
    let none = build_correction(CorrectionKind::None, &params, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = psd_estimate(&params, &none, 0, MIN_PSD_SYMBOLS, BandwidthRule::default(), &mut rng).unwrap();
    assert_eq!(r.expansion_ratio(), 1.0);
}

#[test]
fn offpc_spectrum_is_pseudo_alphabet_cpm_spectrum() {
    use stcpm::analysis::spectrum::welch;
    use stcpm::cpm::{conventional_waveform, PhaseState};
    use stcpm::encoder::pseudo_alphabets;
    let params = CpmParams::new(8, 1, 4, PulseShape::rec(2), 8).unwrap();
    let scheme = build_correction(CorrectionKind::OffPc, &params, 3).unwrap();
    let alphabet = &pseudo_alphabets(&params, &scheme).unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let symbols: Vec<i32> = (0..3 * 4096).map(|_| params.level(rng.random_range(0..8))).collect();
    let coded: Vec<Complex64> = encode_symbols(&params, &scheme, &symbols, &[0.0; 3])
        .unwrap()
        .iter()
        .flat_map(|b| b.samples[0].clone())
        .collect();
    let q_sum: f64 = (0..2).map(|k| params.q(k as f64)).sum();
    let start = PhaseState::with_history(-2.0 * scheme.increments[0] * q_sum, vec![alphabet.offset]);
    let levels: Vec<f64> = symbols.iter().map(|&d| d as f64 + alphabet.offset).collect();
    let (plain, _) = conventional_waveform(&params, &start, &levels, 3).unwrap();
    let seg = 256 * params.samples_per_symbol;
    let (a, b) = (welch(&coded, 8, seg), welch(&plain, 8, seg));
    let peak = a.psd.iter().copied().fold(0.0, f64::max);
    let worst = a.psd.iter().zip(&b.psd).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9 * peak, "{worst}");
    // the offset shifts the spectral centroid by offset·h/2 cycles per symbol
    let centroid = |p: &[f64]| a.freq_norm.iter().zip(p).map(|(f, v)| f * v).sum::<f64>() / p.iter().sum::<f64>();
    let shift = alphabet.offset * params.h() / 2.0;
    assert!((centroid(&a.psd) - shift).abs() < 0.02, "{} vs {shift}", centroid(&a.psd));
}

#[test]
fn deeper_path_memory_does_not_hurt() {
    use stcpm::experiment::{ber_sweep, ExperimentConfig};
    let base = ExperimentConfig { snr_db: vec![6.0], target_errors: 400, seed: 17, ..Default::default() };
    let short = ber_sweep(&ExperimentConfig { truncation_depth: 1, ..base.clone() }, |_| {}).unwrap().remove(0);
    let long = ber_sweep(&ExperimentConfig { truncation_depth: 10, ..base }, |_| {}).unwrap().remove(0);
    let sigma = (short.ber * (1.0 - short.ber) / short.bits as f64).sqrt() * short.design_effect.sqrt();
    assert!(long.ber <= short.ber + 2.0 * sigma, "D=10 {} vs D=1 {}", long.ber, short.ber);
}
