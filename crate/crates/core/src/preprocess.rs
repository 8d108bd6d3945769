//! Deterministic transforms between raw channels and network-ready data:
//! normalisation and re/im stacking for the generator, and the time-domain
//! chain (IFFT, profiling, sequence mixing, 1-bit quantisation, phase
//! extraction) for the phase network.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, ChannelMatrix};
use crate::error::{Error, Result};
use crate::fft;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub frobenius_norm: f64,
    pub scale_factor: f64,
}

impl ScaleRecord {
    /// Multiplier that maps the raw matrix onto the normalised one.
    pub fn gain(&self) -> f64 {
        self.scale_factor / self.frobenius_norm
    }
}

/// Normalised channel laid out as `[rows x cols x 2]` (re, im innermost).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedChannel {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub scale: ScaleRecord,
}

impl StackedChannel {
    pub fn shape(&self) -> [usize; 3] {
        [self.rows, self.cols, 2]
    }

    /// Undo the normalisation with the stored record.
    pub fn denormalize(&self, kind: ChannelKind) -> ChannelMatrix {
        let mut h = unstack_reim(&self.data, self.rows, self.cols, kind).expect("consistent stacked shape");
        let inv = 1.0 / self.scale.gain();
        for z in h.data_mut() {
            *z *= inv;
        }
        h
    }
}

/// Default scale factor `sqrt(M * N_sub)`: unit-RMS entries after scaling.
pub fn default_scale_factor(rows: usize, cols: usize) -> f64 {
    ((rows * cols) as f64).sqrt()
}

/// `H * scale / ||H||_F`, stacked.
pub fn normalize_scale(h: &ChannelMatrix, scale_factor: f64) -> Result<StackedChannel> {
    let norm = h.frobenius_norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical(format!(
            "cannot normalise a matrix with Frobenius norm {norm}"
        )));
    }
    let scale = ScaleRecord {
        frobenius_norm: norm,
        scale_factor,
    };
    let g = scale.gain();
    let mut data = stack_reim(h);
    for v in &mut data {
        *v *= g;
    }
    Ok(StackedChannel {
        rows: h.rows(),
        cols: h.cols(),
        data,
        scale,
    })
}

/// `[rows x cols x 2]` real layout of a complex matrix.
pub fn stack_reim(h: &ChannelMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * h.data().len());
    for z in h.data() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

pub fn unstack_reim(data: &[f64], rows: usize, cols: usize, kind: ChannelKind) -> Result<ChannelMatrix> {
    if data.len() != 2 * rows * cols {
        return Err(Error::Shape(format!(
            "stacked tensor of {} values does not match [{rows} x {cols} x 2]",
            data.len()
        )));
    }
    let v = data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ChannelMatrix::from_vec(rows, cols, v, kind)
}

/// Per-row inverse DFT: frequency response to channel impulse response.
pub fn ifft_rows(h: &ChannelMatrix) -> ChannelMatrix {
    let mut out = h.clone();
    for r in 0..out.rows() {
        fft::ifft_in_place(out.row_mut(r));
    }
    out
}

/// Per-row forward DFT, inverse of [`ifft_rows`].
pub fn fft_rows(cir: &ChannelMatrix) -> ChannelMatrix {
    let mut out = cir.clone();
    for r in 0..out.rows() {
        fft::fft_in_place(out.row_mut(r));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CirSource {
    Truth,
    NoisyMeasurement,
    Generated,
    Quantized,
    Reconstructed,
}

/// Oversampled, windowed impulse response of one antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfiledCir {
    pub taps: Vec<Complex64>,
    pub source: CirSource,
    /// First oversampled tap of the window (may be negative: circular).
    pub window_offset: i64,
    pub oversample: usize,
}

impl ProfiledCir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Oversampling factor O.
    pub oversample: usize,
    /// Window length K in oversampled taps.
    pub window: usize,
    /// First oversampled tap of the window; negative values wrap around.
    pub window_offset: i64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            oversample: 4,
            window: 128,
            window_offset: -16,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self, num_subcarriers: usize) -> Result<()> {
        if self.oversample == 0 {
            return Err(Error::Config("oversampling factor must be at least 1".into()));
        }
        if self.window == 0 || self.window > self.oversample * num_subcarriers {
            return Err(Error::Config(format!(
                "window of {} taps does not fit {} oversampled taps",
                self.window,
                self.oversample * num_subcarriers
            )));
        }
        Ok(())
    }
}

/// Oversamples a CIR by spectral zero-padding and keeps `K` contiguous taps.
///
/// The oversampled response is scaled by `sqrt(O)` so that tap `O * n`
/// reproduces tap `n` of the input exactly.
pub fn profile(cir_row: &[Complex64], cfg: &ProfileConfig, source: CirSource) -> Result<ProfiledCir> {
    let n = cir_row.len();
    cfg.validate(n)?;
    let long = cfg.oversample * n;
    let mut spec = fft::fft(cir_row);
    spec.resize(long, Complex64::new(0.0, 0.0));
    fft::ifft_in_place(&mut spec);
    let gain = (cfg.oversample as f64).sqrt();
    let taps = (0..cfg.window)
        .map(|k| {
            let idx = (cfg.window_offset + k as i64).rem_euclid(long as i64) as usize;
            spec[idx] * gain
        })
        .collect();
    Ok(ProfiledCir {
        taps,
        source,
        window_offset: cfg.window_offset,
        oversample: cfg.oversample,
    })
}

/// Unit-modulus, random-phase frequency-domain pilot mixing sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSequence {
    pub values: Vec<Complex64>,
    pub seed: u64,
}

impl MixingSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(|z| z.conj()).collect(),
            seed: self.seed,
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![Complex64::new(1.0, 0.0); len],
            seed: 0,
        }
    }
}

pub fn gen_sequence(len: usize, seed: u64) -> MixingSequence {
    let mut r = rng::seeded(seed);
    let values = (0..len)
        .map(|_| Complex64::from_polar(1.0, 2.0 * PI * r.random::<f64>()))
        .collect();
    MixingSequence { values, seed }
}

/// `F^{-1}{ F{p} . s }` on the K-tap window.
pub fn apply_sequence(p: &ProfiledCir, s: &MixingSequence) -> Result<ProfiledCir> {
    if p.len() != s.len() {
        return Err(Error::Shape(format!(
            "sequence of length {} cannot mix a {}-tap window",
            s.len(),
            p.len()
        )));
    }
    let mut spec = fft::fft(&p.taps);
    for (x, m) in spec.iter_mut().zip(&s.values) {
        *x *= m;
    }
    fft::ifft_in_place(&mut spec);
    Ok(ProfiledCir { taps: spec, ..p.clone() })
}

#[inline]
fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Independent sign quantisation of the real and imaginary parts, scaled to
/// unit power: outputs lie in `{(±1 ± j)/sqrt(2)}`. `sign(0) = +1`.
pub fn quantize_1bit(x: &[Complex64]) -> Vec<Complex64> {
    x.iter()
        .map(|z| Complex64::new(sign(z.re) * FRAC_1_SQRT_2, sign(z.im) * FRAC_1_SQRT_2))
        .collect()
}

/// Angle in `(-pi, pi]`; the angle of zero is 0.
pub fn phase_of(x: &[Complex64]) -> Vec<f64> {
    x.iter()
        .map(|z| {
            if z.re == 0.0 && z.im == 0.0 {
                0.0
            } else {
                let a = z.im.atan2(z.re);
                if a <= -PI {
                    PI
                } else {
                    a
                }
            }
        })
        .collect()
}

pub fn magnitude_of(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|z| z.norm()).collect()
}

pub fn combine_mag_phase(mag: &[f64], phase: &[f64]) -> Result<Vec<Complex64>> {
    if mag.len() != phase.len() {
        return Err(Error::Shape(format!(
            "magnitude ({}) and phase ({}) lengths differ",
            mag.len(),
            phase.len()
        )));
    }
    Ok(mag.iter().zip(phase).map(|(&m, &p)| Complex64::from_polar(m, p)).collect())
}

/// Per-antenna time-domain chain: IFFT, profiling, sequence mixing.
pub fn mixed_chain(h: &ChannelMatrix, cfg: &ProfileConfig, seq: &MixingSequence, source: CirSource) -> Result<Vec<ProfiledCir>> {
    let cir = ifft_rows(h);
    (0..cir.rows())
        .map(|r| apply_sequence(&profile(cir.row(r), cfg, source)?, seq))
        .collect()
}

/// Domain in which the SNR of the 1-bit measurement chain is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnrDomain {
    /// Per-entry SNR of the frequency-domain channel.
    Subcarrier,
    /// SNR of the profiled `K`-tap window the phase network observes.
    #[default]
    ProfiledWindow,
}

/// Complex noise variance per subcarrier entry that yields `snr_db` in the
/// requested domain.
///
/// With unitary transforms and the `sqrt(O)` interpolation gain, white
/// frequency-domain noise of variance `s2` lands with variance `s2` on every
/// profiled tap, so the window SNR is `E_win / (M K s2)`.
pub fn chain_noise_variance(h: &ChannelMatrix, cfg: &ProfileConfig, snr_db: f64, domain: SnrDomain) -> Result<f64> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let lin = 10f64.powf(snr_db / 10.0);
    match domain {
        SnrDomain::Subcarrier => Ok(h.mean_power() / lin),
        SnrDomain::ProfiledWindow => {
            let cir = ifft_rows(h);
            let mut e = 0.0;
            for r in 0..cir.rows() {
                e += profile(cir.row(r), cfg, CirSource::Truth)?.energy();
            }
            Ok(e / (h.rows() * cfg.window) as f64 / lin)
        }
    }
}

/// Which chain provides the phase labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    Noiseless,
    Noisy,
}

/// One phase-network training sequence (one antenna of one channel).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSample {
    /// `K x 2` row-major: generator phase, 1-bit phase.
    pub inputs: Vec<f64>,
    /// `K` target phases.
    pub label: Vec<f64>,
}

impl PhaseSample {
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }
}

/// All time-domain signals derived from one channel.
#[derive(Debug, Clone)]
pub struct PhaseChains {
    pub truth: Vec<ProfiledCir>,
    pub noisy: Vec<ProfiledCir>,
    pub generated: Vec<ProfiledCir>,
    pub quantized: Vec<ProfiledCir>,
    pub samples: Vec<PhaseSample>,
}

/// Builds the per-antenna phase-network inputs `(angle(H_g), angle(H_q))` and
/// labels `angle(H)` from the desired channel `h`, its noisy measurement
/// `h_noisy = H + Z`, and the generator output `h_gen`.
pub fn build_lstm_inputs(
    h_gen: &ChannelMatrix,
    h: &ChannelMatrix,
    h_noisy: &ChannelMatrix,
    seq: &MixingSequence,
    cfg: &ProfileConfig,
    labels: LabelSource,
) -> Result<PhaseChains> {
    if h_gen.shape() != h.shape() || h_noisy.shape() != h.shape() {
        return Err(Error::Shape(format!(
            "generated {:?}, desired {:?} and noisy {:?} channels must agree",
            h_gen.shape(),
            h.shape(),
            h_noisy.shape()
        )));
    }
    let truth = mixed_chain(h, cfg, seq, CirSource::Truth)?;
    let noisy = mixed_chain(h_noisy, cfg, seq, CirSource::NoisyMeasurement)?;
    let generated = mixed_chain(h_gen, cfg, seq, CirSource::Generated)?;
    let quantized: Vec<ProfiledCir> = noisy
        .iter()
        .map(|p| ProfiledCir {
            taps: quantize_1bit(&p.taps),
            source: CirSource::Quantized,
            ..p.clone()
        })
        .collect();
    let samples = (0..h.rows())
        .map(|m| {
            let i1 = phase_of(&generated[m].taps);
            let i2 = phase_of(&quantized[m].taps);
            let label = match labels {
                LabelSource::Noiseless => phase_of(&truth[m].taps),
                LabelSource::Noisy => phase_of(&noisy[m].taps),
            };
            let inputs = i1.iter().zip(&i2).flat_map(|(&a, &b)| [a, b]).collect();
            PhaseSample { inputs, label }
        })
        .collect();
    Ok(PhaseChains {
        truth,
        noisy,
        generated,
        quantized,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{full_channel, ArrayGeometry, MultipathComponent, MultipathParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ChannelMatrix {
        let mut r = rng::seeded(seed);
        let v = (0..rows * cols)
            .map(|_| c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
            .collect();
        ChannelMatrix::from_vec(rows, cols, v, ChannelKind::Desired).unwrap()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn normalisation_gives_unit_rms_and_inverts() {
        let h = random_matrix(8, 50, 1);
        let target = h.scaled(c(5.0 / h.frobenius_norm(), 0.0));
        assert!((target.frobenius_norm() - 5.0).abs() < 1e-12);
        let s = normalize_scale(&target, default_scale_factor(8, 50)).unwrap();
        let rms = (s.data.iter().map(|v| v * v).sum::<f64>() / 400.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
        let back = s.denormalize(ChannelKind::Desired);
        assert!(max_err(back.data(), target.data()) < 1e-12 * 5.0);
    }

    #[test]
    fn normalisation_is_scale_invariant() {
        let h = random_matrix(4, 16, 2);
        let a = normalize_scale(&h, 3.0).unwrap();
        let b = normalize_scale(&h.scaled(c(7.5, 0.0)), 3.0).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_cannot_be_normalised() {
        let z = ChannelMatrix::zeros(2, 2, ChannelKind::Desired);
        assert!(normalize_scale(&z, 1.0).is_err());
    }

    #[test]
    fn stacking_layout() {
        let h = ChannelMatrix::from_vec(1, 2, vec![c(1.0, 0.0), c(2.0, 0.0)], ChannelKind::Desired).unwrap();
        assert_eq!(stack_reim(&h), vec![1.0, 0.0, 2.0, 0.0]);
        let jh = h.scaled(c(0.0, 1.0));
        assert_eq!(stack_reim(&jh), vec![0.0, 1.0, 0.0, 2.0]);
        let back = unstack_reim(&stack_reim(&h), 1, 2, ChannelKind::Desired).unwrap();
        assert_eq!(back, h);
        assert!(unstack_reim(&[1.0], 1, 1, ChannelKind::Desired).is_err());
    }

    #[test]
    fn integer_delay_becomes_impulse() {
        let geom = ArrayGeometry::half_wavelength(2).unwrap();
        let p = MultipathParams::new(vec![MultipathComponent {
            delay: 7.0,
            amplitude: c(1.0, 0.0),
            doa: 1.0,
        }]);
        let h = full_channel(&p, &geom, 64);
        let cir = ifft_rows(&h);
        for k in 0..64 {
            let v = cir.get(0, k).norm();
            if k == 7 {
                assert!((v - 8.0).abs() < 1e-10);
            } else {
                assert!(v < 1e-10);
            }
        }
        let back = fft_rows(&cir);
        assert!(max_err(back.data(), h.data()) < 1e-12);
        assert!((cir.energy() - h.energy()).abs() < 1e-10);
    }

    #[test]
    fn identity_profile() {
        let h = random_matrix(1, 40, 3);
        let cfg = ProfileConfig {
            oversample: 1,
            window: 40,
            window_offset: 0,
        };
        let p = profile(h.row(0), &cfg, CirSource::Truth).unwrap();
        assert!(max_err(&p.taps, h.row(0)) < 1e-12);
    }

    #[test]
    fn oversampled_impulse_matches_dirichlet_kernel() {
        // Independent oracle: the zero-padded spectrum of an impulse at tap t
        // evaluated in closed form at fractional positions.
        let n = 32usize;
        let o = 4usize;
        let t = 5usize;
        let mut row = vec![c(0.0, 0.0); n];
        row[t] = c(1.0, 0.0);
        let cfg = ProfileConfig {
            oversample: o,
            window: o * n,
            window_offset: 0,
        };
        let p = profile(&row, &cfg, CirSource::Truth).unwrap();
        for (k, got) in p.taps.iter().enumerate() {
            let x = k as f64 / o as f64 - t as f64;
            let mut acc = c(0.0, 0.0);
            for f in 0..n {
                acc += Complex64::from_polar(1.0, 2.0 * PI * f as f64 * x / n as f64);
            }
            let want = acc / n as f64;
            assert!((got - want).norm() < 1e-12, "tap {k}");
        }
        assert!((p.taps[o * t].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_rejects_oversized_window() {
        let row = vec![c(1.0, 0.0); 8];
        let cfg = ProfileConfig {
            oversample: 2,
            window: 17,
            window_offset: 0,
        };
        assert!(profile(&row, &cfg, CirSource::Truth).is_err());
    }

    #[test]
    fn sequence_mixing_properties() {
        let s = gen_sequence(64, 7);
        assert!(s.values.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert_eq!(s, gen_sequence(64, 7));
        let h = random_matrix(1, 64, 4);
        let p = ProfiledCir {
            taps: h.row(0).to_vec(),
            source: CirSource::Truth,
            window_offset: 0,
            oversample: 1,
        };
        let same = apply_sequence(&p, &MixingSequence::ones(64)).unwrap();
        assert!(max_err(&same.taps, &p.taps) < 1e-12);
        let mixed = apply_sequence(&p, &s).unwrap();
        assert!((mixed.energy() - p.energy()).abs() < 1e-12 * p.energy());
        let back = apply_sequence(&mixed, &s.conj()).unwrap();
        assert!(max_err(&back.taps, &p.taps) < 1e-12);
        assert!(apply_sequence(&p, &gen_sequence(63, 1)).is_err());
    }

    #[test]
    fn quantizer_examples() {
        let q = quantize_1bit(&[c(0.3, -0.7)]);
        assert!((q[0] - c(1.0, -1.0) * FRAC_1_SQRT_2).norm() < 1e-15);
        let q = quantize_1bit(&[c(0.0, -0.0)]);
        assert_eq!(q[0], c(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        let q = quantize_1bit(&[c(-1e-310, 2.0)]);
        assert_eq!(q[0], c(-FRAC_1_SQRT_2, FRAC_1_SQRT_2));
    }

    #[test]
    fn phase_range_and_roundtrip() {
        let x = [c(-1.0, 0.0), c(-1.0, -0.0), c(0.0, 0.0), c(0.0, -2.0), c(1.0, 1.0)];
        let p = phase_of(&x);
        assert_eq!(p[0], PI);
        assert_eq!(p[1], PI);
        assert_eq!(p[2], 0.0);
        assert!((p[3] + PI / 2.0).abs() < 1e-15);
        let back = combine_mag_phase(&magnitude_of(&x), &p).unwrap();
        assert!(max_err(&back, &x) < 1e-12);
        let qp = phase_of(&quantize_1bit(&x));
        for a in qp {
            let q = a / (PI / 4.0);
            assert!([-3.0, -1.0, 1.0, 3.0].iter().any(|v| (q - v).abs() < 1e-12));
        }
        assert!(combine_mag_phase(&[1.0], &[]).is_err());
    }

    #[test]
    fn window_noise_calibration_is_exact_in_expectation() {
        let geom = ArrayGeometry::half_wavelength(2).unwrap();
        let p = MultipathParams::new(vec![MultipathComponent {
            delay: 3.2,
            amplitude: c(0.7, 0.2),
            doa: 0.4,
        }]);
        let h = full_channel(&p, &geom, 128);
        let cfg = ProfileConfig {
            oversample: 2,
            window: 32,
            window_offset: -4,
        };
        let var = chain_noise_variance(&h, &cfg, 10.0, SnrDomain::ProfiledWindow).unwrap();
        // Monte Carlo: windowed noise energy per tap equals the variance.
        let mut acc = 0.0;
        let trials = 400;
        for t in 0..trials {
            let zero = ChannelMatrix::zeros(2, 128, ChannelKind::Desired);
            let z = crate::channel::add_noise_with_variance(&zero, var, &mut rng::seeded(t));
            let chain = mixed_chain(&z, &cfg, &MixingSequence::ones(32), CirSource::NoisyMeasurement).unwrap();
            acc += chain.iter().map(|p| p.energy()).sum::<f64>();
        }
        let per_tap = acc / (trials as f64 * 2.0 * 32.0);
        assert!((per_tap / var - 1.0).abs() < 0.05, "{per_tap} vs {var}");
        assert_eq!(chain_noise_variance(&h, &cfg, f64::INFINITY, SnrDomain::ProfiledWindow).unwrap(), 0.0);
    }

    #[test]
    fn perfect_generator_inputs_equal_labels() {
        let spec = crate::channel::DatasetSpec::standard(3, 2, 9);
        let data = crate::channel::sample_dataset(&spec).unwrap();
        let h = &data[0].channel;
        let cfg = ProfileConfig::default();
        let seq = gen_sequence(cfg.window, 3);
        let chains = build_lstm_inputs(h, h, h, &seq, &cfg, LabelSource::Noiseless).unwrap();
        assert_eq!(chains.samples.len(), 8);
        for s in &chains.samples {
            assert_eq!(s.len(), cfg.window);
            for (k, l) in s.label.iter().enumerate() {
                assert_eq!(s.inputs[2 * k], *l);
                assert!(*l > -PI && *l <= PI);
            }
        }
        assert!(build_lstm_inputs(&data[1].channel, h, &measured(h), &seq, &cfg, LabelSource::Noiseless).is_err());
    }

    fn measured(h: &ChannelMatrix) -> ChannelMatrix {
        h.subsample_rows(0)
    }
}
