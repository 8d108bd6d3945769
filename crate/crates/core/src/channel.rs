//! Multipath channel synthesis for a uniform linear array over OFDM subcarriers.
//!
//! Delays are carried in delay-tap units throughout (`n / N_sub` cycles per
//! subcarrier). Antenna indices are 0-based.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Delays closer than this (in taps) are treated as equal and resampled.
pub const MIN_DELAY_GAP: f64 = 1e-6;

/// Which 0-based antenna rows are wired to full-resolution chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RowConvention {
    /// Rows 1, 3, 5, ... are measured; rows 0, 2, 4, ... are zeroed
    /// (the 1-based "odd elements are constrained" reading).
    #[default]
    OddMeasured,
    /// Rows 0, 2, 4, ... are measured; rows 1, 3, 5, ... are zeroed.
    EvenMeasured,
}

impl RowConvention {
    pub fn first_measured(self) -> usize {
        match self {
            RowConvention::OddMeasured => 1,
            RowConvention::EvenMeasured => 0,
        }
    }

    pub fn is_measured(self, row: usize) -> bool {
        row % 2 == self.first_measured()
    }

    pub fn flag(self) -> u8 {
        match self {
            RowConvention::OddMeasured => 1,
            RowConvention::EvenMeasured => 0,
        }
    }

    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            1 => Ok(RowConvention::OddMeasured),
            0 => Ok(RowConvention::EvenMeasured),
            other => Err(Error::Format(format!("unknown row convention flag {other}"))),
        }
    }
}

/// Uniform linear array. Element `m` sits at `origin + m * spacing` wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Position of element 0 in wavelengths.
    #[serde(default)]
    pub origin: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::Config("array needs at least one antenna".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Config(format!("antenna spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            num_antennas,
            spacing,
            origin: 0.0,
        })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    /// The sub-array formed by the full-resolution rows: `M/2` elements at
    /// twice the spacing, offset to the first measured element.
    pub fn constrained(&self, convention: RowConvention) -> Result<Self> {
        if self.num_antennas % 2 != 0 {
            return Err(Error::Config(format!(
                "constrained array needs an even antenna count, got {}",
                self.num_antennas
            )));
        }
        Ok(Self {
            num_antennas: self.num_antennas / 2,
            spacing: 2.0 * self.spacing,
            origin: self.origin + convention.first_measured() as f64 * self.spacing,
        })
    }

    /// Per-element phase increment for a plane wave arriving from `doa`.
    pub fn spatial_frequency(&self, doa: f64) -> f64 {
        2.0 * PI * self.spacing * doa.cos()
    }

    pub fn steering(&self, doa: f64) -> Vec<Complex64> {
        let mu = self.spatial_frequency(doa);
        let base = 2.0 * PI * self.origin * doa.cos();
        (0..self.num_antennas)
            .map(|m| Complex64::from_polar(1.0, base + m as f64 * mu))
            .collect()
    }
}

/// ULA steering vector `[1, e^{jμ}, ..., e^{j(M-1)μ}]` with `μ = 2π d cos θ`.
pub fn steering_vector(doa: f64, spacing: f64, num_antennas: usize) -> Vec<Complex64> {
    let mu = 2.0 * PI * spacing * doa.cos();
    (0..num_antennas)
        .map(|m| Complex64::from_polar(1.0, m as f64 * mu))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipathComponent {
    /// Delay in taps.
    pub delay: f64,
    pub amplitude: Complex64,
    /// Direction of arrival in radians.
    pub doa: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultipathParams {
    pub components: Vec<MultipathComponent>,
}

impl MultipathParams {
    pub fn new(components: Vec<MultipathComponent>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Desired,
    Constrained,
    Expanded,
    NoisyExpanded,
    Generated,
    Reconstructed,
}

/// Complex antenna x subcarrier matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    pub kind: ChannelKind,
}

impl ChannelMatrix {
    pub fn zeros(rows: usize, cols: usize, kind: ChannelKind) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
            kind,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>, kind: ChannelKind) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} channel matrix",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            kind,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.data.len().max(1) as f64
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            data: self.data.iter().map(|z| z * factor).collect(),
            ..self.clone()
        }
    }

    pub fn with_kind(mut self, kind: ChannelKind) -> Self {
        self.kind = kind;
        self
    }

    /// Keeps every second row starting at `first`.
    pub fn subsample_rows(&self, first: usize) -> Self {
        let rows: Vec<usize> = (first..self.rows).step_by(2).collect();
        let mut out = Self::zeros(rows.len(), self.cols, ChannelKind::Constrained);
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(r));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Channel vector of subcarrier `n` (0-based) for the given array.
pub fn channel_subcarrier(
    params: &MultipathParams,
    n: usize,
    geom: &ArrayGeometry,
    num_subcarriers: usize,
) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); geom.num_antennas];
    for c in &params.components {
        let ramp = Complex64::from_polar(1.0, -2.0 * PI * n as f64 * c.delay / num_subcarriers as f64);
        let gain = c.amplitude * ramp;
        for (hm, a) in h.iter_mut().zip(geom.steering(c.doa)) {
            *hm += gain * a;
        }
    }
    h
}

/// Noiseless channel of the array over all subcarriers.
pub fn array_channel(params: &MultipathParams, geom: &ArrayGeometry, num_subcarriers: usize) -> ChannelMatrix {
    let mut out = ChannelMatrix::zeros(geom.num_antennas, num_subcarriers, ChannelKind::Desired);
    for c in &params.components {
        let steer = geom.steering(c.doa);
        let step = Complex64::from_polar(1.0, -2.0 * PI * c.delay / num_subcarriers as f64);
        for (m, a) in steer.iter().enumerate() {
            let row = out.row_mut(m);
            let gain = c.amplitude * a;
            // Recompute the ramp periodically so rounding does not accumulate.
            let mut ramp = Complex64::new(1.0, 0.0);
            for (n, v) in row.iter_mut().enumerate() {
                if n % 64 == 0 {
                    ramp = Complex64::from_polar(1.0, -2.0 * PI * n as f64 * c.delay / num_subcarriers as f64);
                }
                *v += gain * ramp;
                ramp *= step;
            }
        }
    }
    out
}

/// The desired channel `H` (M x N_sub).
pub fn full_channel(params: &MultipathParams, geom: &ArrayGeometry, num_subcarriers: usize) -> ChannelMatrix {
    array_channel(params, geom, num_subcarriers)
}

/// Adds circular complex Gaussian noise. The SNR reference is the mean entry
/// power of `h` itself; an infinite SNR returns `h` unchanged.
pub fn add_awgn(h: &ChannelMatrix, snr_db: f64, rng: &mut Rng) -> ChannelMatrix {
    let noise_var = noise_variance(h.mean_power(), snr_db);
    add_noise_with_variance(h, noise_var, rng)
}

pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(snr_db / 10.0)
    }
}

/// Adds noise with total complex variance `noise_var` per entry.
pub fn add_noise_with_variance(h: &ChannelMatrix, noise_var: f64, rng: &mut Rng) -> ChannelMatrix {
    let mut out = h.clone();
    if noise_var <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, (noise_var / 2.0).sqrt()).expect("finite noise std");
    for z in out.data_mut() {
        *z += Complex64::new(normal.sample(rng), normal.sample(rng));
    }
    out
}

/// Half-array measurement `H_c`: the full-resolution rows of `H` plus noise.
pub fn constrained_channel(
    params: &MultipathParams,
    geom: &ArrayGeometry,
    convention: RowConvention,
    num_subcarriers: usize,
    snr_db: f64,
    rng: &mut Rng,
) -> Result<ChannelMatrix> {
    let sub = geom.constrained(convention)?;
    let clean = array_channel(params, &sub, num_subcarriers);
    Ok(add_awgn(&clean, snr_db, rng).with_kind(ChannelKind::Constrained))
}

/// Inserts zero rows at the constrained positions so that `H_c` matches the
/// shape of `H`.
pub fn expand_zero_rows(hc: &ChannelMatrix, convention: RowConvention) -> ChannelMatrix {
    let rows = 2 * hc.rows();
    let mut out = ChannelMatrix::zeros(rows, hc.cols(), ChannelKind::Expanded);
    for k in 0..hc.rows() {
        let r = 2 * k + convention.first_measured();
        out.row_mut(r).copy_from_slice(hc.row(k));
    }
    out
}

/// Inverse of [`expand_zero_rows`] on the measured rows.
pub fn measured_rows(h: &ChannelMatrix, convention: RowConvention) -> ChannelMatrix {
    h.subsample_rows(convention.first_measured())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_samples: usize,
    /// Multipath components per sample.
    pub num_paths: usize,
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Largest delay in seconds.
    pub tau_max_s: f64,
    /// Duration of one delay tap in seconds; 163 ns maps to 24 taps by default.
    pub tap_duration_s: f64,
    /// DoA interval in radians.
    pub doa_range: (f64, f64),
    pub snr_db: f64,
    pub seed: u64,
    /// Per-component standard deviation of the complex path gains.
    pub rayleigh_scale: f64,
    #[serde(default)]
    pub convention: RowConvention,
}

impl DatasetSpec {
    /// 8-antenna, 1200-subcarrier, 20 dB dataset with `num_paths` MPCs per channel.
    pub fn standard(num_paths: usize, num_samples: usize, seed: u64) -> Self {
        Self {
            num_samples,
            num_paths,
            num_antennas: 8,
            num_subcarriers: 1200,
            spacing: 0.5,
            tau_max_s: 163e-9,
            tap_duration_s: 163e-9 / 24.0,
            doa_range: (0.0, std::f64::consts::FRAC_PI_4),
            snr_db: 20.0,
            seed,
            rayleigh_scale: std::f64::consts::FRAC_1_SQRT_2,
            convention: RowConvention::OddMeasured,
        }
    }

    pub fn tau_max_taps(&self) -> f64 {
        self.tau_max_s / self.tap_duration_s
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.num_antennas, self.spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("dataset needs at least one sample".into()));
        }
        if self.num_paths == 0 {
            return Err(Error::Config("each channel needs at least one path".into()));
        }
        if self.num_subcarriers == 0 {
            return Err(Error::Config("need at least one subcarrier".into()));
        }
        self.geometry()?;
        if !self.snr_db.is_finite() && self.snr_db != f64::INFINITY {
            return Err(Error::Config(format!("SNR must be finite or +inf, got {}", self.snr_db)));
        }
        let (lo, hi) = self.doa_range;
        if !(lo >= 0.0 && hi < FRAC_PI_2 && lo <= hi) {
            return Err(Error::Config(format!(
                "DoA range [{lo}, {hi}] must lie inside [0, pi/2) to avoid ULA ambiguity"
            )));
        }
        let tau_max = self.tau_max_taps();
        if !(tau_max.is_finite() && tau_max >= 0.0) {
            return Err(Error::Config(format!("invalid delay range, tau_max = {tau_max} taps")));
        }
        if tau_max == 0.0 && self.num_paths > 1 {
            return Err(Error::Config("distinct delays impossible with tau_max = 0".into()));
        }
        if !(self.rayleigh_scale > 0.0) {
            return Err(Error::Config("Rayleigh scale must be positive".into()));
        }
        Ok(())
    }
}

/// One generated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub params: MultipathParams,
    pub channel: ChannelMatrix,
}

/// Draws the multipath parameters of one channel.
pub fn sample_params(spec: &DatasetSpec, rng: &mut Rng) -> MultipathParams {
    let gain = Normal::new(0.0, spec.rayleigh_scale).expect("positive scale");
    let tau_max = spec.tau_max_taps();
    let (lo, hi) = spec.doa_range;
    let mut delays: Vec<f64> = Vec::with_capacity(spec.num_paths);
    let mut components = Vec::with_capacity(spec.num_paths);
    for _ in 0..spec.num_paths {
        let delay = loop {
            let t = rng.random::<f64>() * tau_max;
            if delays.iter().all(|d| (d - t).abs() >= MIN_DELAY_GAP) {
                break t;
            }
        };
        delays.push(delay);
        let amplitude = Complex64::new(gain.sample(rng), gain.sample(rng));
        let doa = lo + (hi - lo) * rng.random::<f64>();
        components.push(MultipathComponent { delay, amplitude, doa });
    }
    MultipathParams { components }
}

/// Generates a dataset; sample `i` uses its own stream so the result does not
/// depend on generation order.
pub fn sample_dataset(spec: &DatasetSpec) -> Result<Vec<ChannelSample>> {
    spec.validate()?;
    let geom = spec.geometry()?;
    Ok((0..spec.num_samples)
        .map(|i| {
            let mut r = rng::stream(spec.seed, i as u64);
            let params = sample_params(spec, &mut r);
            let channel = full_channel(&params, &geom, spec.num_subcarriers);
            ChannelSample { params, channel }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_broadside_and_endfire() {
        let v = steering_vector(FRAC_PI_2, 0.5, 4);
        for z in v {
            assert!(close(z, c(1.0, 0.0), 1e-12));
        }
        let v = steering_vector(0.0, 0.5, 4);
        let want = [1.0, -1.0, 1.0, -1.0];
        for (z, w) in v.iter().zip(want) {
            assert!(close(*z, c(w, 0.0), 1e-12));
        }
    }

    #[test]
    fn steering_is_geometric() {
        let v = steering_vector(std::f64::consts::FRAC_PI_4, 0.5, 8);
        let mu = PI * 2f64.sqrt() / 2.0;
        assert!(close(v[1], Complex64::from_polar(1.0, mu), 1e-12));
        assert!(close(v[2], v[1] * v[1], 1e-12));
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_path_at_zero_delay_is_steering() {
        let geom = ArrayGeometry::half_wavelength(8).unwrap();
        let p = MultipathParams::new(vec![MultipathComponent {
            delay: 0.0,
            amplitude: c(1.0, 0.0),
            doa: 0.3,
        }]);
        let a = steering_vector(0.3, 0.5, 8);
        for n in [0, 5, 99] {
            let h = channel_subcarrier(&p, n, &geom, 100);
            for (x, y) in h.iter().zip(&a) {
                assert!(close(*x, *y, 1e-12));
            }
        }
    }

    #[test]
    fn opposite_paths_cancel() {
        let geom = ArrayGeometry::half_wavelength(4).unwrap();
        let comp = MultipathComponent {
            delay: 3.3,
            amplitude: c(1.0, 0.0),
            doa: 0.5,
        };
        let p = MultipathParams::new(vec![
            comp,
            MultipathComponent {
                amplitude: c(-1.0, 0.0),
                ..comp
            },
        ]);
        let h = full_channel(&p, &geom, 64);
        assert!(h.frobenius_norm() < 1e-12);
    }

    #[test]
    fn full_channel_columns_match_subcarrier_model() {
        let spec = DatasetSpec::standard(3, 1, 11);
        let s = &sample_dataset(&spec).unwrap()[0];
        let geom = spec.geometry().unwrap();
        assert_eq!(s.channel.shape(), (8, 1200));
        for n in [0, 1, 517, 1199] {
            let h = channel_subcarrier(&s.params, n, &geom, 1200);
            for m in 0..8 {
                assert!(close(s.channel.get(m, n), h[m], 1e-11));
            }
        }
    }

    #[test]
    fn constrained_geometry_requires_even_count() {
        let g = ArrayGeometry::half_wavelength(7).unwrap();
        assert!(g.constrained(RowConvention::OddMeasured).is_err());
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let sub = g.constrained(RowConvention::EvenMeasured).unwrap();
        assert_eq!((sub.num_antennas, sub.spacing, sub.origin), (4, 1.0, 0.0));
        let sub = g.constrained(RowConvention::OddMeasured).unwrap();
        assert_eq!(sub.origin, 0.5);
    }

    #[test]
    fn noiseless_constrained_is_row_subsampling() {
        let spec = DatasetSpec::standard(5, 1, 3);
        let s = &sample_dataset(&spec).unwrap()[0];
        let geom = spec.geometry().unwrap();
        let mut r = rng::seeded(0);
        for conv in [RowConvention::EvenMeasured, RowConvention::OddMeasured] {
            let hc = constrained_channel(&s.params, &geom, conv, 1200, f64::INFINITY, &mut r).unwrap();
            assert_eq!(hc.shape(), (4, 1200));
            let sub = measured_rows(&s.channel, conv);
            for (a, b) in hc.data().iter().zip(sub.data()) {
                assert!(close(*a, *b, 1e-11));
            }
        }
    }

    #[test]
    fn expansion_places_rows() {
        let hc = ChannelMatrix::from_vec(
            2,
            2,
            vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 1.0), c(4.0, 0.0)],
            ChannelKind::Constrained,
        )
        .unwrap();
        let e = expand_zero_rows(&hc, RowConvention::EvenMeasured);
        assert_eq!(e.shape(), (4, 2));
        assert_eq!(e.row(0), hc.row(0));
        assert!(e.row(1).iter().all(|z| z.norm() == 0.0));
        assert_eq!(e.row(2), hc.row(1));
        assert!(e.row(3).iter().all(|z| z.norm() == 0.0));
        let o = expand_zero_rows(&hc, RowConvention::OddMeasured);
        assert!(o.row(0).iter().all(|z| z.norm() == 0.0));
        assert_eq!(o.row(3), hc.row(1));
        assert_eq!(measured_rows(&o, RowConvention::OddMeasured).data(), hc.data());
    }

    #[test]
    fn zero_expansion_of_zero() {
        let z = ChannelMatrix::zeros(4, 10, ChannelKind::Constrained);
        assert_eq!(expand_zero_rows(&z, RowConvention::OddMeasured).energy(), 0.0);
    }

    #[test]
    fn infinite_snr_is_identity_and_seed_is_reproducible() {
        let spec = DatasetSpec::standard(3, 1, 5);
        let h = &sample_dataset(&spec).unwrap()[0].channel;
        let mut r = rng::seeded(1);
        assert_eq!(&add_awgn(h, f64::INFINITY, &mut r), h);
        let a = add_awgn(h, 20.0, &mut rng::seeded(9));
        let b = add_awgn(h, 20.0, &mut rng::seeded(9));
        assert_eq!(a, b);
        assert_ne!(&a, h);
    }

    #[test]
    fn rejects_ambiguous_doa_range() {
        let mut spec = DatasetSpec::standard(3, 2, 0);
        spec.doa_range = (0.0, FRAC_PI_2);
        assert!(sample_dataset(&spec).is_err());
        spec.doa_range = (-0.1, 0.5);
        assert!(sample_dataset(&spec).is_err());
    }

    #[test]
    fn dataset_is_deterministic_and_respects_ranges() {
        let spec = DatasetSpec::standard(5, 20, 42);
        let a = sample_dataset(&spec).unwrap();
        let b = sample_dataset(&spec).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.params.len(), 5);
            for (i, ci) in s.params.components.iter().enumerate() {
                assert!((0.0..=24.0).contains(&ci.delay));
                assert!((0.0..=std::f64::consts::FRAC_PI_4).contains(&ci.doa));
                for cj in &s.params.components[i + 1..] {
                    assert!((ci.delay - cj.delay).abs() >= MIN_DELAY_GAP);
                }
            }
        }
    }
}
