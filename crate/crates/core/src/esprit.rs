//! 2-D Unitary tensor-ESPRIT on the half array: joint DoA and delay
//! estimation from the full-resolution rows, least-squares path gains and
//! reconstruction on the full array.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{full_channel, ArrayGeometry, ChannelKind, ChannelMatrix, MultipathComponent, MultipathParams};
use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;
type RMat = DMatrix<f64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceMode {
    /// Truncated HOSVD of the real-valued measurement tensor.
    #[default]
    Hosvd,
    /// Dominant left singular vectors of the unfolded data matrix.
    MatrixSvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceSolver {
    #[default]
    LeastSquares,
    TotalLeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EspritConfig {
    /// Subcarriers per smoothing subarray.
    pub subarray_len: usize,
    /// Offset between consecutive subarrays.
    pub stride: usize,
    pub subspace: SubspaceMode,
    pub solver: InvarianceSolver,
    /// Admissible DoA interval in radians.
    pub doa_prior: (f64, f64),
    /// Slack on `cos(theta)` when matching the prior.
    pub prior_tolerance: f64,
    pub max_condition: f64,
}

impl Default for EspritConfig {
    fn default() -> Self {
        Self {
            subarray_len: 200,
            stride: 8,
            subspace: SubspaceMode::Hosvd,
            solver: InvarianceSolver::LeastSquares,
            doa_prior: (0.0, FRAC_PI_4),
            prior_tolerance: 0.02,
            max_condition: 1e12,
        }
    }
}

/// Frequency-smoothed measurements. Column `s` of `data` holds subarray `s`
/// vectorised with the antenna index running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTensor {
    pub antennas: usize,
    pub subarray_len: usize,
    pub snapshots: usize,
    pub data: CMat,
}

impl SmoothedTensor {
    pub fn get(&self, m: usize, q: usize, s: usize) -> Complex64 {
        self.data[(q * self.antennas + m, s)]
    }
}

pub fn build_smoothed_tensor(hc: &ChannelMatrix, subarray_len: usize, stride: usize) -> Result<SmoothedTensor> {
    let (m, n) = hc.shape();
    if subarray_len < 2 || stride == 0 {
        return Err(Error::Config(format!(
            "subarray length {subarray_len} must be at least 2 and stride {stride} positive"
        )));
    }
    if subarray_len > n {
        return Err(Error::Shape(format!("subarray of {subarray_len} exceeds {n} subcarriers")));
    }
    let snapshots = (n - subarray_len) / stride + 1;
    let data = CMat::from_fn(m * subarray_len, snapshots, |r, s| hc.get(r % m, s * stride + r / m));
    Ok(SmoothedTensor {
        antennas: m,
        subarray_len,
        snapshots,
        data,
    })
}

/// Exchange matrix of size `n`.
fn exchange(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i + j + 1 == n { Complex64::ONE } else { Complex64::ZERO })
}

/// Sparse unitary left-Pi-real matrix `Q_n`.
pub fn left_pi_real(n: usize) -> CMat {
    let mut q = CMat::zeros(n, n);
    let k = n / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..k {
        q[(i, i)] = Complex64::new(s, 0.0);
        q[(i, n - k + i)] = J * s;
        q[(n - 1 - i, i)] = Complex64::new(s, 0.0);
        q[(n - 1 - i, n - k + i)] = -J * s;
    }
    if n % 2 == 1 {
        q[(k, k)] = Complex64::ONE;
    }
    q
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Real-valued measurement tensor `[antennas x subarray_len x 2 snapshots]`
/// stored as its `(antennas * subarray_len) x (2 snapshots)` unfolding.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor3 {
    pub antennas: usize,
    pub subarray_len: usize,
    pub columns: usize,
    pub data: RMat,
    /// Largest imaginary magnitude dropped by the transform.
    pub imag_residual: f64,
}

impl RealTensor3 {
    /// Mode-`k` unfolding (0: antennas, 1: subcarriers, 2: snapshots).
    pub fn unfold(&self, mode: usize) -> RMat {
        let (m, f, c) = (self.antennas, self.subarray_len, self.columns);
        match mode {
            0 => RMat::from_fn(m, f * c, |i, j| self.data[(j / c * m + i, j % c)]),
            1 => RMat::from_fn(f, m * c, |i, j| self.data[(i * m + j / c, j % c)]),
            _ => self.data.transpose(),
        }
    }
}

/// Forward-backward averaging followed by the left-Pi-real transforms, scaled
/// so that energy is preserved.
pub fn unitary_transform(t: &SmoothedTensor) -> RealTensor3 {
    let rows = t.antennas * t.subarray_len;
    let n = t.snapshots;
    let pi_rows = exchange(rows);
    let pi_cols = exchange(n);
    let mut z = CMat::zeros(rows, 2 * n);
    z.columns_mut(0, n).copy_from(&t.data);
    z.columns_mut(n, n).copy_from(&(&pi_rows * t.data.conjugate() * &pi_cols));
    let q_rows = kron(&left_pi_real(t.subarray_len), &left_pi_real(t.antennas));
    let y = q_rows.adjoint() * z * left_pi_real(2 * n);
    let imag_residual = y.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    RealTensor3 {
        antennas: t.antennas,
        subarray_len: t.subarray_len,
        columns: 2 * n,
        data: y.map(|v| v.re * s),
        imag_residual,
    }
}

/// Leading `r` left singular vectors.
fn leading_left(a: &RMat, r: usize) -> RMat {
    // Thin SVD of the taller orientation is cheaper and equally accurate.
    if a.nrows() <= a.ncols() {
        let svd = a.transpose().svd(false, true);
        svd.v_t.expect("requested").rows(0, r).transpose()
    } else {
        let svd = a.clone().svd(true, false);
        svd.u.expect("requested").columns(0, r).into_owned()
    }
}

/// `L`-dimensional signal subspace basis, `(antennas * subarray_len) x L`.
pub fn signal_subspace(t: &RealTensor3, l: usize, mode: SubspaceMode) -> Result<RMat> {
    let rows = t.antennas * t.subarray_len;
    if l == 0 || l >= rows.min(t.columns) {
        return Err(Error::Config(format!(
            "model order {l} must be positive and below {}",
            rows.min(t.columns)
        )));
    }
    let es = leading_left(&t.data, l);
    match mode {
        SubspaceMode::MatrixSvd => Ok(es),
        SubspaceMode::Hosvd => {
            let p = |mode: usize, dim: usize| {
                let u = leading_left(&t.unfold(mode), l.min(dim));
                &u * u.transpose()
            };
            let p1 = p(0, t.antennas);
            let p2 = p(1, t.subarray_len);
            let m = t.antennas;
            let proj = RMat::from_fn(rows, rows, |i, j| p2[(i / m, j / m)] * p1[(i % m, j % m)]);
            Ok(proj * es)
        }
    }
}

/// Real selection pair `(K1, K2)` for maximum-overlap subarrays of a
/// length-`n` uniform axis: `tan(mu/2) K1 a = K2 a` for real-transformed
/// steering vectors `a`.
fn real_selection(n: usize) -> (RMat, RMat) {
    let j2 = CMat::from_fn(n - 1, n, |i, j| if j == i + 1 { Complex64::ONE } else { Complex64::ZERO });
    let k = left_pi_real(n - 1).adjoint() * j2 * left_pi_real(n);
    (k.map(|v| 2.0 * v.re), k.map(|v| 2.0 * v.im))
}

fn kron_r(a: &RMat, b: &RMat) -> RMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    RMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

fn condition(s: &DVector<f64>) -> f64 {
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn solve_invariance(a: RMat, b: RMat, solver: InvarianceSolver, max_cond: f64) -> Result<RMat> {
    let l = a.ncols();
    match solver {
        InvarianceSolver::LeastSquares => {
            let svd = a.svd(true, true);
            let cond = condition(&svd.singular_values);
            if cond > max_cond {
                return Err(Error::IllConditioned { cond });
            }
            svd.solve(&b, 0.0).map_err(|e| Error::Numerical(e.to_string()))
        }
        InvarianceSolver::TotalLeastSquares => {
            let mut ab = RMat::zeros(a.nrows(), 2 * l);
            ab.columns_mut(0, l).copy_from(&a);
            ab.columns_mut(l, l).copy_from(&b);
            let v = ab.svd(false, true).v_t.expect("requested").transpose();
            let v12 = v.view((0, l), (l, l)).into_owned();
            let v22 = v.view((l, l), (l, l)).into_owned();
            let svd22 = v22.clone().svd(false, false);
            let cond = condition(&svd22.singular_values);
            if cond > max_cond {
                return Err(Error::IllConditioned { cond });
            }
            let inv = v22.try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
            Ok(-v12 * inv)
        }
    }
}

/// Spatial and frequency invariance operators whose eigenvalues are
/// `tan(mu/2)` and `tan(-nu/2)` of the sources.
pub fn shift_invariance_solve(
    basis: &RMat,
    antennas: usize,
    subarray_len: usize,
    solver: InvarianceSolver,
    max_condition: f64,
) -> Result<(RMat, RMat)> {
    if basis.nrows() != antennas * subarray_len {
        return Err(Error::Shape(format!(
            "basis has {} rows, expected {}",
            basis.nrows(),
            antennas * subarray_len
        )));
    }
    if antennas < 2 || subarray_len < 2 {
        return Err(Error::Config("both axes need at least two elements".into()));
    }
    let (k1m, k2m) = real_selection(antennas);
    let (k1f, k2f) = real_selection(subarray_len);
    let eye_f = RMat::identity(subarray_len, subarray_len);
    let eye_m = RMat::identity(antennas, antennas);
    let (a_mu, b_mu) = (kron_r(&eye_f, &k1m) * basis, kron_r(&eye_f, &k2m) * basis);
    let (a_nu, b_nu) = (kron_r(&k1f, &eye_m) * basis, kron_r(&k2f, &eye_m) * basis);
    Ok((
        solve_invariance(a_mu, b_mu, solver, max_condition)?,
        solve_invariance(a_nu, b_nu, solver, max_condition)?,
    ))
}

/// Paired spatial and frequency phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `(mu, nu)` sorted by `nu`.
    pub freqs: Vec<(f64, f64)>,
    /// The joint eigenvalues were degenerate and the fallback was used.
    pub fallback: bool,
}

fn eigenvalues_c(m: &CMat) -> Result<Vec<Complex64>> {
    let schur = m
        .clone()
        .try_schur(1e-15, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvector of `m` for eigenvalue `lambda` by inverse iteration.
fn eigenvector(m: &CMat, lambda: Complex64, seed: usize) -> CMat {
    let n = m.nrows();
    let shift = lambda + Complex64::new(1e-10 * (1.0 + lambda.norm()), 0.0);
    let a = m - CMat::identity(n, n) * shift;
    let lu = a.lu();
    let mut v = CMat::from_fn(n, 1, |i, _| Complex64::new(1.0 + ((i + seed) % 3) as f64, (i % 2) as f64));
    for _ in 0..3 {
        if let Some(x) = lu.solve(&v) {
            let norm = x.norm();
            if norm > 0.0 && norm.is_finite() {
                v = x / Complex64::new(norm, 0.0);
            }
        }
    }
    v
}

fn min_gap(v: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            gap = gap.min((v[i] - v[j]).norm());
        }
    }
    gap
}

/// Automatic pairing from the eigenvalues of `Psi_mu + j Psi_nu`. When two
/// eigenvalues nearly coincide, `Psi_mu` is diagonalised alone and the
/// frequency phases are read from the same eigenvectors.
pub fn joint_pairing(psi_mu: &RMat, psi_nu: &RMat) -> Result<Pairing> {
    let l = psi_mu.nrows();
    let joint = CMat::from_fn(l, l, |i, j| Complex64::new(psi_mu[(i, j)], psi_nu[(i, j)]));
    let lambdas = eigenvalues_c(&joint)?;
    let scale = lambdas.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let (mut freqs, fallback) = if l == 1 || min_gap(&lambdas) > 1e-9 * scale {
        (
            lambdas.iter().map(|z| (2.0 * z.re.atan(), -2.0 * z.im.atan())).collect::<Vec<_>>(),
            false,
        )
    } else {
        let mu_c = psi_mu.map(|v| Complex64::new(v, 0.0));
        let nu_c = psi_nu.map(|v| Complex64::new(v, 0.0));
        let mut out = Vec::with_capacity(l);
        for (k, lam) in eigenvalues_c(&mu_c)?.into_iter().enumerate() {
            let v = eigenvector(&mu_c, lam, k);
            let num = (v.adjoint() * &nu_c * &v)[(0, 0)];
            let den = (v.adjoint() * &v)[(0, 0)];
            out.push((2.0 * lam.re.atan(), -2.0 * (num / den).re.atan()));
        }
        (out, true)
    };
    if freqs.iter().any(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(Error::Numerical("non-finite spatial or frequency phase".into()));
    }
    freqs.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(Pairing { freqs, fallback })
}

/// Maps a spatial phase `mu` (of a ULA with `spacing` wavelengths) and a
/// frequency phase `nu` to `(theta, tau)`. Among the `2 pi` aliases of `mu`
/// the one whose DoA falls inside `prior` is chosen.
pub fn params_from_freqs(
    mu: f64,
    nu: f64,
    spacing: f64,
    num_subcarriers: usize,
    prior: (f64, f64),
    tolerance: f64,
) -> Result<(f64, f64)> {
    let (lo, hi) = (prior.1.cos(), prior.0.cos());
    let kmax = spacing.ceil() as i64 + 1;
    let candidates: Vec<f64> = (-kmax..=kmax).map(|k| (mu + TAU * k as f64) / (TAU * spacing)).collect();
    let mut best: Option<(f64, f64)> = None;
    for &c in &candidates {
        let dist = if c < lo {
            lo - c
        } else if c > hi {
            c - hi
        } else {
            0.0
        };
        if dist <= tolerance && best.is_none_or(|(_, d)| dist < d) {
            best = Some((c, dist));
        }
    }
    let (c, _) = best.ok_or_else(|| Error::DoaOutsidePrior {
        candidates: candidates.iter().filter(|c| c.abs() <= 1.0).map(|c| c.acos()).collect(),
    })?;
    let theta = c.clamp(lo, hi).clamp(-1.0, 1.0).acos();
    let tau = nu * num_subcarriers as f64 / TAU;
    Ok((theta, tau))
}

/// Frequency-domain response of one path on one antenna row: `e^{-j 2 pi n tau / N}`.
fn delay_phasor(n: usize, tau: f64, num_subcarriers: usize) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * n as f64 * tau / num_subcarriers as f64)
}

/// Least-squares complex gains for fixed `(theta, tau)` pairs on the array
/// `geom`. Returns the gains and the relative residual energy.
pub fn amplitudes_ls(
    hc: &ChannelMatrix,
    doa_delay: &[(f64, f64)],
    geom: &ArrayGeometry,
    max_condition: f64,
) -> Result<(Vec<Complex64>, f64)> {
    let (m, n) = hc.shape();
    if geom.num_antennas != m {
        return Err(Error::Shape(format!("geometry has {} antennas, matrix {m}", geom.num_antennas)));
    }
    let l = doa_delay.len();
    let steer: Vec<Vec<Complex64>> = doa_delay.iter().map(|&(th, _)| geom.steering(th)).collect();
    let b = CMat::from_fn(m * n, l, |r, i| steer[i][r / n] * delay_phasor(r % n, doa_delay[i].1, n));
    let h = CMat::from_fn(m * n, 1, |r, _| hc.data()[r]);
    let svd = b.clone().svd(true, true);
    let cond = condition(&svd.singular_values);
    if cond > max_condition {
        return Err(Error::IllConditioned { cond });
    }
    let alpha = svd.solve(&h, 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let resid = (&h - &b * &alpha).norm_squared() / h.norm_squared().max(f64::MIN_POSITIVE);
    Ok((alpha.iter().copied().collect(), resid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EspritEstimate {
    pub components: Vec<MultipathComponent>,
    /// Relative residual of the amplitude fit on the measured rows.
    pub residual: f64,
    pub pairing_fallback: bool,
}

/// Full estimator: `hc` holds the measured rows on the array `geom`.
pub fn estimate(hc: &ChannelMatrix, l: usize, geom: &ArrayGeometry, cfg: &EspritConfig) -> Result<EspritEstimate> {
    let t = build_smoothed_tensor(hc, cfg.subarray_len, cfg.stride)?;
    let real = unitary_transform(&t);
    let basis = signal_subspace(&real, l, cfg.subspace)?;
    let (psi_mu, psi_nu) = shift_invariance_solve(&basis, t.antennas, t.subarray_len, cfg.solver, cfg.max_condition)?;
    let pairing = joint_pairing(&psi_mu, &psi_nu)?;
    let params = pairing
        .freqs
        .iter()
        .map(|&(mu, nu)| params_from_freqs(mu, nu, geom.spacing, hc.cols(), cfg.doa_prior, cfg.prior_tolerance))
        .collect::<Result<Vec<_>>>()?;
    let (alphas, residual) = amplitudes_ls(hc, &params, geom, cfg.max_condition)?;
    Ok(EspritEstimate {
        components: params
            .iter()
            .zip(alphas)
            .map(|(&(doa, delay), amplitude)| MultipathComponent { delay, amplitude, doa })
            .collect(),
        residual,
        pairing_fallback: pairing.fallback,
    })
}

/// Evaluates the estimated paths on the full array.
pub fn reconstruct_channel(est: &EspritEstimate, geom: &ArrayGeometry, num_subcarriers: usize) -> ChannelMatrix {
    full_channel(&MultipathParams::new(est.components.clone()), geom, num_subcarriers).with_kind(ChannelKind::Reconstructed)
}

/// `sample_id,i,theta,tau,alpha_re,alpha_im,residual` rows.
pub fn write_estimates_csv(path: &Path, estimates: &[(usize, EspritEstimate)]) -> Result<()> {
    let mut out = String::from("sample_id,i,theta,tau,alpha_re,alpha_im,residual\n");
    for (id, e) in estimates {
        for (i, c) in e.components.iter().enumerate() {
            out.push_str(&format!(
                "{id},{i},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e}\n",
                c.doa, c.delay, c.amplitude.re, c.amplitude.im, e.residual
            ));
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}
