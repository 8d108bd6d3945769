//! Unitary DFT helpers (1/sqrt(N) in both directions).

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    plan.process(buf);
    let s = 1.0 / (n as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= s;
    }
}

/// `X[k] = N^{-1/2} sum_n x[n] e^{-j 2 pi n k / N}`, in place.
pub fn fft_in_place(buf: &mut [Complex64]) {
    transform(buf, false);
}

/// Inverse of [`fft_in_place`].
pub fn ifft_in_place(buf: &mut [Complex64]) {
    transform(buf, true);
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    fft_in_place(&mut v);
    v
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    ifft_in_place(&mut v);
    v
}
