//! FFT plans for power-of-two lengths and real-input helpers.
//!
//! Real sequences are transformed two at a time: `x + i*y` goes through one
//! complex transform and the two spectra are separated using conjugate
//! symmetry.

use std::sync::{Arc, Mutex};

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub use rustfft::num_complex::Complex64 as Complex;

/// Forward and inverse transforms of one power-of-two size.
pub struct FftPlan {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    work: Mutex<Vec<Complex>>,
}

impl Clone for FftPlan {
    fn clone(&self) -> Self {
        FftPlan {
            len: self.len,
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
            work: Mutex::new(vec![Complex::ZERO; self.work_len()]),
        }
    }
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len).finish()
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::config(format!(
                "FFT length must be a positive power of two, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let work_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Ok(FftPlan {
            len,
            fwd,
            inv,
            work: Mutex::new(vec![Complex::ZERO; work_len]),
        })
    }

    fn work_len(&self) -> usize {
        self.fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform (no scaling).
    pub fn forward(&self, data: &mut [Complex]) {
        assert_eq!(data.len(), self.len, "FFT buffer length");
        let mut work = self.work.lock().unwrap_or_else(|e| e.into_inner());
        self.fwd.process_with_scratch(data, &mut work);
    }

    /// In-place inverse transform, scaled by `1/len`.
    pub fn inverse(&self, data: &mut [Complex]) {
        assert_eq!(data.len(), self.len, "FFT buffer length");
        {
            let mut work = self.work.lock().unwrap_or_else(|e| e.into_inner());
            self.inv.process_with_scratch(data, &mut work);
        }
        let k = 1.0 / self.len as f64;
        for z in data.iter_mut() {
            *z = z.scale(k);
        }
    }

    /// Spectra of two real sequences via one complex transform.
    ///
    /// `scratch` is overwritten. Only the first `out_x.len()` bins are
    /// written; `len / 2 + 1` bins determine a real sequence.
    pub fn forward_real_pair(
        &self,
        x: &[f64],
        y: &[f64],
        scratch: &mut [Complex],
        out_x: &mut [Complex],
        out_y: &mut [Complex],
    ) {
        let n = self.len;
        for q in 0..n {
            scratch[q] = Complex::new(x[q], y[q]);
        }
        self.forward(scratch);
        for k in 0..out_x.len().min(out_y.len()) {
            let z = scratch[k];
            let zc = scratch[(n - k) & (n - 1)].conj();
            // X = (Z_k + conj Z_{n-k}) / 2, Y = (Z_k - conj Z_{n-k}) / (2i)
            out_x[k] = (z + zc).scale(0.5);
            let d = z - zc;
            out_y[k] = Complex::new(d.im * 0.5, -d.re * 0.5);
        }
    }

    /// Inverse of a real sequence given bins `0..=len/2` of its spectrum.
    pub fn inverse_real_half(&self, half: &[Complex], scratch: &mut [Complex], out: &mut [f64]) {
        let n = self.len;
        assert_eq!(half.len(), n / 2 + 1, "half spectrum length");
        scratch[..half.len()].copy_from_slice(half);
        for k in half.len()..n {
            scratch[k] = half[n - k].conj();
        }
        self.inverse(scratch);
        for (o, z) in out.iter_mut().zip(scratch.iter()) {
            *o = z.re;
        }
    }

    /// Real part of the inverse transform of a Hermitian spectrum.
    pub fn inverse_real(&self, spectrum: &mut [Complex], out: &mut [f64]) {
        self.inverse(spectrum);
        for (o, z) in out.iter_mut().zip(spectrum.iter()) {
            *o = z.re;
        }
    }
}

/// Circular convolution of two real sequences of equal power-of-two length.
pub fn circular_convolve_real(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::size(format!(
            "convolution operands have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let plan = FftPlan::new(u.len())?;
    let n = u.len();
    let mut scratch = vec![Complex::ZERO; n];
    let mut fu = vec![Complex::ZERO; n];
    let mut fv = vec![Complex::ZERO; n];
    plan.forward_real_pair(u, v, &mut scratch, &mut fu, &mut fv);
    for k in 0..n {
        fu[k] = fu[k] * fv[k];
    }
    let mut out = vec![0.0; n];
    plan.inverse_real(&mut fu, &mut out);
    Ok(out)
}
