//! Periodic spectral transforms shared by the integrators and the charge
//! reductions.
//!
//! Layout convention for 2-axis data: index = i1 * n[1] + i2, axis 0 slow.
//! 1-axis data uses n = [n, 1] so axis-0 transforms see one contiguous run.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse FFT pair for one axis length, with reusable scratch.
pub struct AxisFft {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    lane: Vec<Complex64>,
}

impl AxisFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        AxisFft {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
            lane: vec![Complex64::default(); n],
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    /// Inverse transform including the 1/n normalization.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed wavenumbers 2*pi*m/L in FFT output order (m = 0..n/2-1, then
/// negative frequencies; the Nyquist lane carries -pi*n/L).
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|m| {
            let signed = if m < n.div_ceil(2) { m as i64 } else { m as i64 - n as i64 };
            signed as f64 * step
        })
        .collect()
}

/// Applies `diag(mult)` in the mixed representation along `axis`: Fourier
/// transform the axis, multiply each (mode, transverse-point) value, and
/// transform back. `mult(mode, trans)` sees the FFT-order mode index and the
/// flattened index along the other axis.
pub fn apply_along_axis(
    data: &mut [Complex64],
    n: [usize; 2],
    axis: usize,
    fft: &mut AxisFft,
    mult: impl Fn(usize, usize) -> Complex64,
) {
    debug_assert_eq!(data.len(), n[0] * n[1]);
    debug_assert_eq!(fft.n, n[axis]);
    match axis {
        0 => {
            let stride = n[1];
            let mut lane = std::mem::take(&mut fft.lane);
            for t in 0..n[1] {
                for (m, slot) in lane.iter_mut().enumerate() {
                    *slot = data[m * stride + t];
                }
                fft.forward(&mut lane);
                for (m, slot) in lane.iter_mut().enumerate() {
                    *slot *= mult(m, t);
                }
                fft.inverse(&mut lane);
                for (m, slot) in lane.iter().enumerate() {
                    data[m * stride + t] = *slot;
                }
            }
            fft.lane = lane;
        }
        1 => {
            for t in 0..n[0] {
                let row = &mut data[t * n[1]..(t + 1) * n[1]];
                fft.forward(row);
                for (m, slot) in row.iter_mut().enumerate() {
                    *slot *= mult(m, t);
                }
                fft.inverse(row);
            }
        }
        _ => panic!("axis out of range"),
    }
}

/// Spectral partial derivative along `axis` (multiplier i*k).
pub fn derivative_along_axis(
    data: &mut [Complex64],
    n: [usize; 2],
    axis: usize,
    fft: &mut AxisFft,
    ks: &[f64],
) {
    apply_along_axis(data, n, axis, fft, |m, _| Complex64::new(0.0, ks[m]));
}
