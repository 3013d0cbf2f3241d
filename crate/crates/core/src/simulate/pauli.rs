//! Strang split-operator integrator for the two-component 2+1D reduction
//! i hbar d_t phi = [(1/2m)(-i hbar d - e A)^2 - (hbar e / 2m) sigma^3 B^3
//!                   - e A_0] phi.
//!
//! Factorization: exp(-i dt V / 2 hbar) T1(dt/2) T2(dt) T1(dt/2)
//! exp(-i dt V / 2 hbar), where T_j is the axis-j kinetic factor
//! (hbar k_j - e A_j)^2 / 2m applied in the mixed representation (Fourier
//! along axis j, position transverse). Exactness of each factor requires
//! A_1 = A_1(x2) and A_2 = A_2(x1), which is checked symbolically; every
//! factor is then a unit-modulus multiplier, so norm conservation is exact
//! to rounding.

use num_complex::Complex64;

use super::spectral::{apply_along_axis, wavenumbers, AxisFft};
use super::{FieldSet, Grid, PhysConsts, SimError, SpinorField, TermMask};
use crate::forms::Chart;

pub struct PauliOp {
    pub grid: Grid,
    pub consts: PhysConsts,
    pub dt: f64,
    mask: TermMask,
    fft0: AxisFft,
    fft1: AxisFft,
    /// Pointwise potential part per component: -e A_0 -+ (hbar e / 2m) B^3.
    hv: [Vec<f64>; 2],
    /// Kinetic symbol (hbar k_0 - e A_1(x2))^2 / 2m, index mode * n[1] + i2.
    kin0: Vec<f64>,
    /// Kinetic symbol (hbar k_1 - e A_2(x1))^2 / 2m, index mode * n[0] + i1.
    kin1: Vec<f64>,
    /// exp(-i dt hv / 2 hbar) per component.
    vhalf: [Vec<Complex64>; 2],
    /// exp(-i dt kin0 / 2 hbar) and exp(-i dt kin1 / hbar).
    t0_half: Vec<Complex64>,
    t1_full: Vec<Complex64>,
}

impl PauliOp {
    pub fn new(
        grid: Grid,
        consts: PhysConsts,
        fields: &FieldSet,
        dt: f64,
    ) -> Result<Self, SimError> {
        if grid.dim != 2 {
            return Err(SimError::Grid("the split-operator scheme runs on two axes".into()));
        }
        if !fields.exprs[3].is_zero() {
            return Err(SimError::Field {
                key: "A3".into(),
                msg: "must vanish identically for the in-plane run".into(),
            });
        }
        let chart = Chart;
        for axis in [1usize, 2] {
            if !fields.exprs[axis].differentiate(&chart.coord_symbol(axis as u8)).is_zero() {
                return Err(SimError::Field {
                    key: format!("A{axis}"),
                    msg: format!(
                        "must not depend on x{axis}; the kinetic factor along axis {axis} \
                         is exact only when its vector potential varies transversely"
                    ),
                });
            }
        }
        let mask = fields.mask;
        let points = grid.points();
        let mut hv: [Vec<f64>; 2] = [vec![0.0; points], vec![0.0; points]];
        for (a, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            for i in 0..points {
                let mut v = 0.0;
                if mask.scalar_potential {
                    v -= consts.e * fields.samples[0][i];
                }
                if mask.zeeman {
                    v -= sign * consts.hbar * consts.e / (2.0 * consts.m) * fields.b3[i];
                }
                hv[a][i] = v;
            }
        }
        // A_1 depends only on x2 and A_2 only on x1, so one transverse line
        // of samples determines each.
        let a1_of_x2: Vec<f64> =
            (0..grid.n[1]).map(|i2| fields.samples[1][grid.index(0, i2)]).collect();
        let a2_of_x1: Vec<f64> =
            (0..grid.n[0]).map(|i1| fields.samples[2][grid.index(i1, 0)]).collect();
        let ks0 = wavenumbers(grid.n[0], grid.length[0]);
        let ks1 = wavenumbers(grid.n[1], grid.length[1]);
        let two_m = 2.0 * consts.m;
        let mut kin0 = vec![0.0; grid.n[0] * grid.n[1]];
        for (m0, &k) in ks0.iter().enumerate() {
            for (i2, &a) in a1_of_x2.iter().enumerate() {
                let p = consts.hbar * k - consts.e * a;
                kin0[m0 * grid.n[1] + i2] = p * p / two_m;
            }
        }
        let mut kin1 = vec![0.0; grid.n[0] * grid.n[1]];
        for (m1, &k) in ks1.iter().enumerate() {
            for (i1, &a) in a2_of_x1.iter().enumerate() {
                let p = consts.hbar * k - consts.e * a;
                kin1[m1 * grid.n[0] + i1] = p * p / two_m;
            }
        }
        let phase = |h: f64, tau: f64| Complex64::new(0.0, -tau * h / consts.hbar).exp();
        let vhalf = [
            hv[0].iter().map(|&h| phase(h, dt / 2.0)).collect(),
            hv[1].iter().map(|&h| phase(h, dt / 2.0)).collect(),
        ];
        let t0_half = kin0.iter().map(|&h| phase(h, dt / 2.0)).collect();
        let t1_full = kin1.iter().map(|&h| phase(h, dt)).collect();
        Ok(PauliOp {
            grid,
            consts,
            dt,
            mask,
            fft0: AxisFft::new(grid.n[0]),
            fft1: AxisFft::new(grid.n[1]),
            hv,
            kin0,
            kin1,
            vhalf,
            t0_half,
            t1_full,
        })
    }

    fn apply_vhalf(&self, state: &mut SpinorField) {
        for a in 0..2 {
            for (v, f) in state.comp[a].iter_mut().zip(&self.vhalf[a]) {
                *v *= f;
            }
        }
    }

    pub fn step(&mut self, state: &mut SpinorField, step_index: usize) -> Result<(), SimError> {
        let n = self.grid.n;
        self.apply_vhalf(state);
        if self.mask.kinetic {
            for a in 0..2 {
                let tab = &self.t0_half;
                apply_along_axis(&mut state.comp[a], n, 0, &mut self.fft0, |m, t| {
                    tab[m * n[1] + t]
                });
            }
            for a in 0..2 {
                let tab = &self.t1_full;
                apply_along_axis(&mut state.comp[a], n, 1, &mut self.fft1, |m, t| {
                    tab[m * n[0] + t]
                });
            }
            for a in 0..2 {
                let tab = &self.t0_half;
                apply_along_axis(&mut state.comp[a], n, 0, &mut self.fft0, |m, t| {
                    tab[m * n[1] + t]
                });
            }
        }
        self.apply_vhalf(state);
        state.check_finite(step_index)
    }

    /// The discrete Hamiltonian built from the same factor tables the
    /// integrator exponentiates, so the energy diagnostic is conserved by
    /// construction up to splitting error.
    pub fn apply_h(&mut self, state: &SpinorField) -> SpinorField {
        let n = self.grid.n;
        let mut out = SpinorField::zero(state.grid, 2);
        for a in 0..2 {
            if self.mask.kinetic {
                let mut buf = state.comp[a].clone();
                let tab = &self.kin0;
                apply_along_axis(&mut buf, n, 0, &mut self.fft0, |m, t| {
                    Complex64::new(tab[m * n[1] + t], 0.0)
                });
                for (o, v) in out.comp[a].iter_mut().zip(&buf) {
                    *o += v;
                }
                let mut buf = state.comp[a].clone();
                let tab = &self.kin1;
                apply_along_axis(&mut buf, n, 1, &mut self.fft1, |m, t| {
                    Complex64::new(tab[m * n[0] + t], 0.0)
                });
                for (o, v) in out.comp[a].iter_mut().zip(&buf) {
                    *o += v;
                }
            }
            for (i, (o, v)) in out.comp[a].iter_mut().zip(&state.comp[a]).enumerate() {
                *o += self.hv[a][i] * v;
            }
        }
        out
    }
}
