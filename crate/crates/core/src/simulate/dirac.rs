//! Crank-Nicolson integrator for the four-component 1+1D system
//! i hbar d_t psi = [alpha^1 (-i hbar d_1 - e A_1) + m beta - e A_0] psi.
//!
//! The update (I + i dt H / 2 hbar) psi' = (I - i dt H / 2 hbar) psi is an
//! exact Cayley transform of the hermitian discrete H, hence unitary up to
//! the linear-solve residual. The solve runs BiCGSTAB preconditioned by the
//! exact inverse of the constant-coefficient part in Fourier space, which
//! makes free and uniform-potential runs converge in one iteration.

use num_complex::Complex64;

use super::spectral::{derivative_along_axis, AxisFft, wavenumbers};
use super::{FieldSet, Grid, PhysConsts, SimError, SpinorField};
use crate::model::{Mat4, MatrixRep};

type CMat4 = [[Complex64; 4]; 4];

fn numeric_matrix(m: &Mat4, consts: &PhysConsts) -> CMat4 {
    let mut map = std::collections::BTreeMap::new();
    map.insert(
        crate::expr::Atom::Sym(crate::expr::Symbol::constant("c")),
        Complex64::new(consts.c, 0.0),
    );
    std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            m.entry(r, c).eval(&map).expect("representation entries are closed in c")
        })
    })
}

fn mat_vec(m: &CMat4, v: &[Complex64; 4]) -> [Complex64; 4] {
    std::array::from_fn(|r| (0..4).map(|c| m[r][c] * v[c]).sum())
}

/// Gauss-Jordan inverse with partial pivoting; the Cayley matrices are
/// always invertible (hermitian argument).
fn invert4(a: &CMat4) -> CMat4 {
    let mut w = [[Complex64::default(); 8]; 4];
    for r in 0..4 {
        w[r][..4].copy_from_slice(&a[r]);
        w[r][4 + r] = Complex64::new(1.0, 0.0);
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| {
                w[i][col].norm_sqr().partial_cmp(&w[j][col].norm_sqr()).expect("finite")
            })
            .expect("nonempty");
        w.swap(col, pivot);
        let inv = Complex64::new(1.0, 0.0) / w[col][col];
        for v in w[col].iter_mut() {
            *v *= inv;
        }
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = w[r][col];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..8 {
                let sub = f * w[col][c];
                w[r][c] -= sub;
            }
        }
    }
    std::array::from_fn(|r| std::array::from_fn(|c| w[r][4 + c]))
}

pub struct DiracOp {
    pub grid: Grid,
    pub consts: PhysConsts,
    pub dt: f64,
    pub tol: f64,
    a0: Vec<f64>,
    a1: Vec<f64>,
    alpha1: CMat4,
    mbeta: CMat4,
    fft: AxisFft,
    ks: Vec<f64>,
    /// Per-mode inverse of I + i dt/(2 hbar) H_const(k), H_const built from
    /// the mean potential samples.
    precon: Vec<CMat4>,
    /// Iterations used by the most recent solve, for diagnostics.
    pub last_iterations: usize,
}

impl DiracOp {
    pub fn new(
        grid: Grid,
        consts: PhysConsts,
        fields: &FieldSet,
        dt: f64,
        tol: f64,
    ) -> Result<Self, SimError> {
        if grid.dim != 1 {
            return Err(SimError::Grid("the four-component integrator runs on one axis".into()));
        }
        for mu in [2usize, 3] {
            if !fields.exprs[mu].is_zero() {
                return Err(SimError::Field {
                    key: format!("A{mu}"),
                    msg: "must vanish identically for the 1+1D run".into(),
                });
            }
        }
        if !(fields.mask == super::TermMask::default()) {
            return Err(SimError::Field {
                key: "term_mask".into(),
                msg: "term masking applies only to the split-operator scheme".into(),
            });
        }
        let rep = MatrixRep::lorentz();
        let alpha1 = numeric_matrix(&rep.alpha[1], &consts);
        let beta = numeric_matrix(&rep.beta, &consts);
        let mbeta: CMat4 =
            std::array::from_fn(|r| std::array::from_fn(|c| beta[r][c] * consts.m));
        let n = grid.n[0];
        let ks = wavenumbers(n, grid.length[0]);
        let a0 = fields.samples[0].clone();
        let a1 = fields.samples[1].clone();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (a0_bar, a1_bar) = (mean(&a0), mean(&a1));
        let lambda = dt / (2.0 * consts.hbar);
        let precon = ks
            .iter()
            .map(|&k| {
                // H(k) = alpha1 (hbar k - e a1_bar) + m beta - e a0_bar.
                let kin = consts.hbar * k - consts.e * a1_bar;
                let mut m: CMat4 = std::array::from_fn(|r| {
                    std::array::from_fn(|c| alpha1[r][c] * kin + mbeta[r][c])
                });
                for (r, row) in m.iter_mut().enumerate() {
                    row[r] -= consts.e * a0_bar;
                }
                // Cayley matrix I + i lambda H(k).
                let il = Complex64::new(0.0, lambda);
                let mut cay: CMat4 =
                    std::array::from_fn(|r| std::array::from_fn(|c| il * m[r][c]));
                for (r, row) in cay.iter_mut().enumerate() {
                    row[r] += 1.0;
                }
                invert4(&cay)
            })
            .collect();
        Ok(DiracOp {
            grid,
            consts,
            dt,
            tol,
            a0,
            a1,
            alpha1,
            mbeta,
            fft: AxisFft::new(n),
            ks,
            precon,
            last_iterations: 0,
        })
    }

    /// The discrete Hamiltonian, spectral in the derivative.
    pub fn apply_h(&mut self, state: &SpinorField) -> SpinorField {
        let n = self.grid.points();
        let mut out = SpinorField::zero(state.grid, 4);
        // u_b = (-i hbar d_1 - e A_1) psi_b.
        let mut u: Vec<Vec<Complex64>> = Vec::with_capacity(4);
        for b in 0..4 {
            let mut d = state.comp[b].clone();
            derivative_along_axis(&mut d, self.grid.n, 0, &mut self.fft, &self.ks);
            for (i, v) in d.iter_mut().enumerate() {
                *v = Complex64::new(0.0, -self.consts.hbar) * *v
                    - self.consts.e * self.a1[i] * state.comp[b][i];
            }
            u.push(d);
        }
        for a in 0..4 {
            for b in 0..4 {
                let am = self.alpha1[a][b];
                let mm = self.mbeta[a][b];
                if am.norm_sqr() != 0.0 {
                    for i in 0..n {
                        out.comp[a][i] += am * u[b][i];
                    }
                }
                if mm.norm_sqr() != 0.0 {
                    for i in 0..n {
                        out.comp[a][i] += mm * state.comp[b][i];
                    }
                }
            }
            for i in 0..n {
                out.comp[a][i] -= self.consts.e * self.a0[i] * state.comp[a][i];
            }
        }
        out
    }

    fn flat(state: &SpinorField) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(4 * state.grid.points());
        for c in &state.comp {
            v.extend_from_slice(c);
        }
        v
    }

    fn unflat(&self, v: &[Complex64]) -> SpinorField {
        let n = self.grid.points();
        let mut s = SpinorField::zero(self.grid, 4);
        for c in 0..4 {
            s.comp[c].copy_from_slice(&v[c * n..(c + 1) * n]);
        }
        s
    }

    /// (I + i dt/(2 hbar) H) v on the flattened vector.
    fn cayley_plus(&mut self, v: &[Complex64]) -> Vec<Complex64> {
        let state = self.unflat(v);
        let hv = self.apply_h(&state);
        let il = Complex64::new(0.0, self.dt / (2.0 * self.consts.hbar));
        let mut out = Vec::with_capacity(v.len());
        for c in 0..4 {
            for (x, hx) in state.comp[c].iter().zip(&hv.comp[c]) {
                out.push(x + il * hx);
            }
        }
        out
    }

    /// Exact Fourier-space inverse of the constant-coefficient Cayley matrix.
    fn precondition(&mut self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.points();
        let mut spectra: Vec<Vec<Complex64>> = (0..4)
            .map(|c| {
                let mut buf = v[c * n..(c + 1) * n].to_vec();
                self.fft.forward(&mut buf);
                buf
            })
            .collect();
        for k in 0..n {
            let mode = [spectra[0][k], spectra[1][k], spectra[2][k], spectra[3][k]];
            let out = mat_vec(&self.precon[k], &mode);
            for c in 0..4 {
                spectra[c][k] = out[c];
            }
        }
        let mut out = Vec::with_capacity(4 * n);
        for buf in spectra.iter_mut() {
            self.fft.inverse(buf);
            out.extend_from_slice(buf);
        }
        out
    }

    /// Preconditioned BiCGSTAB on the Cayley system A x = b with
    /// A = I + i dt/(2 hbar) H and right preconditioning by the
    /// constant-field inverse. Stops on |r| <= tol |b|.
    fn bicgstab(
        &mut self,
        b: &[Complex64],
        step_index: usize,
    ) -> Result<Vec<Complex64>, SimError> {
        const MAX_ITER: usize = 200;
        let dot = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
            u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
        };
        let norm = |u: &[Complex64]| dot(u, u).re.sqrt();
        let b_norm = norm(b);
        let stop = self.tol * b_norm.max(f64::MIN_POSITIVE);
        let n = b.len();

        // Start from the preconditioner's answer; for uniform potentials it
        // is already exact.
        let mut x = self.precondition(b);
        let ax = self.cayley_plus(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm(&r) <= stop {
            self.last_iterations = 0;
            return Ok(x);
        }
        let r0 = r.clone();
        let mut rho = Complex64::new(1.0, 0.0);
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut omega = Complex64::new(1.0, 0.0);
        let mut p = vec![Complex64::default(); n];
        let mut v = vec![Complex64::default(); n];
        for it in 1..=MAX_ITER {
            let rho_next = dot(&r0, &r);
            if rho_next.norm() < f64::MIN_POSITIVE.sqrt() || omega.norm() == 0.0 {
                break;
            }
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let p_hat = self.precondition(&p);
            v = self.cayley_plus(&p_hat);
            let denom = dot(&r0, &v);
            if denom.norm() == 0.0 {
                break;
            }
            alpha = rho / denom;
            let s: Vec<Complex64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
            if norm(&s) <= stop {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                self.last_iterations = it;
                return Ok(x);
            }
            let s_hat = self.precondition(&s);
            let t = self.cayley_plus(&s_hat);
            let tt = dot(&t, &t).re;
            if tt == 0.0 {
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
            }
            r = s.iter().zip(&t).map(|(si, ti)| si - omega * ti).collect();
            if norm(&r) <= stop {
                self.last_iterations = it;
                return Ok(x);
            }
        }
        // Breakdown or iteration cap: report the true residual.
        let ax = self.cayley_plus(&x);
        let res: f64 = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
        if res <= stop {
            return Ok(x);
        }
        Err(SimError::SolverDiverged { step: step_index, residual: res / b_norm })
    }

    pub fn step(&mut self, state: &mut SpinorField, step_index: usize) -> Result<(), SimError> {
        let x = Self::flat(state);
        // rhs = (I - i lambda H) psi = 2 psi - (I + i lambda H) psi.
        let plus = self.cayley_plus(&x);
        let rhs: Vec<Complex64> = x.iter().zip(&plus).map(|(a, b)| 2.0 * a - b).collect();
        let solved = self.bicgstab(&rhs, step_index)?;
        *state = self.unflat(&solved);
        state.check_finite(step_index)
    }
}
