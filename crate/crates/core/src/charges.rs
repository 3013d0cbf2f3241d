//! Discrete conserved-charge reductions: norm, momentum, energy, angular
//! momentum, and the in-plane spin expectation used by the precession fit.
//!
//! Densities mirror the symbolically derived charge densities with the
//! normalization factor absorbed: the gauge charge is the alpha^0-weighted
//! norm, momenta are alpha^0-weighted expectations of -i hbar d_j, and the
//! axis-3 rotation charge splits into orbital and spin parts. All reductions
//! run in index order with no threading, so repeated runs are bit-identical.

use num_complex::Complex64;

use crate::model::RepKind;
use crate::simulate::spectral::{derivative_along_axis, wavenumbers, AxisFft};
use crate::simulate::{SimError, SpinorField, StepOp};

/// Diagonal of alpha^0 in the given representation, truncated to the number
/// of stored components. The Galilean lower block carries no density.
pub fn alpha0_weights(rep: RepKind, ncomp: usize) -> Vec<f64> {
    let full = match rep {
        RepKind::Lorentz => [1.0, 1.0, 1.0, 1.0],
        RepKind::Galilean => [1.0, 1.0, 0.0, 0.0],
    };
    full[..ncomp].to_vec()
}

/// sigma^3 diagonal repeated over 2x2 blocks, for the spin charge.
fn spin_weights(ncomp: usize) -> Vec<f64> {
    (0..ncomp).map(|a| if a % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// The gauge charge Q = sum_a w_a |psi_a|^2 dV. Accumulated as a complex
/// number to keep the reduction structurally identical to the other
/// charges; the imaginary part must vanish.
pub fn norm(state: &SpinorField, rep: RepKind) -> f64 {
    let weights = alpha0_weights(rep, state.ncomp());
    let mut acc = Complex64::default();
    for (a, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for v in &state.comp[a] {
            acc += w * v.conj() * v;
        }
    }
    acc *= state.grid.cell_volume();
    assert!(acc.im.abs() < 1e-14, "norm reduction must be real, got {acc}");
    acc.re
}

/// Momentum expectation <psi| -i hbar d_axis |psi> with alpha^0 weights.
pub fn momentum(state: &SpinorField, rep: RepKind, axis: usize, hbar: f64) -> f64 {
    let grid = state.grid;
    let weights = alpha0_weights(rep, state.ncomp());
    let ks = wavenumbers(grid.n[axis], grid.length[axis]);
    let mut fft = AxisFft::new(grid.n[axis]);
    let mut acc = Complex64::default();
    for (a, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let mut d = state.comp[a].clone();
        derivative_along_axis(&mut d, grid.n, axis, &mut fft, &ks);
        for (x, dx) in state.comp[a].iter().zip(&d) {
            acc += w * x.conj() * Complex64::new(0.0, -hbar) * dx;
        }
    }
    (acc * grid.cell_volume()).re
}

/// Orbital, spin, and total axis-3 angular momentum about the domain
/// center: L = <x1 p2 - x2 p1>, S = (hbar/2) <Sigma^3>, J = L + S.
pub fn angular_momentum_z(
    state: &SpinorField,
    rep: RepKind,
    hbar: f64,
) -> Result<(f64, f64, f64), SimError> {
    let grid = state.grid;
    if grid.dim != 2 {
        return Err(SimError::Grid(
            "the axis-3 rotation charge needs both in-plane axes".into(),
        ));
    }
    let weights = alpha0_weights(rep, state.ncomp());
    let spins = spin_weights(state.ncomp());
    let ks0 = wavenumbers(grid.n[0], grid.length[0]);
    let ks1 = wavenumbers(grid.n[1], grid.length[1]);
    let mut fft0 = AxisFft::new(grid.n[0]);
    let mut fft1 = AxisFft::new(grid.n[1]);
    let mut orbital = Complex64::default();
    let mut spin = 0.0;
    for (a, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let mut d1 = state.comp[a].clone();
        derivative_along_axis(&mut d1, grid.n, 0, &mut fft0, &ks0);
        let mut d2 = state.comp[a].clone();
        derivative_along_axis(&mut d2, grid.n, 1, &mut fft1, &ks1);
        for i0 in 0..grid.n[0] {
            let x1 = grid.coord(0, i0);
            for i1 in 0..grid.n[1] {
                let x2 = grid.coord(1, i1);
                let idx = grid.index(i0, i1);
                let ang = x1 * d2[idx] - x2 * d1[idx];
                orbital +=
                    w * state.comp[a][idx].conj() * Complex64::new(0.0, -hbar) * ang;
                spin += w * spins[a] * state.comp[a][idx].norm_sqr();
            }
        }
    }
    let vol = grid.cell_volume();
    let l = (orbital * vol).re;
    let s = 0.5 * hbar * spin * vol;
    Ok((l, s, l + s))
}

/// In-plane spin expectations of a two-component state:
/// (<sigma^1>, <sigma^2>) = (2 Re, 2 Im) of integral conj(phi_1) phi_2.
pub fn spin_xy(state: &SpinorField) -> (f64, f64) {
    assert_eq!(state.ncomp(), 2, "in-plane spin is a two-component reduction");
    let mut acc = Complex64::default();
    for (u, l) in state.comp[0].iter().zip(&state.comp[1]) {
        acc += u.conj() * l;
    }
    acc *= state.grid.cell_volume();
    (2.0 * acc.re, 2.0 * acc.im)
}

/// Energy expectation through the integrator's own discrete Hamiltonian.
pub fn energy(state: &SpinorField, op: &mut StepOp) -> f64 {
    let h_psi = op.apply_h(state);
    let e = state.inner(&h_psi);
    assert!(
        e.im.abs() <= 1e-9 * (1.0 + e.re.abs()),
        "energy reduction of a hermitian operator must be real, got {e}"
    );
    e.re
}

/// Column names recorded per dimensionality, matching the CSV layout.
pub fn charge_columns(dim: usize) -> &'static [&'static str] {
    match dim {
        1 => &["norm", "px", "energy"],
        2 => &["norm", "px", "py", "energy", "Jz", "Sz", "Lz"],
        _ => panic!("unsupported dimension"),
    }
}

/// Time series of the conserved charges over one run, plus the optional
/// in-plane spin track for precession fitting.
#[derive(Debug, Clone)]
pub struct ChargeSeries {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-per-sample values in `charge_columns(dim)` order.
    pub values: Vec<Vec<f64>>,
    pub spin_xy: Option<Vec<(f64, f64)>>,
}

impl ChargeSeries {
    pub fn new(dim: usize, track_spin: bool) -> Self {
        ChargeSeries {
            dim,
            times: Vec::new(),
            values: Vec::new(),
            spin_xy: if track_spin { Some(Vec::new()) } else { None },
        }
    }

    pub fn sample(
        &mut self,
        t: f64,
        state: &SpinorField,
        rep: RepKind,
        op: &mut StepOp,
        consts: &crate::simulate::PhysConsts,
    ) -> Result<(), SimError> {
        let hbar = consts.hbar;
        let mut row = vec![norm(state, rep)];
        row.push(momentum(state, rep, 0, hbar));
        if self.dim == 2 {
            row.push(momentum(state, rep, 1, hbar));
        }
        row.push(energy(state, op));
        if self.dim == 2 {
            let (l, s, j) = angular_momentum_z(state, rep, hbar)?;
            row.push(j);
            row.push(s);
            row.push(l);
        }
        for v in &row {
            if !v.is_finite() {
                return Err(SimError::NonFinite { step: self.times.len() });
            }
        }
        if let Some(track) = &mut self.spin_xy {
            track.push(spin_xy(state));
        }
        self.times.push(t);
        self.values.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = charge_columns(self.dim).iter().position(|&c| c == name)?;
        Some(self.values.iter().map(|row| row[idx]).collect())
    }

    /// Relative drift per charge: max_t |Q(t) - Q(0)| / max(|Q(0)|, 1e-12).
    pub fn drift_report(&self) -> Vec<(&'static str, f64)> {
        charge_columns(self.dim)
            .iter()
            .map(|&name| {
                let col = self.column(name).expect("column exists for own dim");
                let q0 = col[0];
                let worst = col
                    .iter()
                    .map(|q| (q - q0).abs())
                    .fold(0.0f64, f64::max);
                (name, worst / q0.abs().max(1e-12))
            })
            .collect()
    }
}

/// CSV serialization: fixed header per dimensionality, full-precision
/// values, one row per sample.
pub fn series_to_csv(series: &ChargeSeries) -> String {
    let mut out = String::from("t");
    for name in charge_columns(series.dim) {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, row) in series.times.iter().zip(&series.values) {
        out.push_str(&format!("{t:e}"));
        for v in row {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

/// Least-squares angular frequency of the in-plane spin rotation: unwraps
/// atan2(<sigma^2>, <sigma^1>) and fits a line, returning |slope|. None when
/// the track is too short or the spin magnitude degenerates.
pub fn fit_precession(times: &[f64], spin: &[(f64, f64)]) -> Option<f64> {
    if times.len() != spin.len() || times.len() < 3 {
        return None;
    }
    let mut phases = Vec::with_capacity(spin.len());
    let mut prev = 0.0f64;
    for (i, (sx, sy)) in spin.iter().enumerate() {
        if (sx * sx + sy * sy).sqrt() < 1e-12 {
            return None;
        }
        let raw = sy.atan2(*sx);
        let unwrapped = if i == 0 {
            raw
        } else {
            let tau = 2.0 * std::f64::consts::PI;
            let mut delta = (raw - prev) % tau;
            if delta > std::f64::consts::PI {
                delta -= tau;
            } else if delta < -std::f64::consts::PI {
                delta += tau;
            }
            prev + delta
        };
        phases.push(unwrapped);
        prev = unwrapped;
    }
    let n = times.len() as f64;
    let t_mean = times.iter().sum::<f64>() / n;
    let p_mean = phases.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, p) in times.iter().zip(&phases) {
        num += (t - t_mean) * (p - p_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return None;
    }
    Some((num / den).abs())
}

/// Quadratic rescaling law shared by every charge: scaling the field by a
/// complex factor s multiplies each charge by |s|^2.
pub fn charge_scaling_factor(s: Complex64) -> f64 {
    s.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{init_packet, Branch, Grid, PacketKind, PhysConsts};

    fn consts() -> PhysConsts {
        PhysConsts { hbar: 1.0, m: 1.0, c: 1.0, e: 1.0 }
    }

    fn mode_k(grid: &Grid, axis: usize, mode: i64) -> f64 {
        2.0 * std::f64::consts::PI * mode as f64 / grid.length[axis]
    }

    #[test]
    fn plane_wave_momentum_is_hbar_k() {
        let grid = Grid::line(128, 32.0).unwrap();
        let k = mode_k(&grid, 0, 5);
        let state = init_packet(
            grid,
            RepKind::Lorentz,
            &PacketKind::PlaneWave { k: vec![k], branch: Branch::Positive, weights: None },
            &consts(),
        )
        .unwrap();
        assert!((norm(&state, RepKind::Lorentz) - 1.0).abs() < 1e-12);
        let p = momentum(&state, RepKind::Lorentz, 0, 1.0);
        assert!((p - k).abs() < 1e-10, "p = {p}, expected {k}");
    }

    #[test]
    fn kicked_gaussian_momentum_is_hbar_q() {
        let grid = Grid::plane([64, 64], [24.0, 24.0]).unwrap();
        let qx = mode_k(&grid, 0, 3);
        let qy = mode_k(&grid, 1, -2);
        let state = init_packet(
            grid,
            RepKind::Galilean,
            &PacketKind::Gaussian {
                center: vec![0.0, 0.0],
                width: 2.0,
                kick: vec![qx, qy],
                weights: None,
            },
            &consts(),
        )
        .unwrap();
        let px = momentum(&state, RepKind::Galilean, 0, 1.0);
        let py = momentum(&state, RepKind::Galilean, 1, 1.0);
        assert!((px - qx).abs() < 1e-8, "px = {px}, expected {qx}");
        assert!((py - qy).abs() < 1e-8, "py = {py}, expected {qy}");
    }

    #[test]
    fn vortex_state_has_unit_orbital_angular_momentum() {
        // phi_1 ~ (x1 + i x2) exp(-r^2 / 2 w^2) is an L = +hbar eigenstate.
        let grid = Grid::plane([64, 64], [24.0, 24.0]).unwrap();
        let mut state = crate::simulate::SpinorField::zero(grid, 2);
        let w = 2.0;
        for i0 in 0..64 {
            for i1 in 0..64 {
                let x1 = grid.coord(0, i0);
                let x2 = grid.coord(1, i1);
                let env = (-(x1 * x1 + x2 * x2) / (2.0 * w * w)).exp();
                state.comp[0][grid.index(i0, i1)] = Complex64::new(x1, x2) * env;
            }
        }
        let n = norm(&state, RepKind::Galilean);
        state.scale(Complex64::new(1.0 / n.sqrt(), 0.0));
        let (l, s, j) = angular_momentum_z(&state, RepKind::Galilean, 1.0).unwrap();
        assert!((l - 1.0).abs() < 1e-3, "L = {l}");
        assert!((s - 0.5).abs() < 1e-12, "S = {s}");
        assert!((j - 1.5).abs() < 1e-3, "J = {j}");
    }

    #[test]
    fn spin_expectations_of_known_superpositions() {
        let grid = Grid::plane([16, 16], [8.0, 8.0]).unwrap();
        let inv = 1.0 / (2.0f64 * grid.length[0] * grid.length[1]).sqrt();
        let mut state = crate::simulate::SpinorField::zero(grid, 2);
        for i in 0..grid.points() {
            state.comp[0][i] = Complex64::new(inv, 0.0);
            state.comp[1][i] = Complex64::new(inv, 0.0);
        }
        assert!((norm(&state, RepKind::Galilean) - 1.0).abs() < 1e-12);
        let (sx, sy) = spin_xy(&state);
        assert!((sx - 1.0).abs() < 1e-12);
        assert!(sy.abs() < 1e-12);
        let (_, s, _) = angular_momentum_z(&state, RepKind::Galilean, 1.0).unwrap();
        assert!(s.abs() < 1e-12);
        // i phase on the lower component rotates the spin into sigma^2.
        for v in state.comp[1].iter_mut() {
            *v *= Complex64::new(0.0, 1.0);
        }
        let (sx, sy) = spin_xy(&state);
        assert!(sx.abs() < 1e-12);
        assert!((sy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn charges_scale_quadratically() {
        let grid = Grid::line(64, 16.0).unwrap();
        let k = mode_k(&grid, 0, 2);
        let mut state = init_packet(
            grid,
            RepKind::Lorentz,
            &PacketKind::PlaneWave { k: vec![k], branch: Branch::Negative, weights: None },
            &consts(),
        )
        .unwrap();
        let n0 = norm(&state, RepKind::Lorentz);
        let p0 = momentum(&state, RepKind::Lorentz, 0, 1.0);
        let s = Complex64::new(0.6, -1.1);
        state.scale(s);
        let f = charge_scaling_factor(s);
        assert!((norm(&state, RepKind::Lorentz) - f * n0).abs() < 1e-10);
        assert!((momentum(&state, RepKind::Lorentz, 0, 1.0) - f * p0).abs() < 1e-10);
    }

    #[test]
    fn galilean_norm_ignores_absent_lower_block() {
        // A four-component field under the Galilean alpha^0 weighs only the
        // upper pair.
        let grid = Grid::line(16, 8.0).unwrap();
        let mut state = crate::simulate::SpinorField::zero(grid, 4);
        let v = Complex64::new(0.5, 0.0);
        for c in 0..4 {
            for x in state.comp[c].iter_mut() {
                *x = v;
            }
        }
        let g = norm(&state, RepKind::Galilean);
        let l = norm(&state, RepKind::Lorentz);
        assert!((l - 2.0 * g).abs() < 1e-12);
    }

    #[test]
    fn drift_report_measures_relative_departure_from_start() {
        let mut series = ChargeSeries::new(1, false);
        series.times = vec![0.0, 1.0, 2.0];
        series.values = vec![
            vec![1.0, 2.0, 4.0],
            vec![1.0 + 1e-6, 2.0, 4.0],
            vec![1.0 - 2e-6, 2.5, 4.0],
        ];
        let report = series.drift_report();
        let by_name: std::collections::BTreeMap<_, _> = report.into_iter().collect();
        assert!((by_name["norm"] - 2e-6).abs() < 1e-15);
        assert!((by_name["px"] - 0.25).abs() < 1e-15);
        assert_eq!(by_name["energy"], 0.0);
    }

    #[test]
    fn precession_fit_recovers_synthetic_frequency() {
        let omega = 0.731;
        let times: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        // Clockwise rotation, amplitude decaying slightly; the fit sees only
        // the phase.
        let spin: Vec<(f64, f64)> = times
            .iter()
            .map(|t| {
                let a = 1.0 - 0.1 * t / 10.0;
                (a * (omega * t).cos(), -a * (omega * t).sin())
            })
            .collect();
        let fit = fit_precession(&times, &spin).unwrap();
        assert!((fit - omega).abs() < 1e-9, "fit = {fit}");
    }

    #[test]
    fn precession_fit_rejects_degenerate_tracks() {
        assert!(fit_precession(&[0.0, 1.0], &[(1.0, 0.0), (0.0, 1.0)]).is_none());
        let times = vec![0.0, 1.0, 2.0];
        assert!(fit_precession(&times, &[(0.0, 0.0); 3]).is_none());
    }

    #[test]
    fn csv_layout_matches_dimension() {
        let mut series = ChargeSeries::new(2, false);
        series.times = vec![0.0];
        series.values = vec![vec![1.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0]];
        let csv = series_to_csv(&series);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,norm,px,py,energy,Jz,Sz,Lz");
        assert_eq!(lines.next().unwrap().split(',').count(), 8);
        let one = ChargeSeries::new(1, false);
        assert!(series_to_csv(&one).starts_with("t,norm,px,energy\n"));
    }
}
