use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use super::dirac::DiracOp;
use super::pauli::PauliOp;
use super::*;
use crate::charges;
use crate::derivation::{field_equation, galilean_reduce};
use crate::expr::Context;
use crate::model::Model;
use crate::scenario::ScenarioConfig;

fn consts1() -> PhysConsts {
    PhysConsts { hbar: 1.0, m: 1.0, c: 1.0, e: 1.0 }
}

fn unit_constants() -> BTreeMap<String, f64> {
    ["hbar", "m", "c", "e"].iter().map(|s| (s.to_string(), 1.0)).collect()
}

fn zero_exprs() -> [Expr; 4] {
    std::array::from_fn(|_| Expr::zero())
}

fn mode_k(length: f64, mode: i64) -> f64 {
    2.0 * PI * mode as f64 / length
}

fn free_fields(grid: Grid) -> FieldSet {
    FieldSet::compile(zero_exprs(), grid, &unit_constants(), TermMask::default()).unwrap()
}

#[test]
fn grid_validation_rejects_bad_axes() {
    assert!(Grid::line(12, 8.0).is_err(), "12 is not a power of two");
    assert!(Grid::line(4, 8.0).is_err(), "below the 8-point floor");
    assert!(Grid::plane([16, 16], [8.0, -1.0]).is_err(), "negative length");
    assert!(Grid::plane([16, 16], [8.0, f64::NAN]).is_err(), "NaN length");
    let g = Grid::line(16, 8.0).unwrap();
    assert_eq!(g.spacing(0), 0.5);
    assert_eq!(g.coord(0, 8), 0.0, "coordinates are centered");
    assert_eq!(g.coord(0, 0), -4.0);
}

#[test]
fn packet_construction_errors() {
    let grid = Grid::line(16, 8.0).unwrap();
    let narrow = PacketKind::Gaussian {
        center: vec![0.0],
        width: 1.0,
        kick: vec![0.0],
        weights: None,
    };
    match init_packet(grid, RepKind::Lorentz, &narrow, &consts1()) {
        Err(SimError::WidthBelowFourSpacings { .. }) => {}
        other => panic!("expected a width error, got {other:?}"),
    }
    let off_lattice = PacketKind::PlaneWave {
        k: vec![0.37],
        branch: Branch::Positive,
        weights: None,
    };
    match init_packet(grid, RepKind::Lorentz, &off_lattice, &consts1()) {
        Err(SimError::NonCommensurate { axis: 0, .. }) => {}
        other => panic!("expected a commensurability error, got {other:?}"),
    }
    let kicked = PacketKind::Gaussian {
        center: vec![0.0],
        width: 2.0,
        kick: vec![0.37],
        weights: None,
    };
    assert!(matches!(
        init_packet(grid, RepKind::Lorentz, &kicked, &consts1()),
        Err(SimError::NonCommensurate { .. })
    ));
}

#[test]
fn rest_state_weights_and_energy() {
    let w = dirac_plane_weights(0.0, Branch::Positive, &consts1());
    assert_eq!(w[0], Complex64::new(1.0, 0.0));
    for v in &w[1..] {
        assert_eq!(*v, Complex64::default());
    }
    let grid = Grid::line(32, 16.0).unwrap();
    let state = init_packet(
        grid,
        RepKind::Lorentz,
        &PacketKind::PlaneWave { k: vec![0.0], branch: Branch::Positive, weights: None },
        &consts1(),
    )
    .unwrap();
    let mut op = StepOp::Dirac(
        DiracOp::new(grid, consts1(), &free_fields(grid), 0.001, 1e-12).unwrap(),
    );
    let e = charges::energy(&state, &mut op);
    assert!((e - 1.0).abs() < 1e-12, "rest energy mc^2, got {e}");
}

#[test]
fn zero_steps_run_returns_initial_sample() {
    let text = r#"{
        "representation": "lorentz",
        "grid": {"n": [32], "length": [16.0]},
        "initial": {"kind": "plane-wave", "mode": [2]},
        "evolve": {"dt": 0.001, "steps": 0, "scheme": "crank-nicolson-dirac"}
    }"#;
    let config = ScenarioConfig::from_str(text).unwrap();
    let out = run(&config).unwrap();
    assert_eq!(out.series.times, vec![0.0]);
    let grid = config.build_grid().unwrap();
    let packet = init_packet(
        grid,
        RepKind::Lorentz,
        &config.packet_kind(grid).unwrap(),
        &consts1(),
    )
    .unwrap();
    assert_eq!(out.state, packet, "zero steps must leave the state untouched");
    assert!((out.series.values[0][0] - 1.0).abs() < 1e-14);
}

#[test]
fn record_cadence_includes_endpoints() {
    let text = r#"{
        "representation": "lorentz",
        "grid": {"n": [16], "length": [8.0]},
        "initial": {"kind": "plane-wave", "mode": [1]},
        "evolve": {"dt": 0.001, "steps": 7, "scheme": "crank-nicolson-dirac",
                   "record_every": 3}
    }"#;
    let config = ScenarioConfig::from_str(text).unwrap();
    let out = run(&config).unwrap();
    let expected: Vec<f64> = [0.0, 3.0, 6.0, 7.0].iter().map(|s| s * 0.001).collect();
    assert_eq!(out.series.times, expected);
}

#[test]
fn dirac_plane_wave_one_step_is_the_cayley_phase() {
    let grid = Grid::line(64, 16.0).unwrap();
    let k = mode_k(16.0, 4);
    let dt = 0.002;
    let state0 = init_packet(
        grid,
        RepKind::Lorentz,
        &PacketKind::PlaneWave { k: vec![k], branch: Branch::Positive, weights: None },
        &consts1(),
    )
    .unwrap();
    let mut op = DiracOp::new(grid, consts1(), &free_fields(grid), dt, 1e-12).unwrap();
    let mut state = state0.clone();
    op.step(&mut state, 1).unwrap();
    // Cayley transform of the eigenvalue: (1 - i dt E / 2) / (1 + i dt E / 2).
    let e = dirac_energy(k, &consts1());
    let il = Complex64::new(0.0, dt / 2.0 * e);
    let factor = (Complex64::new(1.0, 0.0) - il) / (Complex64::new(1.0, 0.0) + il);
    for c in 0..4 {
        for (after, before) in state.comp[c].iter().zip(&state0.comp[c]) {
            assert!(
                (after - factor * before).norm() < 1e-11,
                "component {c}: {after} vs {}",
                factor * before
            );
        }
    }
}

#[test]
fn constant_scalar_potential_shifts_the_phase() {
    let grid = Grid::line(64, 16.0).unwrap();
    let k = mode_k(16.0, 4);
    let dt = 0.001;
    let v0 = 0.5;
    let packet =
        PacketKind::PlaneWave { k: vec![k], branch: Branch::Positive, weights: None };
    let state0 = init_packet(grid, RepKind::Lorentz, &packet, &consts1()).unwrap();

    let mut constants = unit_constants();
    constants.insert("V".into(), v0);
    let mut ctx = Context::standard();
    ctx.parameter("V").unwrap();
    let mut exprs = zero_exprs();
    exprs[0] = Expr::parse("V", &mut ctx).unwrap();
    let fields = FieldSet::compile(exprs, grid, &constants, TermMask::default()).unwrap();

    let mut op_free = DiracOp::new(grid, consts1(), &free_fields(grid), dt, 1e-12).unwrap();
    let mut op_pot = DiracOp::new(grid, consts1(), &fields, dt, 1e-12).unwrap();
    let mut free = state0.clone();
    let mut shifted = state0.clone();
    for step in 1..=5 {
        op_free.step(&mut free, step).unwrap();
        op_pot.step(&mut shifted, step).unwrap();
    }
    // Per step the eigenvalue moves from E to E - eV, so the relative phase
    // is the difference of the two Cayley phases; to leading order e V dt.
    let e = dirac_energy(k, &consts1());
    let theta = 2.0 * (dt / 2.0 * e).atan() - 2.0 * (dt / 2.0 * (e - v0)).atan();
    let expected = Complex64::new(0.0, 5.0 * theta).exp();
    assert!((theta - v0 * dt).abs() < 1e-9, "leading order is e V dt");
    for c in 0..4 {
        for (s, f) in shifted.comp[c].iter().zip(&free.comp[c]) {
            if f.norm() < 1e-12 {
                continue;
            }
            assert!((s - expected * f).norm() < 1e-10, "{s} vs {}", expected * f);
        }
    }
}

#[test]
fn varying_potential_engages_the_solver_and_keeps_norm() {
    let grid = Grid::line(64, 16.0).unwrap();
    let mut ctx = Context::standard();
    let mut exprs = zero_exprs();
    exprs[0] = Expr::parse("x1*x1/64", &mut ctx).unwrap();
    let fields =
        FieldSet::compile(exprs, grid, &unit_constants(), TermMask::default()).unwrap();
    let mut op = DiracOp::new(grid, consts1(), &fields, 0.001, 1e-12).unwrap();
    let mut state = init_packet(
        grid,
        RepKind::Lorentz,
        &PacketKind::Gaussian {
            center: vec![0.0],
            width: 2.0,
            kick: vec![mode_k(16.0, 2)],
            weights: None,
        },
        &consts1(),
    )
    .unwrap();
    let n0 = charges::norm(&state, RepKind::Lorentz);
    let mut used_iterations = false;
    for step in 1..=20 {
        op.step(&mut state, step).unwrap();
        used_iterations |= op.last_iterations > 0;
    }
    assert!(used_iterations, "a non-uniform potential must defeat the preconditioner");
    let drift = (charges::norm(&state, RepKind::Lorentz) - n0).abs();
    assert!(drift < 1e-10, "norm drift {drift}");
}

#[test]
fn dirac_rejects_out_of_scope_configurations() {
    let grid = Grid::line(32, 16.0).unwrap();
    let mut ctx = Context::standard();
    let mut exprs = zero_exprs();
    exprs[2] = Expr::parse("1", &mut ctx).unwrap();
    let fields =
        FieldSet::compile(exprs, grid, &unit_constants(), TermMask::default()).unwrap();
    assert!(matches!(
        DiracOp::new(grid, consts1(), &fields, 0.001, 1e-12),
        Err(SimError::Field { .. })
    ));

    let masked = FieldSet::compile(
        zero_exprs(),
        grid,
        &unit_constants(),
        TermMask { kinetic: true, scalar_potential: false, zeeman: true },
    )
    .unwrap();
    assert!(DiracOp::new(grid, consts1(), &masked, 0.001, 1e-12).is_err());

    let plane = Grid::plane([16, 16], [8.0, 8.0]).unwrap();
    let plane_fields = free_fields(plane);
    assert!(DiracOp::new(plane, consts1(), &plane_fields, 0.001, 1e-12).is_err());
}

#[test]
fn pauli_rejects_longitudinal_vector_potentials() {
    let grid = Grid::plane([16, 16], [8.0, 8.0]).unwrap();
    let mut ctx = Context::standard();
    ctx.parameter("B").unwrap();
    let mut constants = unit_constants();
    constants.insert("B".into(), 1.0);
    let mut exprs = zero_exprs();
    exprs[1] = Expr::parse("B*x1/2", &mut ctx).unwrap();
    let fields = FieldSet::compile(exprs, grid, &constants, TermMask::default()).unwrap();
    match PauliOp::new(grid, consts1(), &fields, 0.01) {
        Err(SimError::Field { key, .. }) => assert_eq!(key, "A1"),
        Err(other) => panic!("expected a field error, got {other:?}"),
        Ok(_) => panic!("expected a field error, got an operator"),
    }

    let line = Grid::line(16, 8.0).unwrap();
    let line_fields = free_fields(line);
    assert!(PauliOp::new(line, consts1(), &line_fields, 0.01).is_err());
}

#[test]
fn zeeman_only_evolution_is_an_exact_spin_rotation() {
    let grid = Grid::plane([16, 16], [8.0, 8.0]).unwrap();
    let b = 0.8;
    let mut constants = unit_constants();
    constants.insert("B".into(), b);
    let mut ctx = Context::standard();
    ctx.parameter("B").unwrap();
    let mut exprs = zero_exprs();
    exprs[1] = Expr::parse("-B*x2/2", &mut ctx).unwrap();
    exprs[2] = Expr::parse("B*x1/2", &mut ctx).unwrap();
    let mask = TermMask { kinetic: false, scalar_potential: false, zeeman: true };
    let fields = FieldSet::compile(exprs, grid, &constants, mask).unwrap();
    let mut op = PauliOp::new(grid, consts1(), &fields, 0.01).unwrap();
    let half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let state0 = init_packet(
        grid,
        RepKind::Galilean,
        &PacketKind::Gaussian {
            center: vec![0.0, 0.0],
            width: 2.0,
            kick: vec![0.0, 0.0],
            weights: Some(vec![half, half]),
        },
        &consts1(),
    )
    .unwrap();
    let mut state = state0.clone();
    let steps = 10;
    for step in 1..=steps {
        op.step(&mut state, step).unwrap();
    }
    let t = 0.01 * steps as f64;
    // The component phases rotate oppositely at eB/2m each.
    let up = Complex64::new(0.0, 0.5 * b * t).exp();
    let down = Complex64::new(0.0, -0.5 * b * t).exp();
    for i in 0..grid.points() {
        assert!((state.comp[0][i] - up * state0.comp[0][i]).norm() < 1e-12);
        assert!((state.comp[1][i] - down * state0.comp[1][i]).norm() < 1e-12);
    }
    let (sx, sy) = charges::spin_xy(&state);
    assert!((sx - (b * t).cos()).abs() < 1e-12, "sigma^1 follows cos(eBt/m)");
    assert!((sy + (b * t).sin()).abs() < 1e-12);
}

#[test]
fn free_gaussian_spreads_at_the_analytic_rate() {
    let grid = Grid::plane([64, 64], [24.0, 24.0]).unwrap();
    let fields = free_fields(grid);
    let w = 2.0;
    let mut op = PauliOp::new(grid, consts1(), &fields, 0.01).unwrap();
    let mut state = init_packet(
        grid,
        RepKind::Galilean,
        &PacketKind::Gaussian {
            center: vec![0.0, 0.0],
            width: w,
            kick: vec![0.0, 0.0],
            weights: None,
        },
        &consts1(),
    )
    .unwrap();
    let variance = |s: &SpinorField| {
        let mut acc = 0.0;
        for i0 in 0..grid.n[0] {
            let x = grid.coord(0, i0);
            for i1 in 0..grid.n[1] {
                acc += x * x * s.comp[0][grid.index(i0, i1)].norm_sqr();
            }
        }
        acc * grid.cell_volume()
    };
    let v0 = variance(&state);
    assert!((v0 - w * w / 2.0).abs() < 1e-6, "initial variance w^2/2, got {v0}");
    let steps = 50;
    for step in 1..=steps {
        op.step(&mut state, step).unwrap();
    }
    let t = 0.01 * steps as f64;
    let expected = (w * w / 2.0) * (1.0 + (t / (w * w)).powi(2));
    let vt = variance(&state);
    assert!(
        (vt / expected - 1.0).abs() < 1e-4,
        "variance {vt} vs analytic {expected}"
    );
}

#[test]
fn derived_normal_form_matches_the_discrete_dirac_operator() {
    let grid = Grid::line(64, 16.0).unwrap();
    let mut ctx = Context::standard();
    let a0 = Expr::parse("x1*x1/32", &mut ctx).unwrap();
    let a1 = Expr::parse("x1/2", &mut ctx).unwrap();
    let exprs = [a0.clone(), a1.clone(), Expr::zero(), Expr::zero()];
    let model = Model::with_potentials(
        RepKind::Lorentz,
        [a0, a1, Expr::zero(), Expr::zero()],
    );
    let pde = field_equation(&model).unwrap();

    let modes = [3i64, -2, 5, 1];
    let weights = [
        Complex64::new(0.8, 0.1),
        Complex64::new(-0.3, 0.4),
        Complex64::new(0.2, -0.7),
        Complex64::new(0.5, 0.6),
    ];
    let mut state = SpinorField::zero(grid, 4);
    for b in 0..4 {
        let k = mode_k(16.0, modes[b]);
        for i in 0..grid.points() {
            let x = grid.coord(0, i);
            state.comp[b][i] = weights[b] * Complex64::new(0.0, k * x).exp();
        }
    }
    let fields =
        FieldSet::compile(exprs, grid, &unit_constants(), TermMask::default()).unwrap();
    let mut op = DiracOp::new(grid, consts1(), &fields, 0.001, 1e-12).unwrap();
    let h_psi = op.apply_h(&state);

    // Evaluate each evolution rule d0 Psi_a = rhs_a at every grid point and
    // compare with (H psi)_a / (i hbar).
    let chart = crate::forms::Chart;
    let mut max_err = 0.0f64;
    let mut max_mag = 0.0f64;
    for (a, (_, rhs)) in pde.evolution_rules.iter().enumerate() {
        for i in 0..grid.points() {
            let x = grid.coord(0, i);
            let mut map = constants_atom_map(&unit_constants());
            map.insert(Atom::Sym(chart.coord_symbol(1)), Complex64::new(x, 0.0));
            for atom in rhs.atoms() {
                if let Atom::Fn(f) = atom {
                    let b: usize = f.name.strip_prefix("Psi").unwrap().parse::<usize>().unwrap() - 1;
                    assert_eq!(f.deriv[0], 0, "normal form carries no time derivatives");
                    let k = mode_k(16.0, modes[b]);
                    let value = if f.deriv[2] > 0 || f.deriv[3] > 0 {
                        Complex64::default()
                    } else {
                        state.comp[b][i] * Complex64::new(0.0, k).powu(f.deriv[1])
                    };
                    map.insert(atom.clone(), value);
                }
            }
            let symbolic = rhs.eval(&map).unwrap();
            let discrete = h_psi.comp[a][i] / Complex64::new(0.0, 1.0);
            max_err = max_err.max((symbolic - discrete).norm());
            max_mag = max_mag.max(discrete.norm());
        }
    }
    assert!(
        max_err <= 1e-8 * max_mag,
        "normal form vs discrete operator: {max_err} vs scale {max_mag}"
    );
}

#[test]
fn derived_reduction_matches_the_discrete_pauli_operator() {
    let grid = Grid::plane([32, 32], [16.0, 16.0]).unwrap();
    let mut ctx = Context::standard();
    let a0 = Expr::parse("x1*x2/16", &mut ctx).unwrap();
    let a1 = Expr::parse("x2*x2/8", &mut ctx).unwrap();
    let a2 = Expr::parse("x1/2", &mut ctx).unwrap();
    let exprs = [a0.clone(), a1.clone(), a2.clone(), Expr::zero()];
    let model =
        Model::with_potentials(RepKind::Galilean, [a0, a1, a2, Expr::zero()]);
    let pauli = galilean_reduce(&field_equation(&model).unwrap()).unwrap();

    let modes = [(2i64, -1i64), (-3, 2)];
    let weights = [Complex64::new(0.7, -0.2), Complex64::new(-0.4, 0.5)];
    let mut state = SpinorField::zero(grid, 2);
    for b in 0..2 {
        let (p, q) = (mode_k(16.0, modes[b].0), mode_k(16.0, modes[b].1));
        for i0 in 0..grid.n[0] {
            for i1 in 0..grid.n[1] {
                let phase = p * grid.coord(0, i0) + q * grid.coord(1, i1);
                state.comp[b][grid.index(i0, i1)] =
                    weights[b] * Complex64::new(0.0, phase).exp();
            }
        }
    }
    let fields =
        FieldSet::compile(exprs, grid, &unit_constants(), TermMask::default()).unwrap();
    let mut op = PauliOp::new(grid, consts1(), &fields, 0.001).unwrap();
    let h_phi = op.apply_h(&state);

    let chart = crate::forms::Chart;
    let mut max_err = 0.0f64;
    let mut max_mag = 0.0f64;
    for (a, rhs) in pauli.rhs.iter().enumerate() {
        for i0 in 0..grid.n[0] {
            for i1 in 0..grid.n[1] {
                let idx = grid.index(i0, i1);
                let mut map = constants_atom_map(&unit_constants());
                map.insert(
                    Atom::Sym(chart.coord_symbol(1)),
                    Complex64::new(grid.coord(0, i0), 0.0),
                );
                map.insert(
                    Atom::Sym(chart.coord_symbol(2)),
                    Complex64::new(grid.coord(1, i1), 0.0),
                );
                for atom in rhs.atoms() {
                    if let Atom::Fn(f) = atom {
                        let b: usize =
                            f.name.strip_prefix("Psi").unwrap().parse::<usize>().unwrap() - 1;
                        assert!(b < 2, "the reduction must only reference the upper pair");
                        assert_eq!(f.deriv[0], 0);
                        let (p, q) = (mode_k(16.0, modes[b].0), mode_k(16.0, modes[b].1));
                        let value = if f.deriv[3] > 0 {
                            Complex64::default()
                        } else {
                            state.comp[b][idx]
                                * Complex64::new(0.0, p).powu(f.deriv[1])
                                * Complex64::new(0.0, q).powu(f.deriv[2])
                        };
                        map.insert(atom.clone(), value);
                    }
                }
                let symbolic = rhs.eval(&map).unwrap();
                let discrete = h_phi.comp[a][idx];
                max_err = max_err.max((symbolic - discrete).norm());
                max_mag = max_mag.max(discrete.norm());
            }
        }
    }
    assert!(
        max_err <= 1e-8 * max_mag,
        "reduction vs discrete operator: {max_err} vs scale {max_mag}"
    );
}

#[test]
fn identical_configs_produce_bit_identical_runs() {
    let text = r#"{
        "representation": "galilean",
        "constants": {"B": 0.6},
        "grid": {"n": [16, 16], "length": [8.0, 8.0]},
        "fields": {"A1": "-B*x2/2", "A2": "B*x1/2"},
        "initial": {"kind": "gaussian", "width": 2.5},
        "evolve": {"dt": 0.005, "steps": 20, "scheme": "split-operator-pauli"}
    }"#;
    let config = ScenarioConfig::from_str(text).unwrap();
    let first = run(&config).unwrap();
    let second = run(&config).unwrap();
    assert_eq!(first.state, second.state, "states must match bitwise");
    assert_eq!(first.series.values, second.series.values);
    assert_eq!(
        crate::charges::series_to_csv(&first.series),
        crate::charges::series_to_csv(&second.series)
    );
}

#[test]
fn non_finite_states_are_detected() {
    let grid = Grid::line(16, 8.0).unwrap();
    let mut state = SpinorField::zero(grid, 4);
    state.comp[2][3] = Complex64::new(f64::NAN, 0.0);
    assert!(matches!(state.check_finite(7), Err(SimError::NonFinite { step: 7 })));
}
