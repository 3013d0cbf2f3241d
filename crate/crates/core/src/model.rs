//! Matrix representations and the variational 4-form.
//!
//! Two kinematics are supported: a relativistic representation whose
//! coefficient matrices satisfy the Dirac algebra, and a nonrelativistic one
//! whose degenerate time matrix splits the spinor into an evolving upper
//! pair and a constrained lower pair. The 4-form
//!
//! ```text
//! omega = -e A_mu Psid alpha^mu Psi eta
//!         - i hbar Psid alpha^mu dPsi ^ eta_mu
//!         + m Psid beta Psi eta
//! ```
//!
//! is built componentwise over the chart; everything downstream (field
//! equations, conserved currents) is derived from it.

use crate::expr::{Expr, OpaqueFn, Symbol};
use crate::forms::{Chart, Form};

/// 4x4 matrix with expression entries, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat4(pub [[Expr; 4]; 4]);

type Mat2 = [[Expr; 2]; 2];

impl Mat4 {
    pub fn zero() -> Self {
        Mat4(std::array::from_fn(|_| std::array::from_fn(|_| Expr::zero())))
    }

    pub fn identity() -> Self {
        Mat4(std::array::from_fn(|r| {
            std::array::from_fn(|c| if r == c { Expr::one() } else { Expr::zero() })
        }))
    }

    /// Assemble from 2x2 blocks `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &Mat2, b: &Mat2, c: &Mat2, d: &Mat2) -> Self {
        let mut m = Mat4::zero();
        for r in 0..2 {
            for s in 0..2 {
                m.0[r][s] = a[r][s].clone();
                m.0[r][s + 2] = b[r][s].clone();
                m.0[r + 2][s] = c[r][s].clone();
                m.0[r + 2][s + 2] = d[r][s].clone();
            }
        }
        m
    }

    pub fn entry(&self, r: usize, c: usize) -> &Expr {
        &self.0[r][c]
    }

    pub fn add(&self, rhs: &Mat4) -> Mat4 {
        Mat4(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.0[r][c].add(&rhs.0[r][c]))
        }))
    }

    pub fn sub(&self, rhs: &Mat4) -> Mat4 {
        Mat4(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.0[r][c].sub(&rhs.0[r][c]))
        }))
    }

    pub fn mul(&self, rhs: &Mat4) -> Mat4 {
        Mat4(std::array::from_fn(|r| {
            std::array::from_fn(|c| {
                let mut acc = Expr::zero();
                for k in 0..4 {
                    acc = acc.add(&self.0[r][k].mul(&rhs.0[k][c]));
                }
                acc
            })
        }))
    }

    pub fn scale(&self, s: &Expr) -> Mat4 {
        Mat4(std::array::from_fn(|r| std::array::from_fn(|c| self.0[r][c].mul(s))))
    }

    pub fn anticommutator(&self, rhs: &Mat4) -> Mat4 {
        self.mul(rhs).add(&rhs.mul(self))
    }

    /// Conjugate transpose (entrywise coefficient conjugation).
    pub fn dagger(&self) -> Mat4 {
        Mat4(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.0[c][r].conj_coefficients())
        }))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|row| row.iter().all(Expr::is_zero))
    }
}

fn mat2_zero() -> Mat2 {
    std::array::from_fn(|_| std::array::from_fn(|_| Expr::zero()))
}

fn mat2_identity() -> Mat2 {
    std::array::from_fn(|r| {
        std::array::from_fn(|c| if r == c { Expr::one() } else { Expr::zero() })
    })
}

fn mat2_scale(m: &Mat2, s: &Expr) -> Mat2 {
    std::array::from_fn(|r| std::array::from_fn(|c| m[r][c].mul(s)))
}

/// The Pauli matrix `sigma^i`, `i` in `1..=3`.
pub fn pauli(i: usize) -> Mat2 {
    let z = Expr::zero;
    let o = Expr::one;
    match i {
        1 => [[z(), o()], [o(), z()]],
        2 => [[z(), Expr::i().neg()], [Expr::i(), z()]],
        3 => [[o(), z()], [z(), Expr::int(-1)]],
        _ => panic!("Pauli index out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepKind {
    /// Relativistic: `alpha^0 = 1`, `alpha^i = c offdiag(sigma^i)`,
    /// `beta = c^2 diag(1, -1)` in 2x2 blocks.
    Lorentz,
    /// Nonrelativistic: `alpha^0 = diag(1, 0)`, `alpha^i = offdiag(sigma^i)`,
    /// `beta = diag(0, -2)` in 2x2 blocks.
    Galilean,
}

#[derive(Debug, Clone)]
pub struct MatrixRep {
    pub kind: RepKind,
    pub alpha: [Mat4; 4],
    pub beta: Mat4,
}

impl MatrixRep {
    pub fn new(kind: RepKind) -> Self {
        match kind {
            RepKind::Lorentz => Self::lorentz(),
            RepKind::Galilean => Self::galilean(),
        }
    }

    pub fn lorentz() -> Self {
        let c = Expr::sym(Symbol::constant("c"));
        let z = mat2_zero();
        let id = mat2_identity();
        let alpha = std::array::from_fn(|mu| {
            if mu == 0 {
                Mat4::identity()
            } else {
                let s = pauli(mu);
                Mat4::from_blocks(&z, &s, &s, &z).scale(&c)
            }
        });
        let beta = Mat4::from_blocks(&id, &z, &z, &mat2_scale(&id, &Expr::int(-1)))
            .scale(&c.mul(&c));
        MatrixRep { kind: RepKind::Lorentz, alpha, beta }
    }

    pub fn galilean() -> Self {
        let z = mat2_zero();
        let id = mat2_identity();
        let alpha = std::array::from_fn(|mu| {
            if mu == 0 {
                Mat4::from_blocks(&id, &z, &z, &z)
            } else {
                let s = pauli(mu);
                Mat4::from_blocks(&z, &s, &s, &z)
            }
        });
        let beta = Mat4::from_blocks(&z, &z, &z, &mat2_scale(&id, &Expr::int(-2)));
        MatrixRep { kind: RepKind::Galilean, alpha, beta }
    }
}

/// The volume form and its contractions, generated from Levi-Civita sums:
/// `eta = (1/24) eps_{mnrs} dx^m^dx^n^dx^r^dx^s`,
/// `eta_mu = (1/6) eps_{mu nrs} dx^n^dx^r^dx^s`,
/// `eta_munu = (1/2) eps_{mu nu rs} dx^r^dx^s`.
#[derive(Debug, Clone)]
pub struct EtaForms {
    pub eta: Form,
    pub eta_mu: [Form; 4],
    pub eta_munu: [[Form; 4]; 4],
}

fn epsilon4(p: [u8; 4]) -> i64 {
    let mut sign = 1i64;
    for i in 0..4 {
        for j in i + 1..4 {
            match p[i].cmp(&p[j]) {
                std::cmp::Ordering::Equal => return 0,
                std::cmp::Ordering::Greater => sign = -sign,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    sign
}

pub fn eta_forms() -> EtaForms {
    let mut eta = Form::zero(4);
    let mut eta_mu: [Form; 4] = std::array::from_fn(|_| Form::zero(3));
    let mut eta_munu: [[Form; 4]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| Form::zero(2)));
    for m in 0..4u8 {
        for n in 0..4u8 {
            for r in 0..4u8 {
                for s in 0..4u8 {
                    let eps = epsilon4([m, n, r, s]);
                    if eps == 0 {
                        continue;
                    }
                    eta = eta.add(&Form::from_wedge(Expr::ratio(eps, 24), &[m, n, r, s]));
                    eta_mu[m as usize] =
                        eta_mu[m as usize].add(&Form::from_wedge(Expr::ratio(eps, 6), &[n, r, s]));
                    eta_munu[m as usize][n as usize] = eta_munu[m as usize][n as usize]
                        .add(&Form::from_wedge(Expr::ratio(eps, 2), &[r, s]));
                }
            }
        }
    }
    EtaForms { eta, eta_mu, eta_munu }
}

/// Opaque potential `A_mu(x0..x3)`.
pub fn potential_fn(mu: usize) -> Expr {
    Expr::func(OpaqueFn::new(&format!("A_{mu}"), &[0, 1, 2, 3]))
}

/// Block-diagonal spin matrix `diag(sigma^i, sigma^i)`, `i` in `1..=3`.
pub fn spin_block(i: usize) -> Mat4 {
    let s = pauli(i);
    let z = mat2_zero();
    Mat4::from_blocks(&s, &z, &z, &s)
}

/// A representation together with the four scalar potentials `A_0..A_3`
/// (expressions in the base coordinates; opaque by default).
#[derive(Debug, Clone)]
pub struct Model {
    pub rep: MatrixRep,
    pub potentials: [Expr; 4],
}

impl Model {
    pub fn new(kind: RepKind) -> Self {
        Model { rep: MatrixRep::new(kind), potentials: std::array::from_fn(potential_fn) }
    }

    pub fn with_potentials(kind: RepKind, potentials: [Expr; 4]) -> Self {
        Model { rep: MatrixRep::new(kind), potentials }
    }

    /// Zero potentials.
    pub fn free(kind: RepKind) -> Self {
        Model::with_potentials(kind, std::array::from_fn(|_| Expr::zero()))
    }

    pub fn is_free(&self) -> bool {
        self.potentials.iter().all(Expr::is_zero)
    }

    /// `B^i = d_j A_k - d_k A_j` with `(i, j, k)` cyclic in `(1, 2, 3)`.
    pub fn magnetic_field(&self) -> [Expr; 3] {
        std::array::from_fn(|idx| {
            let j = 1 + (idx + 1) % 3;
            let k = 1 + (idx + 2) % 3;
            let dj = Chart.coord_symbol(j as u8);
            let dk = Chart.coord_symbol(k as u8);
            self.potentials[k].differentiate(&dj).sub(&self.potentials[j].differentiate(&dk))
        })
    }

    fn psi(a: usize) -> Expr {
        Expr::sym(Chart.psi_symbol(a + 1))
    }

    fn psid(a: usize) -> Expr {
        Expr::sym(Chart.psid_symbol(a + 1))
    }

    /// `Psid M Psi` as a scalar expression in the field coordinates.
    pub fn sandwich(&self, m: &Mat4) -> Expr {
        let mut acc = Expr::zero();
        for a in 0..4 {
            for b in 0..4 {
                let ent = m.entry(a, b);
                if ent.is_zero() {
                    continue;
                }
                acc = acc.add(&Self::psid(a).mul(ent).mul(&Self::psi(b)));
            }
        }
        acc
    }

    /// The variational 4-form on the chart.
    pub fn omega(&self) -> Form {
        let EtaForms { eta, eta_mu, .. } = eta_forms();
        let e = Expr::sym(Symbol::constant("e"));
        let hbar = Expr::sym(Symbol::constant("hbar"));
        let mass = Expr::sym(Symbol::constant("m"));

        let mut scalar = Expr::zero();
        for mu in 0..4 {
            let quad = self.sandwich(&self.rep.alpha[mu]);
            scalar = scalar.add(&e.neg().mul(&self.potentials[mu]).mul(&quad));
        }
        scalar = scalar.add(&mass.mul(&self.sandwich(&self.rep.beta)));
        let mut omega = eta.scale(&scalar);

        let minus_i_hbar = Expr::i().neg().mul(&hbar);
        for mu in 0..4 {
            for b in 0..4 {
                let mut coeff = Expr::zero();
                for a in 0..4 {
                    let ent = self.rep.alpha[mu].entry(a, b);
                    if ent.is_zero() {
                        continue;
                    }
                    coeff = coeff.add(&Self::psid(a).mul(ent));
                }
                if coeff.is_zero() {
                    continue;
                }
                let dpsi_b = Form::basis(Chart.psi(b + 1));
                omega = omega.add(
                    &dpsi_b.wedge(&eta_mu[mu]).scale(&minus_i_hbar.mul(&coeff)),
                );
            }
        }
        omega
    }
}
