//! Differential forms on the fixed 12-coordinate chart.
//!
//! The chart has four base coordinates `x0..x3`, four spinor components
//! `Psi1..Psi4` (indices 4..7), and four conjugate components
//! `Psid1..Psid4` (indices 8..11). A [`Form`] of degree `d` is a map from
//! strictly increasing index tuples of length `d` to nonzero [`Expr`]
//! coefficients, so equality of forms is structural. Sections pull forms
//! back to the base by replacing field coordinates with opaque functions of
//! `x0..x3` and field differentials with their chain-rule expansions.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{parse::coord_name, Atom, Expr, OpaqueFn, Symbol};

/// Number of chart coordinates.
pub const DIM: u8 = 12;

/// The fixed chart; carries only index conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Chart;

impl Chart {
    pub fn standard() -> Self {
        Chart
    }

    pub fn coord_symbol(&self, index: u8) -> Symbol {
        assert!(index < DIM, "chart index out of range");
        Symbol::coordinate(index, coord_name(index))
    }

    /// Chart index of the spinor component `Psi{a}`, `a` in `1..=4`.
    pub fn psi(&self, a: usize) -> u8 {
        assert!((1..=4).contains(&a), "spinor component out of range");
        3 + a as u8
    }

    /// Chart index of the conjugate component `Psid{a}`, `a` in `1..=4`.
    pub fn psid(&self, a: usize) -> u8 {
        assert!((1..=4).contains(&a), "spinor component out of range");
        7 + a as u8
    }

    pub fn psi_symbol(&self, a: usize) -> Symbol {
        self.coord_symbol(self.psi(a))
    }

    pub fn psid_symbol(&self, a: usize) -> Symbol {
        self.coord_symbol(self.psid(a))
    }

    pub fn is_base(&self, index: u8) -> bool {
        index < 4
    }
}

/// Resolver closure for [`Expr::substitute`] over this chart.
pub fn coord_resolver() -> impl Fn(u8) -> Symbol {
    |i| Chart.coord_symbol(i)
}

/// Merge two strictly increasing tuples; `None` on a shared index, else the
/// merged tuple and whether the permutation is odd.
fn merge_indices(a: &[u8], b: &[u8]) -> Option<(Vec<u8>, bool)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut swaps = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                // b[j] crosses the remaining elements of a.
                swaps += a.len() - i;
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => return None,
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some((out, swaps % 2 == 1))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Form {
    degree: u8,
    terms: BTreeMap<Vec<u8>, Expr>,
}

impl Form {
    pub fn zero(degree: u8) -> Self {
        Form { degree, terms: BTreeMap::new() }
    }

    /// Degree-0 form.
    pub fn scalar(coeff: Expr) -> Self {
        let mut f = Form::zero(0);
        f.add_term(Vec::new(), coeff);
        f
    }

    /// The basis 1-form `d xi^index`.
    pub fn basis(index: u8) -> Self {
        assert!(index < DIM, "chart index out of range");
        let mut f = Form::zero(1);
        f.add_term(vec![index], Expr::one());
        f
    }

    /// `coeff * d xi^{i1} ^ ... ^ d xi^{ik}` with indices in any order;
    /// duplicate indices give the zero form.
    pub fn from_wedge(coeff: Expr, indices: &[u8]) -> Self {
        let mut f = Form::zero(indices.len() as u8);
        let mut sorted: Vec<u8> = indices.to_vec();
        // Parity of the sort, by counting inversions.
        let mut odd = false;
        for i in 0..sorted.len() {
            for j in i + 1..sorted.len() {
                match sorted[i].cmp(&sorted[j]) {
                    std::cmp::Ordering::Equal => return f,
                    std::cmp::Ordering::Greater => odd = !odd,
                    std::cmp::Ordering::Less => {}
                }
            }
        }
        sorted.sort_unstable();
        f.add_term(sorted, if odd { coeff.neg() } else { coeff });
        f
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &Expr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, indices: &[u8]) -> Expr {
        self.terms.get(indices).cloned().unwrap_or_else(Expr::zero)
    }

    fn add_term(&mut self, key: Vec<u8>, coeff: Expr) {
        debug_assert_eq!(key.len(), self.degree as usize);
        debug_assert!(key.windows(2).all(|w| w[0] < w[1]), "unsorted index tuple");
        if coeff.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(v) => {
                v.insert(coeff);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().add(&coeff);
                if sum.is_zero() {
                    o.remove();
                } else {
                    o.insert(sum);
                }
            }
        }
    }

    /// Panics if degrees differ.
    pub fn add(&self, rhs: &Form) -> Form {
        assert_eq!(self.degree, rhs.degree, "degree mismatch in form addition");
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Form {
        let mut out = Form::zero(self.degree);
        for (k, c) in &self.terms {
            out.terms.insert(k.clone(), c.neg());
        }
        out
    }

    pub fn sub(&self, rhs: &Form) -> Form {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, c: &Expr) -> Form {
        let mut out = Form::zero(self.degree);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.mul(c));
        }
        out
    }

    pub fn wedge(&self, rhs: &Form) -> Form {
        let mut out = Form::zero(self.degree + rhs.degree);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                if let Some((key, odd)) = merge_indices(ka, kb) {
                    let c = ca.mul(cb);
                    out.add_term(key, if odd { c.neg() } else { c });
                }
            }
        }
        out
    }

    /// Exterior derivative: antiderivation with `d(f) = sum_k (df/dxi^k) dxi^k`
    /// and `d(d xi^k) = 0`; nilpotent.
    pub fn exterior_derivative(&self) -> Form {
        let chart = Chart;
        let mut out = Form::zero(self.degree + 1);
        for (key, coeff) in &self.terms {
            for k in 0..DIM {
                if key.contains(&k) {
                    continue;
                }
                let dc = coeff.differentiate(&chart.coord_symbol(k));
                if dc.is_zero() {
                    continue;
                }
                // d xi^k moves past the indices smaller than k.
                let pos = key.iter().take_while(|&&i| i < k).count();
                let mut tuple = key.clone();
                tuple.insert(pos, k);
                out.add_term(tuple, if pos % 2 == 1 { dc.neg() } else { dc });
            }
        }
        out
    }

    /// Interior product with a vector field: contracts each slot `r`
    /// (0-based) with sign `(-1)^r`. The interior product of a 0-form is 0.
    pub fn interior_product(&self, x: &VectorField) -> Form {
        if self.degree == 0 {
            return Form::zero(0);
        }
        let mut out = Form::zero(self.degree - 1);
        for (key, coeff) in &self.terms {
            for (r, &idx) in key.iter().enumerate() {
                let comp = x.component(idx);
                if comp.is_zero() {
                    continue;
                }
                let c = coeff.mul(comp);
                let mut tuple = key.clone();
                tuple.remove(r);
                out.add_term(tuple, if r % 2 == 1 { c.neg() } else { c });
            }
        }
        out
    }

    /// Lie derivative by the Cartan formula `L_Y = i_Y d + d i_Y`.
    pub fn lie_derivative(&self, y: &VectorField) -> Form {
        let a = self.exterior_derivative().interior_product(y);
        let b = self.interior_product(y).exterior_derivative();
        a.add(&b)
    }

    /// Pullback along a section: field coordinates become opaque functions of
    /// the base coordinates, field differentials expand by the chain rule,
    /// and base monomials of degree above four collapse to zero.
    pub fn pullback(&self, section: &Section) -> Form {
        let rules = section.symbol_rules();
        let resolver = coord_resolver();
        let mut out = Form::zero(self.degree);
        for (key, coeff) in &self.terms {
            let c = coeff
                .substitute(&rules, &resolver)
                .expect("section substitution rules are disjoint and acyclic");
            let mut acc = Form::scalar(c);
            for &idx in key {
                let one_form = if Chart.is_base(idx) {
                    Form::basis(idx)
                } else {
                    section.differential(idx)
                };
                acc = acc.wedge(&one_form);
                if acc.is_zero() {
                    break;
                }
            }
            if acc.is_zero() {
                continue;
            }
            for (k, c) in acc.terms {
                out.add_term(k, c);
            }
        }
        out
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (key, coeff)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let basis: Vec<String> = key.iter().map(|&k| format!("d{}", coord_name(k))).collect();
            let basis = basis.join("^");
            if key.is_empty() {
                write!(f, "{coeff}")?;
            } else if *coeff == Expr::one() {
                f.write_str(&basis)?;
            } else {
                write!(f, "({coeff})*{basis}")?;
            }
        }
        Ok(())
    }
}

/// Vector field on the chart: one expression per coordinate direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorField {
    comps: Vec<Expr>,
}

impl VectorField {
    pub fn zero() -> Self {
        VectorField { comps: vec![Expr::zero(); DIM as usize] }
    }

    /// The coordinate vector field along `index`.
    pub fn unit(index: u8) -> Self {
        let mut v = VectorField::zero();
        v.comps[index as usize] = Expr::one();
        v
    }

    pub fn with_component(mut self, index: u8, e: Expr) -> Self {
        self.comps[index as usize] = e;
        self
    }

    pub fn component(&self, index: u8) -> &Expr {
        &self.comps[index as usize]
    }

    pub fn add(&self, rhs: &VectorField) -> VectorField {
        let mut out = VectorField::zero();
        for i in 0..DIM as usize {
            out.comps[i] = self.comps[i].add(&rhs.comps[i]);
        }
        out
    }

    pub fn scale(&self, c: &Expr) -> VectorField {
        let mut out = VectorField::zero();
        for i in 0..DIM as usize {
            out.comps[i] = self.comps[i].mul(c);
        }
        out
    }
}

/// Assignment of on-section opaque functions to the eight field coordinates.
#[derive(Debug, Clone)]
pub struct Section {
    assign: BTreeMap<u8, OpaqueFn>,
}

impl Section {
    /// `Psi{a} -> Psi{a}(x0..x3)`, `Psid{a} -> Psid{a}(x0..x3)`.
    pub fn standard() -> Self {
        let mut assign = BTreeMap::new();
        for idx in 4..DIM {
            assign.insert(idx, OpaqueFn::new(coord_name(idx), &[0, 1, 2, 3]));
        }
        Section { assign }
    }

    pub fn field_fn(&self, index: u8) -> &OpaqueFn {
        self.assign.get(&index).expect("field index out of range")
    }

    /// Substitution rules sending field coordinate symbols to their
    /// on-section functions.
    pub fn symbol_rules(&self) -> Vec<(Atom, Expr)> {
        self.assign
            .iter()
            .map(|(&idx, f)| {
                (Atom::Sym(Chart.coord_symbol(idx)), Expr::func(f.clone()))
            })
            .collect()
    }

    /// `s*(d xi^index)` for a field coordinate: the chain-rule 1-form
    /// `sum_mu (d f/d x_mu) dx^mu`.
    pub fn differential(&self, index: u8) -> Form {
        let f = self.field_fn(index);
        let mut out = Form::zero(1);
        for mu in 0..4u8 {
            let pos = f.arg_pos(mu).expect("on-section functions take all base coordinates");
            out.add_term(vec![mu], Expr::func(f.bump(pos)));
        }
        out
    }
}
