//! Expression grammar and parsing context.
//!
//! ```text
//! expr     := term { ("+" | "-") term }
//! term     := unary { ("*" | "/") unary }
//! unary    := { "-" | "+" } power
//! power    := primary [ "^" exponent ]
//! exponent := [ "-" ] integer | "(" [ "-" ] integer ")"
//! primary  := integer | "i" | ident | ident "(" coord { "," coord } ")"
//!           | "d" "(" fnapp { "," coord }+ ")" | "(" expr ")"
//! ```
//!
//! `i` is the imaginary unit and `d` the derivative operator; both are
//! reserved. `d(f(...), x0, x0, x2)` denotes the second time-, first
//! x2-derivative of `f`. Opaque-function arguments must be chart
//! coordinates, listed without repetition. Unknown identifiers are declared
//! on first use (bare name: parameter; applied name: opaque function) unless
//! the context is strict, in which case they are rejected.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::Zero;

use super::{Expr, ExprError, OpaqueFn, Symbol};

/// Chart coordinate names, by chart index. The chart is fixed: four base
/// coordinates, four spinor components, four conjugate spinor components.
pub const COORD_NAMES: [&str; 12] = [
    "x0", "x1", "x2", "x3", "Psi1", "Psi2", "Psi3", "Psi4", "Psid1", "Psid2", "Psid3", "Psid4",
];

pub fn coord_name(index: u8) -> &'static str {
    COORD_NAMES[index as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentPolicy {
    /// Unknown bare identifiers become parameters, unknown applied
    /// identifiers become opaque functions.
    DeclareOnUse,
    /// Unknown identifiers are errors.
    Strict,
}

#[derive(Debug, Clone)]
enum NameEntry {
    Coord(u8),
    Const,
    Param,
}

impl NameEntry {
    fn describe(&self) -> &'static str {
        match self {
            NameEntry::Coord(_) => "a coordinate",
            NameEntry::Const => "a constant",
            NameEntry::Param => "a parameter",
        }
    }
}

/// Name resolution for parsing and symbol construction. Scalar names and
/// function names live in separate namespaces: the application syntax
/// disambiguates, which lets the on-section field functions carry the same
/// names as the field coordinates they replace.
#[derive(Debug, Clone)]
pub struct Context {
    entries: BTreeMap<Arc<str>, NameEntry>,
    funcs: BTreeMap<Arc<str>, Arc<[u8]>>,
    pub policy: IdentPolicy,
}

impl Context {
    /// The standard chart plus the physical constants `hbar`, `m`, `c`, `e`.
    pub fn standard() -> Self {
        let mut entries: BTreeMap<Arc<str>, NameEntry> = BTreeMap::new();
        for (i, name) in COORD_NAMES.iter().enumerate() {
            entries.insert((*name).into(), NameEntry::Coord(i as u8));
        }
        for name in ["hbar", "m", "c", "e"] {
            entries.insert(name.into(), NameEntry::Const);
        }
        Context { entries, funcs: BTreeMap::new(), policy: IdentPolicy::DeclareOnUse }
    }

    pub fn strict(mut self) -> Self {
        self.policy = IdentPolicy::Strict;
        self
    }

    pub fn coord_symbol(&self, index: u8) -> Symbol {
        Symbol::coordinate(index, coord_name(index))
    }

    pub fn coord_index(&self, name: &str) -> Option<u8> {
        match self.entries.get(name) {
            Some(NameEntry::Coord(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn constant(&mut self, name: &str) -> Result<Symbol, ExprError> {
        self.declare(name, NameEntry::Const)?;
        Ok(Symbol::constant(name))
    }

    pub fn parameter(&mut self, name: &str) -> Result<Symbol, ExprError> {
        self.declare(name, NameEntry::Param)?;
        Ok(Symbol::parameter(name))
    }

    pub fn function(&mut self, name: &str, args: &[u8]) -> Result<OpaqueFn, ExprError> {
        if name == "i" || name == "d" {
            return Err(ExprError::Redeclared { name: name.into(), existing: "a reserved name".into() });
        }
        match self.funcs.get(name) {
            None => {
                self.funcs.insert(name.into(), args.into());
                Ok(OpaqueFn::new(name, args))
            }
            Some(decl) if decl.as_ref() == args => Ok(OpaqueFn::new(name, args)),
            Some(_) => Err(ExprError::Redeclared {
                name: name.into(),
                existing: "a function with a different argument list".into(),
            }),
        }
    }

    fn declare(&mut self, name: &str, entry: NameEntry) -> Result<(), ExprError> {
        if name == "i" || name == "d" {
            return Err(ExprError::Redeclared { name: name.into(), existing: "a reserved name".into() });
        }
        match self.entries.get(name) {
            None => {
                self.entries.insert(name.into(), entry);
                Ok(())
            }
            Some(existing) => {
                let compatible = matches!(
                    (existing, &entry),
                    (NameEntry::Const, NameEntry::Const) | (NameEntry::Param, NameEntry::Param)
                );
                if compatible {
                    Ok(())
                } else {
                    Err(ExprError::Redeclared { name: name.into(), existing: existing.describe().into() })
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Int(n) => format!("`{n}`"),
            TokKind::Ident(s) => format!("`{s}`"),
            TokKind::Plus => "`+`".into(),
            TokKind::Minus => "`-`".into(),
            TokKind::Star => "`*`".into(),
            TokKind::Slash => "`/`".into(),
            TokKind::Caret => "`^`".into(),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Tok>, ExprError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let pos = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
            }
            b'+' => {
                toks.push(Tok { kind: TokKind::Plus, pos });
                i += 1;
            }
            b'-' => {
                toks.push(Tok { kind: TokKind::Minus, pos });
                i += 1;
            }
            b'*' => {
                toks.push(Tok { kind: TokKind::Star, pos });
                i += 1;
            }
            b'/' => {
                toks.push(Tok { kind: TokKind::Slash, pos });
                i += 1;
            }
            b'^' => {
                toks.push(Tok { kind: TokKind::Caret, pos });
                i += 1;
            }
            b'(' => {
                toks.push(Tok { kind: TokKind::LParen, pos });
                i += 1;
            }
            b')' => {
                toks.push(Tok { kind: TokKind::RParen, pos });
                i += 1;
            }
            b',' => {
                toks.push(Tok { kind: TokKind::Comma, pos });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = BigInt::parse_bytes(&bytes[start..i], 10)
                    .ok_or_else(|| ExprError::Syntax { pos, msg: "bad integer literal".into() })?;
                toks.push(Tok { kind: TokKind::Int(n), pos });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push(Tok {
                    kind: TokKind::Ident(text[start..i].to_string()),
                    pos,
                });
            }
            _ => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("unexpected character `{}`", &text[pos..pos + 1]),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    end: usize,
    ctx: &'a mut Context,
}

pub(super) fn parse_expr(text: &str, ctx: &mut Context) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), ctx };
    let e = p.sum()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(ExprError::Syntax {
            pos: t.pos,
            msg: format!("expected end of input, found {}", t.kind.describe()),
        }),
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if t.kind == kind => Ok(()),
            Some(t) => Err(ExprError::Syntax {
                pos: t.pos,
                msg: format!("expected {}, found {}", kind.describe(), t.kind.describe()),
            }),
            None => Err(ExprError::Syntax {
                pos: self.end,
                msg: format!("expected {}, found end of input", kind.describe()),
            }),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokKind::Plus) => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(TokKind::Minus) => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokKind::Star) => {
                    self.pos += 1;
                    acc = acc.mul(&self.unary()?);
                }
                Some(TokKind::Slash) => {
                    self.pos += 1;
                    acc = acc.div(&self.unary()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        let mut negate = false;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokKind::Minus) => {
                    negate = !negate;
                    self.pos += 1;
                }
                Some(TokKind::Plus) => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let e = self.power()?;
        Ok(if negate { e.neg() } else { e })
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if matches!(self.peek().map(|t| &t.kind), Some(TokKind::Caret)) {
            self.pos += 1;
            let n = self.exponent()?;
            return base.pow(n);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let parens = matches!(self.peek().map(|t| &t.kind), Some(TokKind::LParen));
        if parens {
            self.pos += 1;
        }
        let neg = matches!(self.peek().map(|t| &t.kind), Some(TokKind::Minus));
        if neg {
            self.pos += 1;
        }
        let pos = self.here();
        let n = match self.next() {
            Some(Tok { kind: TokKind::Int(n), .. }) => n,
            other => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!(
                        "expected integer exponent, found {}",
                        other.map(|t| t.kind.describe()).unwrap_or_else(|| "end of input".into())
                    ),
                })
            }
        };
        if parens {
            self.expect(TokKind::RParen)?;
        }
        let n: i32 = TryInto::<i32>::try_into(&n)
            .map_err(|_| ExprError::Syntax { pos, msg: "exponent out of range".into() })?;
        Ok(if neg { -n } else { n })
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let pos = self.here();
        match self.next() {
            Some(Tok { kind: TokKind::Int(n), .. }) => {
                Ok(Expr::from_cnum(Complex::new(BigRational::from_integer(n), BigRational::zero())))
            }
            Some(Tok { kind: TokKind::LParen, .. }) => {
                let e = self.sum()?;
                self.expect(TokKind::RParen)?;
                Ok(e)
            }
            Some(Tok { kind: TokKind::Ident(name), pos }) => match name.as_str() {
                "i" => Ok(Expr::i()),
                "d" => {
                    let f = self.derivative(pos)?;
                    Ok(Expr::func(f))
                }
                _ => self.ident(&name, pos),
            },
            Some(t) => Err(ExprError::Syntax {
                pos: t.pos,
                msg: format!("expected a value, found {}", t.kind.describe()),
            }),
            None => Err(ExprError::Syntax { pos, msg: "expected a value, found end of input".into() }),
        }
    }

    /// `d(f(args), coord {, coord})`, possibly with a nested `d` as the first
    /// argument; accumulates into one multi-index.
    fn derivative(&mut self, dpos: usize) -> Result<OpaqueFn, ExprError> {
        self.expect(TokKind::LParen)?;
        let mut f = match self.next() {
            Some(Tok { kind: TokKind::Ident(name), pos }) => {
                if name == "d" {
                    self.derivative(pos)?
                } else {
                    self.application(&name, pos)?
                }
            }
            _ => {
                return Err(ExprError::Syntax {
                    pos: dpos,
                    msg: "first argument of d(...) must be a function application".into(),
                })
            }
        };
        let mut count = 0;
        while matches!(self.peek().map(|t| &t.kind), Some(TokKind::Comma)) {
            self.pos += 1;
            let pos = self.here();
            let name = self.ident_name()?;
            let Some(ci) = self.ctx.coord_index(&name) else {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("`{name}` is not a chart coordinate"),
                });
            };
            let Some(argpos) = f.arg_pos(ci) else {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("`{}` does not depend on `{name}`", f.name),
                });
            };
            f = f.bump(argpos);
            count += 1;
        }
        if count == 0 && f.total_deriv_order() == 0 {
            return Err(ExprError::Syntax {
                pos: dpos,
                msg: "d(...) needs at least one coordinate".into(),
            });
        }
        self.expect(TokKind::RParen)?;
        Ok(f)
    }

    fn ident_name(&mut self) -> Result<String, ExprError> {
        match self.next() {
            Some(Tok { kind: TokKind::Ident(name), .. }) => Ok(name),
            Some(t) => Err(ExprError::Syntax {
                pos: t.pos,
                msg: format!("expected identifier, found {}", t.kind.describe()),
            }),
            None => Err(ExprError::Syntax {
                pos: self.end,
                msg: "expected identifier, found end of input".into(),
            }),
        }
    }

    /// `name(coord, ...)` after the name has been consumed.
    fn application(&mut self, name: &str, pos: usize) -> Result<OpaqueFn, ExprError> {
        self.expect(TokKind::LParen)?;
        let mut args: Vec<u8> = Vec::new();
        loop {
            let apos = self.here();
            let arg = self.ident_name()?;
            let Some(ci) = self.ctx.coord_index(&arg) else {
                return Err(ExprError::Syntax {
                    pos: apos,
                    msg: format!("function argument `{arg}` is not a chart coordinate"),
                });
            };
            if args.contains(&ci) {
                return Err(ExprError::Syntax {
                    pos: apos,
                    msg: format!("repeated function argument `{arg}`"),
                });
            }
            args.push(ci);
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokKind::Comma) => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        self.expect(TokKind::RParen)?;
        match self.ctx.funcs.get(name) {
            Some(decl) => {
                if decl.as_ref() != args.as_slice() {
                    return Err(ExprError::Syntax {
                        pos,
                        msg: format!("`{name}` applied with a different argument list than declared"),
                    });
                }
                Ok(OpaqueFn::new(name, &args))
            }
            None => match self.ctx.policy {
                IdentPolicy::DeclareOnUse => self.ctx.function(name, &args),
                IdentPolicy::Strict => Err(ExprError::UnknownIdent(name.into())),
            },
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<Expr, ExprError> {
        let applied = matches!(self.peek().map(|t| &t.kind), Some(TokKind::LParen));
        if applied {
            let f = self.application(name, pos)?;
            return Ok(Expr::func(f));
        }
        match self.ctx.entries.get(name) {
            Some(NameEntry::Coord(i)) => Ok(Expr::sym(self.ctx.coord_symbol(*i))),
            Some(NameEntry::Const) => Ok(Expr::sym(Symbol::constant(name))),
            Some(NameEntry::Param) => Ok(Expr::sym(Symbol::parameter(name))),
            None if self.ctx.funcs.contains_key(name) => Err(ExprError::Syntax {
                pos,
                msg: format!("function `{name}` used without arguments"),
            }),
            None => match self.ctx.policy {
                IdentPolicy::DeclareOnUse => {
                    self.ctx.parameter(name)?;
                    Ok(Expr::sym(Symbol::parameter(name)))
                }
                IdentPolicy::Strict => Err(ExprError::UnknownIdent(name.into())),
            },
        }
    }
}
