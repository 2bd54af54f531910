//! A textual string-diagram language: parse, typecheck (regions are
//! algebras, wires are bimodules), and evaluate to concrete linear maps.
//!
//! Terms are algebraic, not geometric: `;` is vertical composition in
//! matrix order (`a ; b` evaluates to `a ∘ b`, so the bottom of the diagram
//! is the source and text reads top line first), `|` is horizontal
//! composition by Connes fusion, `id(...)` is an identity wire bundle, and
//! bare names are generators bound in an environment. Isotopy is not
//! implemented; each diagrammatic identity is checked as evaluated equality
//! of two terms. Unitors and associators are inserted by the checker and
//! recorded, never silently.
//!
//! One-sided boxes may appear in a horizontal composite only on their
//! linear side, unless the adjacent region is the trivial algebra — a
//! vector box next to a vector box over a nontrivial middle algebra is a
//! type error.

use crate::algebra::Algebra;
use crate::bimodule::{
    associator, fused_canonical, left_unitor, promote_left_linear, promote_right_linear,
    right_unitor, BimoduleError, Bimodule, Linearity,
};
use crate::numerics::{adjoint, frob, CMat};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Bimodule(#[from] BimoduleError),
}

pub type DiagResult<T> = Result<T, DiagramError>;

/// Source position of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

/// Abstract syntax of diagram terms.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `id(w1 | w2 | …)` or `id(A)` for an empty wire bundle at an algebra.
    Id(Vec<String>, Span),
    /// A generator bound in the environment.
    Gen(String, Span),
    /// `a ; b`: vertical composition, `a` after `b`.
    VComp(Box<Term>, Box<Term>),
    /// `a | b`: horizontal composition (fusion), `a` on the left.
    HComp(Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Semi,
    Pipe,
    LParen,
    RParen,
}

fn lex(text: &str) -> DiagResult<Vec<(Tok, Span)>> {
    let mut out = vec![];
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '#' => {
                // Comment to end of line.
                while let Some(&c2) = chars.peek() {
                    if c2 == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            ';' => {
                chars.next();
                col += 1;
                out.push((Tok::Semi, span));
            }
            '|' => {
                chars.next();
                col += 1;
                out.push((Tok::Pipe, span));
            }
            '(' => {
                chars.next();
                col += 1;
                out.push((Tok::LParen, span));
            }
            ')' => {
                chars.next();
                col += 1;
                out.push((Tok::RParen, span));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&c2) = chars.peek() {
                    if c2.is_alphanumeric() || c2 == '_' {
                        name.push(c2);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                while let Some(&'*') = chars.peek() {
                    name.push('*');
                    chars.next();
                    col += 1;
                }
                out.push((Tok::Ident(name), span));
            }
            other => {
                return Err(DiagramError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, Span)> {
        self.toks.get(self.pos)
    }

    fn end_span(&self) -> Span {
        self.toks.last().map(|&(_, s)| s).unwrap_or(Span { line: 1, col: 1 })
    }

    fn bump(&mut self) -> Option<(Tok, Span)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> DiagResult<Span> {
        match self.bump() {
            Some((t, s)) if t == tok => Ok(s),
            Some((t, s)) => Err(DiagramError::Syntax {
                line: s.line,
                col: s.col,
                msg: format!("expected {what}, found {t:?}"),
            }),
            None => {
                let s = self.end_span();
                Err(DiagramError::Syntax {
                    line: s.line,
                    col: s.col + 1,
                    msg: format!("expected {what}, found end of input"),
                })
            }
        }
    }

    // term := hterm (';' hterm)*
    fn term(&mut self) -> DiagResult<Term> {
        let mut acc = self.hterm()?;
        while matches!(self.peek(), Some((Tok::Semi, _))) {
            self.bump();
            let rhs = self.hterm()?;
            acc = Term::VComp(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    // hterm := atom ('|' atom)*
    fn hterm(&mut self) -> DiagResult<Term> {
        let mut acc = self.atom()?;
        while matches!(self.peek(), Some((Tok::Pipe, _))) {
            self.bump();
            let rhs = self.atom()?;
            acc = Term::HComp(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn atom(&mut self) -> DiagResult<Term> {
        match self.bump() {
            Some((Tok::Ident(name), span)) if name == "id" => {
                self.expect(Tok::LParen, "`(` after id")?;
                let mut names = vec![];
                loop {
                    match self.bump() {
                        Some((Tok::Ident(n), _)) => names.push(n),
                        Some((t, s)) => {
                            return Err(DiagramError::Syntax {
                                line: s.line,
                                col: s.col,
                                msg: format!("expected a name inside id(...), found {t:?}"),
                            })
                        }
                        None => {
                            let s = self.end_span();
                            return Err(DiagramError::Syntax {
                                line: s.line,
                                col: s.col + 1,
                                msg: "unterminated id(...)".into(),
                            });
                        }
                    }
                    match self.bump() {
                        Some((Tok::Pipe, _)) => continue,
                        Some((Tok::RParen, _)) => break,
                        Some((t, s)) => {
                            return Err(DiagramError::Syntax {
                                line: s.line,
                                col: s.col,
                                msg: format!("expected `|` or `)` in id(...), found {t:?}"),
                            })
                        }
                        None => {
                            let s = self.end_span();
                            return Err(DiagramError::Syntax {
                                line: s.line,
                                col: s.col + 1,
                                msg: "unterminated id(...)".into(),
                            });
                        }
                    }
                }
                Ok(Term::Id(names, span))
            }
            Some((Tok::Ident(name), span)) => Ok(Term::Gen(name, span)),
            Some((Tok::LParen, _)) => {
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some((t, s)) => Err(DiagramError::Syntax {
                line: s.line,
                col: s.col,
                msg: format!("expected a term, found {t:?}"),
            }),
            None => {
                let s = self.end_span();
                Err(DiagramError::Syntax {
                    line: s.line,
                    col: s.col + 1,
                    msg: "expected a term, found end of input".into(),
                })
            }
        }
    }
}

/// Parse diagram text into a term.
pub fn parse(text: &str) -> DiagResult<Term> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(DiagramError::Syntax { line: 1, col: 1, msg: "empty diagram".into() });
    }
    let mut p = Parser { toks, pos: 0 };
    let t = p.term()?;
    if let Some((tok, s)) = p.peek() {
        return Err(DiagramError::Syntax {
            line: s.line,
            col: s.col,
            msg: format!("trailing input: {tok:?}"),
        });
    }
    Ok(t)
}

/// A typed wire bundle: a left endpoint algebra and a list of wires with
/// matching inner algebras. The empty bundle at `A` realizes to `L²A`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagObject {
    pub left: Algebra,
    pub wires: Vec<Bimodule>,
}

impl DiagObject {
    pub fn empty(a: &Algebra) -> Self {
        DiagObject { left: a.clone(), wires: vec![] }
    }

    pub fn wire(h: &Bimodule) -> Self {
        DiagObject { left: h.left().clone(), wires: vec![h.clone()] }
    }

    pub fn right(&self) -> &Algebra {
        self.wires.last().map(|w| w.right()).unwrap_or(&self.left)
    }

    pub fn validate(&self) -> DiagResult<()> {
        let mut cur = &self.left;
        for w in &self.wires {
            if w.left() != cur {
                return Err(DiagramError::Type(format!(
                    "wire algebras do not chain: expected left {:?}, found {:?}",
                    cur.block_sizes(),
                    w.left().block_sizes()
                )));
            }
            cur = w.right();
        }
        Ok(())
    }

    /// Left-associated canonical realization.
    pub fn realized(&self) -> DiagResult<Bimodule> {
        match self.wires.split_first() {
            None => Ok(Bimodule::l2(&self.left)),
            Some((first, rest)) => {
                let mut acc = first.clone();
                for w in rest {
                    acc = fused_canonical(&acc, w)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn concat(&self, other: &DiagObject) -> DiagResult<DiagObject> {
        if self.right() != &other.left {
            return Err(DiagramError::Type(
                "horizontal junction algebras do not match".into(),
            ));
        }
        let mut wires = self.wires.clone();
        wires.extend(other.wires.iter().cloned());
        Ok(DiagObject { left: self.left.clone(), wires })
    }
}

/// The coherence unitary `fused(real(a), real(b)) → real(a ++ b)` built
/// from unitors and associators.
fn reassoc(a: &DiagObject, b: &DiagObject) -> DiagResult<CMat> {
    let ra = a.realized()?;
    if b.wires.is_empty() {
        // fused(real(a), L²M) → real(a): the right unitor.
        return Ok(right_unitor(&ra)?);
    }
    if a.wires.is_empty() {
        return Ok(left_unitor(&b.realized()?)?);
    }
    if b.wires.len() == 1 {
        // real(a ++ [w]) = fused(real(a), w) by definition.
        let dim = fused_canonical(&ra, &b.wires[0])?.dim();
        return Ok(crate::numerics::eye(dim));
    }
    let mut bp = b.clone();
    let last = bp.wires.pop().unwrap();
    let rbp = bp.realized()?;
    let step1 = adjoint(&associator(&ra, &rbp, &last)?);
    let inner = reassoc(a, &bp)?;
    let merged = a.concat(&bp)?;
    let step2 = promote_right_linear(&inner, &fused_canonical(&ra, &rbp)?, &merged.realized()?, &last)?;
    Ok(step2.dot(&step1))
}

/// A generator binding: a matrix between realized wire bundles with its
/// declared linearity.
#[derive(Debug, Clone)]
pub struct Binding {
    pub source: DiagObject,
    pub target: DiagObject,
    pub linearity: Linearity,
    pub matrix: CMat,
}

/// Named algebras, wires, and generator bindings. Looking up `name*`
/// falls back to the adjoint of `name`.
#[derive(Debug, Default)]
pub struct Environment {
    algebras: BTreeMap<String, Algebra>,
    bimodules: BTreeMap<String, Bimodule>,
    bindings: BTreeMap<String, Binding>,
}

impl Environment {
    pub fn new() -> Self {
        Environment::default()
    }

    pub fn add_algebra(&mut self, name: &str, a: Algebra) {
        self.algebras.insert(name.to_string(), a);
    }

    pub fn add_bimodule(&mut self, name: &str, h: Bimodule) {
        self.bimodules.insert(name.to_string(), h);
    }

    pub fn algebra(&self, name: &str) -> Option<&Algebra> {
        self.algebras.get(name)
    }

    pub fn bimodule(&self, name: &str) -> Option<&Bimodule> {
        self.bimodules.get(name)
    }

    pub fn add_binding(&mut self, name: &str, binding: Binding) -> DiagResult<()> {
        binding.source.validate()?;
        binding.target.validate()?;
        let sdim = binding.source.realized()?.dim();
        let tdim = binding.target.realized()?.dim();
        if binding.matrix.dim() != (tdim, sdim) {
            return Err(DiagramError::Type(format!(
                "binding `{name}` should be {tdim}x{sdim}, got {:?}",
                binding.matrix.dim()
            )));
        }
        self.bindings.insert(name.to_string(), binding);
        Ok(())
    }

    fn lookup(&self, name: &str) -> DiagResult<Binding> {
        if let Some(b) = self.bindings.get(name) {
            return Ok(b.clone());
        }
        if let Some(base) = name.strip_suffix('*') {
            let inner = self.lookup(base)?;
            return Ok(Binding {
                source: inner.target,
                target: inner.source,
                linearity: inner.linearity,
                matrix: adjoint(&inner.matrix),
            });
        }
        Err(DiagramError::Unbound(name.to_string()))
    }
}

/// The synthesized type of a term: boundary objects, linearity pair, and
/// the coherence insertions the checker performed.
#[derive(Debug, Clone)]
pub struct TypedTerm {
    pub source: DiagObject,
    pub target: DiagObject,
    pub left_linear: bool,
    pub right_linear: bool,
    pub coercions: Vec<String>,
}

/// Typecheck a term against an environment.
pub fn typecheck(term: &Term, env: &Environment) -> DiagResult<TypedTerm> {
    match term {
        Term::Id(names, span) => {
            if names.len() == 1 {
                if let Some(a) = env.algebra(&names[0]) {
                    let obj = DiagObject::empty(a);
                    return Ok(TypedTerm {
                        source: obj.clone(),
                        target: obj,
                        left_linear: true,
                        right_linear: true,
                        coercions: vec![],
                    });
                }
            }
            let mut wires = vec![];
            for n in names {
                let w = env.bimodule(n).ok_or_else(|| {
                    DiagramError::Type(format!(
                        "`{n}` at {}:{} is not a bimodule name",
                        span.line, span.col
                    ))
                })?;
                wires.push(w.clone());
            }
            let obj = DiagObject { left: wires[0].left().clone(), wires };
            obj.validate()?;
            Ok(TypedTerm {
                source: obj.clone(),
                target: obj,
                left_linear: true,
                right_linear: true,
                coercions: vec![],
            })
        }
        Term::Gen(name, _) => {
            let b = env.lookup(name)?;
            Ok(TypedTerm {
                source: b.source,
                target: b.target,
                left_linear: b.linearity.left_linear(),
                right_linear: b.linearity.right_linear(),
                coercions: vec![],
            })
        }
        Term::VComp(a, b) => {
            let ta = typecheck(a, env)?;
            let tb = typecheck(b, env)?;
            if ta.source != tb.target {
                return Err(DiagramError::Type(format!(
                    "vertical composition: source {:?} does not match target {:?}",
                    describe(&ta.source),
                    describe(&tb.target)
                )));
            }
            let mut coercions = tb.coercions;
            coercions.extend(ta.coercions);
            Ok(TypedTerm {
                source: tb.source,
                target: ta.target,
                left_linear: ta.left_linear && tb.left_linear,
                right_linear: ta.right_linear && tb.right_linear,
                coercions,
            })
        }
        Term::HComp(a, b) => {
            let ta = typecheck(a, env)?;
            let tb = typecheck(b, env)?;
            if ta.source.right() != ta.target.right() {
                return Err(DiagramError::Type(
                    "left factor of a horizontal composite changes its right endpoint".into(),
                ));
            }
            if tb.source.left != tb.target.left {
                return Err(DiagramError::Type(
                    "right factor of a horizontal composite changes its left endpoint".into(),
                ));
            }
            let junction = ta.source.right().clone();
            if tb.source.left != junction {
                return Err(DiagramError::Type(format!(
                    "horizontal composition across mismatched middle algebras {:?} vs {:?}",
                    junction.block_sizes(),
                    tb.source.left.block_sizes()
                )));
            }
            if !ta.right_linear && !junction.is_trivial() {
                return Err(DiagramError::Type(
                    "left factor is not right-linear and the middle algebra is not trivial"
                        .into(),
                ));
            }
            if !tb.left_linear && !junction.is_trivial() {
                return Err(DiagramError::Type(
                    "right factor is not left-linear and the middle algebra is not trivial"
                        .into(),
                ));
            }
            let source = ta.source.concat(&tb.source)?;
            let target = ta.target.concat(&tb.target)?;
            let mut coercions = ta.coercions;
            coercions.extend(tb.coercions);
            coercions.push(format!(
                "unitors/associators inserted at junction over {:?}",
                junction.block_sizes()
            ));
            Ok(TypedTerm {
                source,
                target,
                left_linear: ta.left_linear,
                right_linear: tb.right_linear,
                coercions,
            })
        }
    }
}

fn describe(obj: &DiagObject) -> String {
    if obj.wires.is_empty() {
        format!("empty@{:?}", obj.left.block_sizes())
    } else {
        format!(
            "[{} wires, dims {:?}]",
            obj.wires.len(),
            obj.wires.iter().map(|w| w.dim()).collect::<Vec<_>>()
        )
    }
}

/// Evaluate a typechecked term to a matrix between the realized boundary
/// spaces.
pub fn evaluate(term: &Term, env: &Environment) -> DiagResult<(CMat, TypedTerm)> {
    let typed = typecheck(term, env)?;
    let matrix = eval_inner(term, env)?;
    let sdim = typed.source.realized()?.dim();
    let tdim = typed.target.realized()?.dim();
    if matrix.dim() != (tdim, sdim) {
        return Err(DiagramError::Evaluation(format!(
            "internal dimension mismatch: expected {tdim}x{sdim}, produced {:?}",
            matrix.dim()
        )));
    }
    Ok((matrix, typed))
}

fn eval_inner(term: &Term, env: &Environment) -> DiagResult<CMat> {
    match term {
        Term::Id(_, _) => {
            let typed = typecheck(term, env)?;
            Ok(crate::numerics::eye(typed.source.realized()?.dim()))
        }
        Term::Gen(name, _) => Ok(env.lookup(name)?.matrix),
        Term::VComp(a, b) => {
            let ma = eval_inner(a, env)?;
            let mb = eval_inner(b, env)?;
            if ma.dim().1 != mb.dim().0 {
                return Err(DiagramError::Evaluation(
                    "vertical composition dimension mismatch".into(),
                ));
            }
            Ok(ma.dot(&mb))
        }
        Term::HComp(a, b) => {
            let ta = typecheck(a, env)?;
            let tb = typecheck(b, env)?;
            let ma = eval_inner(a, env)?;
            let mb = eval_inner(b, env)?;
            let ra_src = ta.source.realized()?;
            let ra_tgt = ta.target.realized()?;
            let rb_src = tb.source.realized()?;
            let rb_tgt = tb.target.realized()?;
            // (M_a ⊠ 1) ∘ (1 ⊠ M_b) with the coherence unitaries re-packing
            // the concatenated realizations on both ends.
            let step1 = promote_left_linear(&mb, &rb_src, &rb_tgt, &ra_src)?;
            let step2 = promote_right_linear(&ma, &ra_src, &ra_tgt, &rb_tgt)?;
            let pack_src = reassoc(&ta.source, &tb.source)?;
            let pack_tgt = reassoc(&ta.target, &tb.target)?;
            Ok(pack_tgt.dot(&step2).dot(&step1).dot(&adjoint(&pack_src)))
        }
    }
}

/// Evaluate and compare against the identity on the (equal) boundary.
pub fn assert_identity(term: &Term, env: &Environment, tol: f64) -> DiagResult<f64> {
    let (m, typed) = evaluate(term, env)?;
    if typed.source != typed.target {
        return Err(DiagramError::Type(
            "assert-identity needs equal source and target".into(),
        ));
    }
    let dim = typed.source.realized()?.dim();
    let resid = frob(&(&m - &crate::numerics::eye(dim))) / (1.0 + (dim as f64).sqrt());
    if resid > tol {
        return Err(DiagramError::Evaluation(format!(
            "term is not the identity (residual {resid:.3e})"
        )));
    }
    Ok(resid)
}
