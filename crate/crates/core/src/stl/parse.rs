//! Text syntax for formulas.
//!
//! ```text
//! formula   := or ( '->' formula )?
//! or        := and ( 'or' and )*
//! and       := until ( 'and' until )*
//! until     := unary ( 'until' interval unary )*
//! unary     := 'not' unary | 'always' interval unary | 'eventually' interval unary | atom
//! atom      := '(' formula ')' | var 'in' '[' num ',' num ']' | linear cmp num
//! linear    := term ( ('+' | '-') term )*
//! term      := [sign] [num '*'] var
//! cmp       := '<=' | '<' | '>=' | '>'
//! ```
//!
//! Variables are `x1 .. xN` (1-based plant coordinates) or aliases declared
//! by the model. Strict and non-strict comparisons monitor identically.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Formula, Interval, PredicateKind};
use crate::error::{Error, Result};

/// Names a formula may reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Variables {
    /// Number of plant coordinates visible to specifications.
    pub dims: usize,
    /// Extra names mapped to 0-based plant coordinates.
    pub aliases: Vec<(String, usize)>,
}

impl Variables {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            aliases: Vec::new(),
        }
    }

    pub fn with_alias(mut self, name: &str, index: usize) -> Self {
        self.aliases.push((name.to_string(), index));
        self
    }

    pub fn resolve(&self, name: &str) -> Option<usize> {
        if let Some((_, i)) = self.aliases.iter().find(|(n, _)| n == name) {
            return Some(*i);
        }
        let idx: usize = name.strip_prefix('x')?.parse().ok()?;
        (1..=self.dims).contains(&idx).then(|| idx - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Le,
    Lt,
    Ge,
    Gt,
    Arrow,
    Plus,
    Minus,
    Star,
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let push = |out: &mut Vec<Spanned>, tok| {
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            })
        };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let two = chars.get(i + 1).copied();
        let (tok, width) = match (c, two) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            (',', _) => (Tok::Comma, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                let mut j = i;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+')
                        && j > start
                        && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..j].iter().collect();
                let v: f64 = s.parse().map_err(|_| Error::Syntax {
                    line,
                    column: col,
                    message: format!("invalid number `{s}`"),
                })?;
                (Tok::Num(v), j - start)
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                (Tok::Ident(chars[start..j].iter().collect()), j - start)
            }
            _ => {
                return Err(Error::Syntax {
                    line,
                    column: col,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        push(&mut out, tok);
        i += width;
        col += width;
    }
    out.push(Spanned {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    vars: &'a Variables,
}

const KEYWORDS: [&str; 7] = ["not", "and", "or", "always", "eventually", "until", "in"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let s = &self.toks[self.pos];
        Err(Error::Syntax {
            line: s.line,
            column: s.column,
            message: message.into(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut f = self.and()?;
        while self.is_kw("or") {
            self.bump();
            f = f.or(self.and()?);
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut f = self.until()?;
        while self.is_kw("and") {
            self.bump();
            f = f.and(self.until()?);
        }
        Ok(f)
    }

    fn until(&mut self) -> Result<Formula> {
        let mut f = self.unary()?;
        while self.is_kw("until") {
            self.bump();
            let iv = self.interval()?;
            f = Formula::until(iv, f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.is_kw("not") {
            self.bump();
            return Ok(self.unary()?.negate());
        }
        if self.is_kw("always") {
            self.bump();
            let iv = self.interval()?;
            return Ok(Formula::always(iv, self.unary()?));
        }
        if self.is_kw("eventually") {
            self.bump();
            let iv = self.interval()?;
            return Ok(Formula::eventually(iv, self.unary()?));
        }
        self.atom()
    }

    fn number(&mut self) -> Result<f64> {
        let neg = match self.peek() {
            Tok::Minus => {
                self.bump();
                true
            }
            Tok::Plus => {
                self.bump();
                false
            }
            _ => false,
        };
        match self.bump() {
            Tok::Num(v) => Ok(if neg { -v } else { v }),
            _ => {
                self.pos -= 1;
                self.err("expected number")
            }
        }
    }

    fn interval(&mut self) -> Result<Interval> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.number()?;
        self.expect(Tok::RBracket, "`]`")?;
        match Interval::new(lo, hi) {
            Some(iv) => Ok(iv),
            None => self.err(format!("interval [{lo}, {hi}] must satisfy 0 <= lo <= hi")),
        }
    }

    fn variable(&mut self) -> Result<usize> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let idx = self
                    .vars
                    .resolve(&name)
                    .ok_or(Error::UnknownCoordinate(name))?;
                self.bump();
                Ok(idx)
            }
            _ => self.err("expected state variable"),
        }
    }

    /// `[sign] [num '*'] var`, returning (coefficient, index).
    fn term(&mut self, sign: f64) -> Result<(f64, usize)> {
        let mut coef = sign;
        if *self.peek() == Tok::Minus {
            self.bump();
            coef = -coef;
        }
        if let Tok::Num(v) = *self.peek() {
            self.bump();
            self.expect(Tok::Star, "`*`")?;
            coef *= v;
        }
        Ok((coef, self.variable()?))
    }

    fn atom(&mut self) -> Result<Formula> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(f);
        }
        let mut terms = vec![self.term(1.0)?];
        if self.is_kw("in") && terms[0].0 == 1.0 {
            self.bump();
            self.expect(Tok::LBracket, "`[`")?;
            let lo = self.number()?;
            self.expect(Tok::Comma, "`,`")?;
            let hi = self.number()?;
            self.expect(Tok::RBracket, "`]`")?;
            if lo > hi {
                return self.err(format!("empty interval [{lo}, {hi}]"));
            }
            return Ok(Formula::pred(PredicateKind::Within {
                index: terms[0].1,
                lo,
                hi,
            }));
        }
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    terms.push(self.term(1.0)?);
                }
                Tok::Minus => {
                    self.bump();
                    terms.push(self.term(-1.0)?);
                }
                _ => break,
            }
        }
        let upper = match self.bump() {
            Tok::Le | Tok::Lt => true,
            Tok::Ge | Tok::Gt => false,
            _ => {
                self.pos -= 1;
                return self.err("expected comparison operator");
            }
        };
        let bound = self.number()?;
        let kind = match terms.as_slice() {
            [(c, index)] if *c == 1.0 || *c == -1.0 => {
                let (index, flip) = (*index, *c < 0.0);
                let b = if flip { -bound } else { bound };
                if upper != flip {
                    PredicateKind::Upper { index, bound: b }
                } else {
                    PredicateKind::Lower { index, bound: b }
                }
            }
            _ => {
                let n = terms.iter().map(|t| t.1 + 1).max().unwrap_or(0);
                let mut coeffs = vec![0.0; n];
                for (c, i) in &terms {
                    coeffs[*i] += c;
                }
                if coeffs.iter().all(|c| *c == 0.0) {
                    return self.err("linear predicate has all-zero coefficients");
                }
                if upper {
                    PredicateKind::Halfspace { coeffs, bound }
                } else {
                    PredicateKind::Halfspace {
                        coeffs: coeffs.iter().map(|c| -c).collect(),
                        bound: -bound,
                    }
                }
            }
        };
        Ok(Formula::pred(kind))
    }
}

/// Parses `text` into a formula in negation normal form.
pub fn parse_formula(text: &str, vars: &Variables) -> Result<Formula> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        vars,
    };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;
    use crate::stl::Predicate;

    fn vars() -> Variables {
        Variables::new(2).with_alias("p", 0)
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn pred(kind: PredicateKind) -> Box<Formula> {
        Box::new(Formula::Pred(Predicate::new(kind)))
    }

    #[test]
    fn condenser_spec() {
        let f = parse_formula("always[30,35] (p in [87, 87.5])", &vars()).unwrap();
        assert_eq!(
            f,
            Formula::Always(
                iv(30.0, 35.0),
                pred(PredicateKind::Within {
                    index: 0,
                    lo: 87.0,
                    hi: 87.5
                })
            )
        );
    }

    #[test]
    fn negated_eventually_is_always() {
        let f = parse_formula("not (eventually[0,1] (x1 > 0))", &vars()).unwrap();
        assert_eq!(
            f,
            Formula::Always(
                iv(0.0, 1.0),
                pred(PredicateKind::Upper {
                    index: 0,
                    bound: 0.0
                })
            )
        );
    }

    #[test]
    fn implication_rewritten() {
        let f = parse_formula(
            "always[0,10] ((x1 < 0) -> eventually[0,7] (x1 < 0.1))",
            &vars(),
        )
        .unwrap();
        let mut rhs = Formula::Eventually(
            iv(0.0, 7.0),
            pred(PredicateKind::Upper {
                index: 0,
                bound: 0.1,
            }),
        );
        if let Formula::Eventually(_, p) = &mut rhs {
            if let Formula::Pred(p) = p.as_mut() {
                p.id = 1;
            }
        }
        let expected = Formula::Always(
            iv(0.0, 10.0),
            Box::new(Formula::Or(
                pred(PredicateKind::Lower {
                    index: 0,
                    bound: 0.0,
                }),
                Box::new(rhs),
            )),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn linear_predicates() {
        let f = parse_formula("2*x1 - x2 >= -1.5", &vars()).unwrap();
        assert_eq!(
            f,
            Formula::Pred(Predicate::new(PredicateKind::Halfspace {
                coeffs: vec![-2.0, 1.0],
                bound: 1.5
            }))
        );
        let g = parse_formula("-x2 <= 3", &vars()).unwrap();
        assert_eq!(
            g,
            Formula::Pred(Predicate::new(PredicateKind::Lower {
                index: 1,
                bound: -3.0
            }))
        );
    }

    #[test]
    fn interval_negation_splits() {
        let f = parse_formula("not (x1 in [0, 1])", &vars()).unwrap();
        assert!(matches!(f, Formula::Or(..)));
        assert_eq!(f.predicates().len(), 2);
    }

    #[test]
    fn errors_carry_position() {
        match parse_formula("always[0,1]\n  (x1 <= )", &vars()) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 10)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            parse_formula("x7 < 1", &vars()),
            Err(Error::UnknownCoordinate("x7".into()))
        );
        assert!(parse_formula("always[2,1] (x1 < 1)", &vars()).is_err());
        assert!(parse_formula("x1 < 1 x2", &vars()).is_err());
    }

    #[test]
    fn display_reparses() {
        let text = "always[0,5] ((x1 < 0 and eventually[0,0.5] (x1 > 0)) -> (x2 until[1,2] not (x1 in [0,1] or 1.5*x1 + x2 <= 2)))";
        // `x2` alone is not a predicate, so use a valid variant.
        let text = text.replace("(x2 until", "(x2 > 0 until");
        let f = parse_formula(&text, &vars()).unwrap();
        let again = parse_formula(&alloc::format!("{f}"), &vars()).unwrap();
        assert_eq!(f, again);
    }
}
