//! Line-oriented constraint language.
//!
//! ```text
//! # comment
//! negative: -0.3 <= x[0] <= 0.3 : y[0] <= 2.5
//! negative: -1 <= x[0] <= 1 : -5 <= y[0] <= 3
//! positive: 3 <= x[0] <= 5 : y[0] = x[0] + 5 ~ gauss(0.5)
//! positive: -1 <= x[0] <= 1 : y[0] = x[0]^2 ~ gauss(0.5) @ 0.3 | y[0] = 2 ~ gauss(0.5) @ 0.7
//! positive: 1 <= x[0] <= 3, -2 <= x[1] <= 0 : class = 1
//! ```
//!
//! Comparisons are normalized to `f <= 0`; strict and non-strict compile the
//! same way. Comma-separated inequalities form one conjunctive group, and
//! negative declarations sharing an identical input box are merged into one
//! region whose groups form a union.

use std::fmt;

use super::poly::{Monomial, PolyExpr, Var};
use super::region::{
    Bound, ConstraintSet, InputBox, NegativeRegion, PositiveRegion, PositiveTargets, Region,
    TargetComponent,
};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax { found: String, expected: Vec<String> },
    UnknownVariable(String),
    InvalidWeights(String),
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax { found, expected } => {
                write!(f, "expected {}, found {found}", expected.join(" or "))
            }
            ParseErrorKind::UnknownVariable(name) => write!(f, "unknown variable '{name}'"),
            ParseErrorKind::InvalidWeights(msg) => write!(f, "invalid mixture weights: {msg}"),
            ParseErrorKind::Invalid(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number { value: f64, integer: Option<u64> },
    Sym(&'static str),
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Number { value, .. } => write!(f, "number {value}"),
            Tok::Sym(s) => write!(f, "'{s}'"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const SYMBOLS: [&str; 18] = [
    "<=", ">=", "<", ">", "=", ":", ",", "[", "]", "(", ")", "+", "-", "*", "^", "~", "@", "|",
];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let ch = chars[i];
            let column = i + 1;
            if ch == '#' {
                break;
            }
            if ch.is_whitespace() {
                i += 1;
                continue;
            }
            if ch.is_ascii_alphabetic() || ch == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: line_no,
                    column,
                });
                continue;
            }
            if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut integral = true;
                if i < chars.len() && chars[i] == '.' {
                    integral = false;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        integral = false;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let raw: String = chars[start..i].iter().collect();
                let value: f64 = raw.parse().map_err(|_| ParseError {
                    line: line_no,
                    column,
                    kind: ParseErrorKind::Invalid(format!("malformed number '{raw}'")),
                })?;
                let integer = if integral { raw.parse::<u64>().ok() } else { None };
                tokens.push(Token {
                    tok: Tok::Number { value, integer },
                    line: line_no,
                    column,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(sym) => {
                    tokens.push(Token {
                        tok: Tok::Sym(sym),
                        line: line_no,
                        column,
                    });
                    i += sym.len();
                }
                None => {
                    return Err(ParseError {
                        line: line_no,
                        column,
                        kind: ParseErrorKind::Syntax {
                            found: format!("'{ch}'"),
                            expected: vec!["a token".into()],
                        },
                    })
                }
            }
        }
        tokens.push(Token {
            tok: Tok::Newline,
            line: line_no,
            column: chars.len() + 1,
        });
    }
    let (line, column) = tokens.last().map_or((1, 1), |t| (t.line, t.column));
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cmp {
    Le,
    Ge,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(tok: &Token, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: tok.line,
            column: tok.column,
            kind,
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let tok = self.peek();
        Self::error_at(
            tok,
            ParseErrorKind::Syntax {
                found: tok.tok.to_string(),
                expected: expected.iter().map(|s| s.to_string()).collect(),
            },
        )
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    fn at_ident(&self, name: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == name)
    }

    fn expect_sym(&mut self, sym: &'static str) -> PResult<Token> {
        if self.at_sym(sym) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[&format!("'{sym}'")]))
        }
    }

    fn expect_ident(&mut self, name: &str) -> PResult<Token> {
        if self.at_ident(name) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[&format!("'{name}'")]))
        }
    }

    fn expect_integer(&mut self) -> PResult<u64> {
        match self.peek().tok {
            Tok::Number {
                integer: Some(n), ..
            } => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected(&["non-negative integer"])),
        }
    }

    fn signed_real(&mut self) -> PResult<f64> {
        let mut sign = 1.0;
        if self.at_sym("-") {
            self.bump();
            sign = -1.0;
        } else if self.at_sym("+") {
            self.bump();
        }
        match self.peek().tok {
            Tok::Number { value, .. } => {
                self.bump();
                Ok(sign * value)
            }
            _ => Err(self.unexpected(&["number"])),
        }
    }

    fn end_of_decl(&mut self) -> PResult<()> {
        match self.peek().tok {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected(&["end of line"])),
        }
    }

    /// `x[i]` or `y[j]`.
    fn variable(&mut self) -> PResult<Var> {
        let tok = self.peek().clone();
        let name = match &tok.tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected(&["variable x[i] or y[j]"])),
        };
        if name != "x" && name != "y" {
            return Err(Self::error_at(&tok, ParseErrorKind::UnknownVariable(name)));
        }
        self.bump();
        self.expect_sym("[")?;
        let idx = self.expect_integer()? as usize;
        self.expect_sym("]")?;
        Ok(if name == "x" { Var::X(idx) } else { Var::Y(idx) })
    }

    fn factor(&mut self) -> PResult<PolyExpr> {
        match &self.peek().tok {
            Tok::Number { value, .. } => {
                let v = *value;
                self.bump();
                Ok(PolyExpr::constant(v))
            }
            Tok::Ident(_) => {
                let var = self.variable()?;
                let mut exp = 1u32;
                if self.at_sym("^") {
                    self.bump();
                    let e = self.expect_integer()?;
                    exp = u32::try_from(e).map_err(|_| self.unexpected(&["small exponent"]))?;
                }
                Ok(PolyExpr::from_terms([(1.0, Monomial::from_powers([(var, exp)]))]))
            }
            _ => Err(self.unexpected(&["number", "variable"])),
        }
    }

    fn term(&mut self) -> PResult<PolyExpr> {
        let mut acc = self.factor()?;
        while self.at_sym("*") {
            self.bump();
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn poly(&mut self) -> PResult<PolyExpr> {
        let mut negate = false;
        if self.at_sym("-") {
            self.bump();
            negate = true;
        } else if self.at_sym("+") {
            self.bump();
        }
        let first = self.term()?;
        let mut acc = if negate { first.neg() } else { first };
        loop {
            if self.at_sym("+") {
                self.bump();
                acc = acc.add(&self.term()?);
            } else if self.at_sym("-") {
                self.bump();
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn comparison(&mut self) -> Option<Cmp> {
        let cmp = match &self.peek().tok {
            Tok::Sym("<=") | Tok::Sym("<") => Cmp::Le,
            Tok::Sym(">=") | Tok::Sym(">") => Cmp::Ge,
            _ => return None,
        };
        self.bump();
        Some(cmp)
    }

    /// `lhs cmp rhs` normalized to `f <= 0`.
    fn normalize(lhs: &PolyExpr, cmp: Cmp, rhs: &PolyExpr) -> PolyExpr {
        match cmp {
            Cmp::Le => lhs.sub(rhs),
            Cmp::Ge => rhs.sub(lhs),
        }
    }

    /// `poly cmp poly [cmp poly]`; a chain yields two inequalities.
    fn inequality(&mut self, out: &mut Vec<PolyExpr>) -> PResult<()> {
        let a = self.poly()?;
        let c1 = self
            .comparison()
            .ok_or_else(|| self.unexpected(&["'<='", "'<'", "'>='", "'>'"]))?;
        let b = self.poly()?;
        out.push(Self::normalize(&a, c1, &b));
        if let Some(c2) = self.comparison() {
            let c = self.poly()?;
            out.push(Self::normalize(&b, c2, &c));
        }
        Ok(())
    }

    fn bound(&mut self) -> PResult<Bound> {
        let start = self.peek().clone();
        let lower = self.signed_real()?;
        self.expect_sym("<=")?;
        let var_tok = self.peek().clone();
        let dim = match self.variable()? {
            Var::X(i) => i,
            Var::Y(_) => {
                return Err(Self::error_at(
                    &var_tok,
                    ParseErrorKind::Invalid("input box bounds may only constrain x[i]".into()),
                ))
            }
        };
        self.expect_sym("<=")?;
        let upper = self.signed_real()?;
        if !(lower < upper) {
            return Err(Self::error_at(
                &start,
                ParseErrorKind::Invalid(format!(
                    "degenerate bound {lower} <= x[{dim}] <= {upper}: lower must be below upper"
                )),
            ));
        }
        Ok(Bound { dim, lower, upper })
    }

    fn input_box(&mut self) -> PResult<InputBox> {
        let start = self.peek().clone();
        let mut bounds = vec![self.bound()?];
        while self.at_sym(",") {
            self.bump();
            bounds.push(self.bound()?);
        }
        let mut dims: Vec<usize> = bounds.iter().map(|b| b.dim).collect();
        dims.sort_unstable();
        if dims.windows(2).any(|w| w[0] == w[1]) {
            return Err(Self::error_at(
                &start,
                ParseErrorKind::Invalid("input dimension bounded twice".into()),
            ));
        }
        Ok(InputBox::new(bounds))
    }

    fn negative_body(&mut self) -> PResult<Vec<PolyExpr>> {
        let mut group = Vec::new();
        self.inequality(&mut group)?;
        while self.at_sym(",") {
            self.bump();
            self.inequality(&mut group)?;
        }
        Ok(group)
    }

    fn class_body(&mut self) -> PResult<Vec<usize>> {
        self.expect_ident("class")?;
        self.expect_sym("=")?;
        let mut classes = vec![self.expect_integer()? as usize];
        while self.at_sym(",") {
            self.bump();
            classes.push(self.expect_integer()? as usize);
        }
        classes.sort_unstable();
        classes.dedup();
        Ok(classes)
    }

    fn component(&mut self) -> PResult<(TargetComponent, bool)> {
        let start = self.peek().clone();
        let output = match self.variable()? {
            Var::Y(j) => j,
            Var::X(_) => {
                return Err(Self::error_at(
                    &start,
                    ParseErrorKind::Invalid("a positive target must name an output y[j]".into()),
                ))
            }
        };
        self.expect_sym("=")?;
        let target_tok = self.peek().clone();
        let target = self.poly()?;
        if target.uses_outputs() {
            return Err(Self::error_at(
                &target_tok,
                ParseErrorKind::Invalid("a positive target may depend on inputs x[i] only".into()),
            ));
        }
        self.expect_sym("~")?;
        self.expect_ident("gauss")?;
        self.expect_sym("(")?;
        let sigma_tok = self.peek().clone();
        let sigma = self.signed_real()?;
        if !(sigma > 0.0) {
            return Err(Self::error_at(
                &sigma_tok,
                ParseErrorKind::Invalid("gauss standard deviation must be positive".into()),
            ));
        }
        self.expect_sym(")")?;
        let mut weight = None;
        if self.at_sym("@") {
            self.bump();
            let wt = self.peek().clone();
            let w = self.signed_real()?;
            if !(w > 0.0 && w <= 1.0) {
                return Err(Self::error_at(
                    &wt,
                    ParseErrorKind::InvalidWeights(format!("weight {w} outside (0, 1]")),
                ));
            }
            weight = Some(w);
        }
        Ok((
            TargetComponent {
                output,
                target,
                sigma,
                weight: weight.unwrap_or(f64::NAN),
            },
            weight.is_some(),
        ))
    }

    fn regression_body(&mut self) -> PResult<Vec<TargetComponent>> {
        let start = self.peek().clone();
        let mut comps = vec![self.component()?];
        while self.at_sym("|") {
            self.bump();
            comps.push(self.component()?);
        }
        let omitted = comps.iter().filter(|c| !c.1).count();
        let comps: Vec<TargetComponent> = match omitted {
            n if n == comps.len() => {
                let uniform = 1.0 / n as f64;
                comps
                    .into_iter()
                    .map(|(mut c, _)| {
                        c.weight = uniform;
                        c
                    })
                    .collect()
            }
            0 => comps.into_iter().map(|(c, _)| c).collect(),
            _ => {
                return Err(Self::error_at(
                    &start,
                    ParseErrorKind::InvalidWeights(
                        "give a weight for every component or for none".into(),
                    ),
                ))
            }
        };
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Self::error_at(
                &start,
                ParseErrorKind::InvalidWeights(format!("weights sum to {total}, not 1")),
            ));
        }
        Ok(comps)
    }

    fn declaration(&mut self) -> PResult<Region> {
        let positive = if self.at_ident("positive") {
            true
        } else if self.at_ident("negative") {
            false
        } else {
            return Err(self.unexpected(&["'positive'", "'negative'"]));
        };
        self.bump();
        self.expect_sym(":")?;
        let input_box = self.input_box()?;
        self.expect_sym(":")?;
        let region = if positive {
            let targets = if self.at_ident("class") {
                PositiveTargets::Classification(self.class_body()?)
            } else if self.at_ident("y") {
                PositiveTargets::Regression(self.regression_body()?)
            } else {
                return Err(self.unexpected(&["'class'", "'y'"]));
            };
            Region::Positive(PositiveRegion { input_box, targets })
        } else {
            Region::Negative(NegativeRegion {
                input_box,
                groups: vec![self.negative_body()?],
            })
        };
        self.end_of_decl()?;
        Ok(region)
    }

    fn file(&mut self) -> PResult<ConstraintSet> {
        let mut regions: Vec<Region> = Vec::new();
        loop {
            match self.peek().tok {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                }
                _ => {
                    let decl = self.declaration()?;
                    push_region(&mut regions, decl);
                }
            }
        }
        Ok(ConstraintSet { regions })
    }
}

fn push_region(regions: &mut Vec<Region>, decl: Region) {
    if let Region::Negative(new) = &decl {
        let same_box = regions.iter_mut().find_map(|r| match r {
            Region::Negative(n) if n.input_box == new.input_box => Some(n),
            _ => None,
        });
        if let Some(existing) = same_box {
            existing.groups.extend(new.groups.iter().cloned());
            return;
        }
    }
    regions.push(decl);
}

/// Parse a constraint file into compiled regions.
pub fn parse_constraints(text: &str) -> Result<ConstraintSet, ParseError> {
    let tokens = lex(text)?;
    Parser { tokens, pos: 0 }.file()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y0() -> PolyExpr {
        PolyExpr::var(Var::Y(0))
    }

    fn x0() -> PolyExpr {
        PolyExpr::var(Var::X(0))
    }

    fn k(v: f64) -> PolyExpr {
        PolyExpr::constant(v)
    }

    #[test]
    fn single_negative() {
        let set = parse_constraints("negative: -0.3 <= x[0] <= 0.3 : y[0] <= 2.5").unwrap();
        assert_eq!(set.regions.len(), 1);
        let Region::Negative(n) = &set.regions[0] else { panic!() };
        assert_eq!(n.groups, vec![vec![y0().sub(&k(2.5))]]);
        assert_eq!(
            n.input_box.bounds,
            vec![Bound {
                dim: 0,
                lower: -0.3,
                upper: 0.3
            }]
        );
    }

    #[test]
    fn two_declarations_same_box_become_two_groups() {
        let text = "negative: -5 <= x[0] <= -3 : y[0] >= -x[0] + 7\n\
                    negative: -5 <= x[0] <= -3 : y[0] <= -x[0] + 2\n";
        let set = parse_constraints(text).unwrap();
        assert_eq!(set.regions.len(), 1);
        let Region::Negative(n) = &set.regions[0] else { panic!() };
        assert_eq!(n.groups.len(), 2);
        assert_eq!(n.groups[0], vec![x0().neg().add(&k(7.0)).sub(&y0())]);
        assert_eq!(n.groups[1], vec![y0().add(&x0()).sub(&k(2.0))]);
    }

    #[test]
    fn comma_inequalities_form_one_group() {
        let set = parse_constraints("negative: -1 <= x[0] <= 1 : y[0] > -5, y[0] < 3").unwrap();
        let Region::Negative(n) = &set.regions[0] else { panic!() };
        assert_eq!(n.groups.len(), 1);
        assert_eq!(n.groups[0].len(), 2);
    }

    #[test]
    fn chained_body_desugars() {
        let a = parse_constraints("negative: -1 <= x[0] <= 1 : -5 <= y[0] <= 3").unwrap();
        let b = parse_constraints("negative: -1 <= x[0] <= 1 : -5 <= y[0], y[0] <= 3").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_positive() {
        let text = "positive: -1 <= x[0] <= 1 : y[0] = -0.2*x[0]^3 + 0.5*x[0]^2 + 0.7*x[0] - 0.5 ~ gauss(0.5) @ 0.5 | y[0] = 0.2*x[0]^3 - 0.15*x[0]^2 + 3.5 ~ gauss(0.5) @ 0.5";
        let set = parse_constraints(text).unwrap();
        let Region::Positive(p) = &set.regions[0] else { panic!() };
        let PositiveTargets::Regression(comps) = &p.targets else { panic!() };
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.sigma == 0.5 && c.weight == 0.5));
        assert!((comps[0].target.eval(&[1.0], &[]) - 0.5).abs() < 1e-12);
        assert!((comps[1].target.eval(&[1.0], &[]) - 3.55).abs() < 1e-12);
    }

    #[test]
    fn omitted_weights_are_uniform() {
        let text = "positive: -1 <= x[0] <= 1 : y[0] = 1 ~ gauss(1) | y[0] = 2 ~ gauss(1) | y[0] = 3 ~ gauss(1)";
        let set = parse_constraints(text).unwrap();
        let Region::Positive(p) = &set.regions[0] else { panic!() };
        let PositiveTargets::Regression(comps) = &p.targets else { panic!() };
        assert!(comps.iter().all(|c| (c.weight - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = parse_constraints(
            "positive: -1 <= x[0] <= 1 : y[0] = 1 ~ gauss(1) @ 0.5 | y[0] = 2 ~ gauss(1) @ 0.4",
        )
        .unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::InvalidWeights(_)));
    }

    #[test]
    fn class_constraint() {
        let set = parse_constraints("positive: 1 <= x[0] <= 3, -2 <= x[1] <= 0 : class = 1").unwrap();
        let Region::Positive(p) = &set.regions[0] else { panic!() };
        assert_eq!(p.targets, PositiveTargets::Classification(vec![1]));
        assert_eq!(p.input_box.bounds.len(), 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\n  negative: 0 <= x[0] <= 1 : y[0] <= 0  # trailing\n\n";
        assert_eq!(parse_constraints(text).unwrap().regions.len(), 1);
        assert!(parse_constraints("# nothing\n").unwrap().is_empty());
    }

    #[test]
    fn error_positions() {
        let err = parse_constraints("negative: -1 <= x[0] <= 1 : y[0] <= \n").unwrap_err();
        assert_eq!((err.line, err.column), (1, 37));
        assert!(matches!(err.kind, ParseErrorKind::Syntax { .. }));

        let err = parse_constraints("\nnegative: -1 <= x[0] <= 1 : z[0] <= 2").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::UnknownVariable("z".into()));
        assert!(err.to_string().contains("unknown variable 'z'"));
    }
}
