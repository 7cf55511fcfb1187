use std::collections::BTreeMap;
use std::fmt;

/// A variable of the joint input-output space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x[{i}]"),
            Var::Y(j) => write!(f, "y[{j}]"),
        }
    }
}

/// Product of variables raised to positive integer powers, sorted by variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn constant() -> Self {
        Self(Vec::new())
    }

    pub fn var(v: Var) -> Self {
        Self(vec![(v, 1)])
    }

    pub fn from_powers(powers: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut map: BTreeMap<Var, u32> = BTreeMap::new();
        for (v, e) in powers {
            *map.entry(v).or_default() += e;
        }
        Self(map.into_iter().filter(|(_, e)| *e > 0).collect())
    }

    pub fn powers(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial::from_powers(self.0.iter().chain(&other.0).copied())
    }

    fn value(v: Var, x: &[f64], y: &[f64]) -> f64 {
        match v {
            Var::X(i) => x[i],
            Var::Y(j) => y[j],
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|&(v, e)| Self::value(v, x, y).powi(e as i32))
            .product()
    }

    /// Partial derivative w.r.t. `target`, as `(factor, monomial)`.
    fn derivative(&self, target: Var) -> Option<(f64, Monomial)> {
        let pos = self.0.iter().position(|(v, _)| *v == target)?;
        let e = self.0[pos].1;
        let mut rest = self.0.clone();
        if e == 1 {
            rest.remove(pos);
        } else {
            rest[pos].1 = e - 1;
        }
        Some((e as f64, Monomial(rest)))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (v, e)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub monomial: Monomial,
}

/// Polynomial over `x[i]` and `y[j]` in canonical form: like terms merged,
/// zero coefficients dropped, terms ordered by descending degree then variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyExpr {
    terms: Vec<Term>,
}

impl PolyExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms([(c, Monomial::constant())])
    }

    pub fn var(v: Var) -> Self {
        Self::from_terms([(1.0, Monomial::var(v))])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (f64, Monomial)>) -> Self {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (c, m) in terms {
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut terms: Vec<Term> = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(monomial, coeff)| Term { coeff, monomial })
            .collect();
        terms.sort_by(|a, b| {
            b.monomial
                .degree()
                .cmp(&a.monomial.degree())
                .then_with(|| a.monomial.cmp(&b.monomial))
        });
        Self { terms }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, Monomial)> + '_ {
        self.terms.iter().map(|t| (t.coeff, t.monomial.clone()))
    }

    pub fn add(&self, other: &PolyExpr) -> PolyExpr {
        Self::from_terms(self.pairs().chain(other.pairs()))
    }

    pub fn sub(&self, other: &PolyExpr) -> PolyExpr {
        Self::from_terms(self.pairs().chain(other.pairs().map(|(c, m)| (-c, m))))
    }

    pub fn neg(&self) -> PolyExpr {
        Self::from_terms(self.pairs().map(|(c, m)| (-c, m)))
    }

    pub fn mul(&self, other: &PolyExpr) -> PolyExpr {
        Self::from_terms(self.terms.iter().flat_map(|a| {
            other
                .terms
                .iter()
                .map(move |b| (a.coeff * b.coeff, a.monomial.mul(&b.monomial)))
        }))
    }

    pub fn scale(&self, s: f64) -> PolyExpr {
        Self::from_terms(self.pairs().map(|(c, m)| (c * s, m)))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.monomial.eval(x, y))
            .sum()
    }

    /// Accumulate `scale * df/dy` into `out`.
    pub fn grad_y_into(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            for &(v, _) in t.monomial.powers() {
                if let Var::Y(j) = v {
                    let (factor, rest) = t.monomial.derivative(v).expect("variable present");
                    out[j] += scale * t.coeff * factor * rest.eval(x, y);
                }
            }
        }
    }

    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        self.grad_y_into(x, y, 1.0, &mut g);
        g
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.terms
            .iter()
            .flat_map(|t| t.monomial.powers().iter().map(|(v, _)| *v))
    }

    pub fn uses_outputs(&self) -> bool {
        self.vars().any(|v| matches!(v, Var::Y(_)))
    }
}

impl fmt::Display for PolyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            let neg = t.coeff < 0.0;
            match (k, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let c = t.coeff.abs();
            if t.monomial.powers().is_empty() {
                write!(f, "{c}")?;
            } else if c == 1.0 {
                write!(f, "{}", t.monomial)?;
            } else {
                write!(f, "{c}*{}", t.monomial)?;
            }
        }
        Ok(())
    }
}
