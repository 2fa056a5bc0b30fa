//! Terms, paired variables and the canonical printer.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Polarity {
    Writer,
    Reader,
}

/// One half of a variable pair. Writer and reader share `id`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Var {
    pub id: u64,
    pub pol: Polarity,
}

impl Var {
    pub fn writer(id: u64) -> Var {
        Var { id, pol: Polarity::Writer }
    }

    pub fn reader(id: u64) -> Var {
        Var { id, pol: Polarity::Reader }
    }

    pub fn is_reader(self) -> bool {
        self.pol == Polarity::Reader
    }

    pub fn is_writer(self) -> bool {
        self.pol == Polarity::Writer
    }

    pub fn paired(self) -> Var {
        match self.pol {
            Polarity::Writer => Var::reader(self.id),
            Polarity::Reader => Var::writer(self.id),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pol {
            Polarity::Writer => write!(f, "_W{}", self.id),
            Polarity::Reader => write!(f, "_W{}?", self.id),
        }
    }
}

/// Exact decimal: `mantissa / 10^scale`, kept normalized so equal values
/// have equal representations.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Number {
    mantissa: BigInt,
    scale: u32,
}

const DIV_DIGITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArithError {
    DivisionByZero,
    NotInteger,
}

impl Number {
    pub fn new(mantissa: BigInt, scale: u32) -> Number {
        let mut n = Number { mantissa, scale };
        n.normalize();
        n
    }

    pub fn int(v: i64) -> Number {
        Number { mantissa: BigInt::from(v), scale: 0 }
    }

    fn normalize(&mut self) {
        if self.mantissa.is_zero() {
            self.scale = 0;
            return;
        }
        let ten = BigInt::from(10);
        while self.scale > 0 {
            let (q, r) = self.mantissa.div_rem(&ten);
            if !r.is_zero() {
                break;
            }
            self.mantissa = q;
            self.scale -= 1;
        }
    }

    /// Parse a decimal literal such as `42`, `-7` or `103.65`.
    pub fn parse(text: &str) -> Option<Number> {
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((a, b)) => (a, b),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let mut m: BigInt = digits.parse().ok()?;
        if neg {
            m = -m;
        }
        Some(Number::new(m, frac_part.len() as u32))
    }

    pub fn is_integer(&self) -> bool {
        self.scale == 0
    }

    pub fn to_i64(&self) -> Option<i64> {
        if self.scale == 0 {
            self.mantissa.to_i64()
        } else {
            None
        }
    }

    fn aligned(&self, other: &Number) -> (BigInt, BigInt, u32) {
        let scale = self.scale.max(other.scale);
        let a = &self.mantissa * pow10(scale - self.scale);
        let b = &other.mantissa * pow10(scale - other.scale);
        (a, b, scale)
    }

    pub fn add(&self, other: &Number) -> Number {
        let (a, b, s) = self.aligned(other);
        Number::new(a + b, s)
    }

    pub fn sub(&self, other: &Number) -> Number {
        let (a, b, s) = self.aligned(other);
        Number::new(a - b, s)
    }

    pub fn mul(&self, other: &Number) -> Number {
        Number::new(&self.mantissa * &other.mantissa, self.scale + other.scale)
    }

    /// Exact quotient when it terminates within 32 fractional digits,
    /// otherwise truncated toward zero at that precision.
    pub fn div(&self, other: &Number) -> Result<Number, ArithError> {
        if other.mantissa.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        let (a, b, _) = self.aligned(other);
        let num = a * pow10(DIV_DIGITS);
        let q = &num / &b;
        Ok(Number::new(q, DIV_DIGITS))
    }

    /// Integer remainder with the sign of the divisor.
    pub fn rem(&self, other: &Number) -> Result<Number, ArithError> {
        if !self.is_integer() || !other.is_integer() {
            return Err(ArithError::NotInteger);
        }
        if other.mantissa.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        Ok(Number::new(self.mantissa.mod_floor(&other.mantissa), 0))
    }

    pub fn neg(&self) -> Number {
        Number::new(-self.mantissa.clone(), self.scale)
    }
}

fn pow10(n: u32) -> BigInt {
    let mut r = BigInt::one();
    let ten = BigInt::from(10);
    for _ in 0..n {
        r *= &ten;
    }
    r
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.mantissa);
        }
        let digits = self.mantissa.abs().to_string();
        let scale = self.scale as usize;
        let padded = if digits.len() <= scale {
            format!("{}{}", "0".repeat(scale - digits.len() + 1), digits)
        } else {
            digits
        };
        let (i, frac) = padded.split_at(padded.len() - scale);
        let sign = if self.mantissa.is_negative() { "-" } else { "" };
        write!(f, "{sign}{i}.{frac}")
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Compound {
    pub functor: Arc<str>,
    pub args: Vec<Term>,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(Var),
    Atom(Arc<str>),
    Num(Number),
    Cmp(Arc<Compound>),
}

pub const NIL: &str = "[]";
pub const CONS: &str = ".";

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(Arc::from(name))
    }

    pub fn int(v: i64) -> Term {
        Term::Num(Number::int(v))
    }

    pub fn writer(id: u64) -> Term {
        Term::Var(Var::writer(id))
    }

    pub fn reader(id: u64) -> Term {
        Term::Var(Var::reader(id))
    }

    /// Builds `f(args)`; an empty argument list yields the constant `f`.
    pub fn cmp(functor: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            return Term::atom(functor);
        }
        Term::Cmp(Arc::new(Compound { functor: Arc::from(functor), args }))
    }

    pub fn cmp_arc(functor: Arc<str>, args: Vec<Term>) -> Term {
        if args.is_empty() {
            return Term::Atom(functor);
        }
        Term::Cmp(Arc::new(Compound { functor, args }))
    }

    pub fn nil() -> Term {
        Term::atom(NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::cmp(CONS, vec![head, tail])
    }

    pub fn list(items: Vec<Term>, tail: Term) -> Term {
        items.into_iter().rev().fold(tail, |acc, t| Term::cons(t, acc))
    }

    pub fn var(&self) -> Option<Var> {
        match self {
            Term::Var(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_atom(&self, name: &str) -> bool {
        matches!(self, Term::Atom(a) if &**a == name)
    }

    /// Name and arity of an atom or compound.
    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Term::Atom(a) => Some((a, 0)),
            Term::Cmp(c) => Some((&c.functor, c.args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Cmp(c) => &c.args,
            _ => &[],
        }
    }

    pub fn as_cons(&self) -> Option<(&Term, &Term)> {
        match self {
            Term::Cmp(c) if &*c.functor == CONS && c.args.len() == 2 => Some((&c.args[0], &c.args[1])),
            _ => None,
        }
    }

    /// The `?` operator: writers map to their reader, everything else is
    /// left as is.
    pub fn question(&self) -> Term {
        match self {
            Term::Var(v) if v.is_writer() => Term::Var(v.paired()),
            t => t.clone(),
        }
    }

    /// Visit every variable occurrence, left to right.
    pub fn for_each_var(&self, f: &mut dyn FnMut(Var)) {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                Term::Var(v) => f(*v),
                Term::Cmp(c) => {
                    for a in c.args.iter().rev() {
                        stack.push(a);
                    }
                }
                _ => {}
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.for_each_var(&mut |v| out.push(v));
        out
    }

    pub fn is_ground(&self) -> bool {
        let mut ground = true;
        self.for_each_var(&mut |_| ground = false);
        ground
    }

    /// Rebuild the term with every variable mapped through `f`.
    pub fn map_vars(&self, f: &mut dyn FnMut(Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(*v),
            Term::Cmp(c) => {
                if let Some((h, t)) = self.as_cons() {
                    // iterate list spines so long streams do not recurse deeply
                    let mut items = vec![h.map_vars(f)];
                    let mut tail = t;
                    while let Some((h2, t2)) = tail.as_cons() {
                        items.push(h2.map_vars(f));
                        tail = t2;
                    }
                    let tail = tail.map_vars(f);
                    return Term::list(items, tail);
                }
                let args = c.args.iter().map(|a| a.map_vars(f)).collect();
                Term::Cmp(Arc::new(Compound { functor: c.functor.clone(), args }))
            }
            t => t.clone(),
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            n += 1;
            if let Term::Cmp(c) = t {
                stack.extend(c.args.iter());
            }
        }
        n
    }
}

/// True when `name` prints without quotes.
pub fn plain_atom(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    }
}

pub fn quote_atom(name: &str, out: &mut String) {
    if plain_atom(name) || name == NIL {
        out.push_str(name);
        return;
    }
    out.push('\'');
    for c in name.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

/// Canonical printing with a caller-chosen variable naming.
pub fn write_term(t: &Term, out: &mut String, name: &dyn Fn(Var) -> String) {
    match t {
        Term::Var(v) => out.push_str(&name(*v)),
        Term::Atom(a) => quote_atom(a, out),
        Term::Num(n) => out.push_str(&n.to_string()),
        Term::Cmp(c) => {
            if t.as_cons().is_some() {
                out.push('[');
                let mut cur = t;
                let mut first = true;
                loop {
                    match cur.as_cons() {
                        Some((h, tl)) => {
                            if !first {
                                out.push(',');
                            }
                            first = false;
                            write_term(h, out, name);
                            cur = tl;
                        }
                        None => {
                            if !cur.is_atom(NIL) {
                                out.push('|');
                                write_term(cur, out, name);
                            }
                            break;
                        }
                    }
                }
                out.push(']');
                return;
            }
            quote_atom(&c.functor, out);
            out.push('(');
            for (i, a) in c.args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_term(a, out, name);
            }
            out.push(')');
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_term(self, &mut s, &|v| v.to_string());
        f.write_str(&s)
    }
}
