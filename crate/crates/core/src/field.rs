//! Closed-form scalar fields on model manifolds.
//!
//! A field is a small expression tree over constants, ambient coordinates,
//! the boundary distance `rb` and the named boundary profile. Every node
//! propagates its value, Riemannian gradient and Laplace-Beltrami exactly by
//! the chain rule, so derived constants never rely on finite differences.
//!
//! Grammar accepted by [`ScalarField::parse`]:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := number | 'x'k | 'rb' | 'pi' | name | func '(' expr ')' | '(' expr ')'
//! func  := 'exp' | 'cos' | 'sin'
//! ```
//!
//! Coordinates are 1-based (`x1` is the first ambient coordinate); `name`
//! refers to a boundary profile supplied through [`ScalarField::parse_with`],
//! evaluating to `1 + sigma * phi(rb)`.

use crate::error::{invalid, Error, Result};
use crate::geometry::{BoundaryProfile, ModelManifold};
use crate::linalg::{Point, Vector};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Value, gradient and Laplacian of a field at a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vector,
    pub lap: f64,
}

impl Jet {
    fn constant(value: f64, n: usize) -> Self {
        Self { value, grad: Vector::zeros(n), lap: 0.0 }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Const(f64),
    Coord(usize),
    BoundaryDistance,
    Profile(String, Arc<BoundaryProfile>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, i32),
    Exp(Box<Node>),
    Cos(Box<Node>),
    Sin(Box<Node>),
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    root: Node,
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        Self { root: Node::Const(c) }
    }

    /// The ambient coordinate `x_i` (0-based index).
    pub fn coord(i: usize) -> Self {
        Self { root: Node::Coord(i) }
    }

    /// Distance to the boundary.
    pub fn boundary_distance() -> Self {
        Self { root: Node::BoundaryDistance }
    }

    /// `1 + sigma * phi(rb)` for the given profile.
    pub fn profile(name: &str, p: Arc<BoundaryProfile>) -> Self {
        Self { root: Node::Profile(name.to_string(), p) }
    }

    pub fn exp(self) -> Self {
        Self { root: Node::Exp(Box::new(self.root)) }
    }

    pub fn cos(self) -> Self {
        Self { root: Node::Cos(Box::new(self.root)) }
    }

    pub fn sin(self) -> Self {
        Self { root: Node::Sin(Box::new(self.root)) }
    }

    pub fn powi(self, n: i32) -> Self {
        Self { root: Node::Pow(Box::new(self.root), n) }
    }

    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with(src, &BTreeMap::new())
    }

    pub fn parse_with(src: &str, profiles: &BTreeMap<String, Arc<BoundaryProfile>>) -> Result<Self> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, profiles };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { root })
    }

    /// `Some(c)` if the field is the constant `c`.
    pub fn as_constant(&self) -> Option<f64> {
        fold_const(&self.root)
    }

    fn any_node(&self, pred: &dyn Fn(&Node) -> bool) -> bool {
        fn walk(n: &Node, pred: &dyn Fn(&Node) -> bool) -> bool {
            if pred(n) {
                return true;
            }
            match n {
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => walk(a, pred) || walk(b, pred),
                Node::Neg(a) | Node::Pow(a, _) | Node::Exp(a) | Node::Cos(a) | Node::Sin(a) => walk(a, pred),
                _ => false,
            }
        }
        walk(&self.root, pred)
    }

    pub fn uses_boundary(&self) -> bool {
        self.any_node(&|n| matches!(n, Node::BoundaryDistance | Node::Profile(..)))
    }

    /// Checks that the field can be evaluated on `m`.
    pub fn validate_for(&self, m: &ModelManifold) -> Result<()> {
        let n = m.ambient_dim();
        if self.any_node(&|node| matches!(node, Node::Coord(i) if *i >= n)) {
            return invalid(format!("field `{self}` uses a coordinate beyond x{n}"));
        }
        if self.uses_boundary() && !m.has_boundary() {
            return Err(Error::NoBoundary);
        }
        Ok(())
    }

    pub fn value(&self, m: &ModelManifold, x: &Point) -> f64 {
        eval(&self.root, m, x)
    }

    pub fn jet(&self, m: &ModelManifold, x: &Point) -> Jet {
        jet(&self.root, m, x)
    }

    /// Riemannian norm of the gradient.
    pub fn grad_norm(&self, m: &ModelManifold, x: &Point) -> f64 {
        let j = self.jet(m, x);
        m.norm(x, &j.grad)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", DisplayNode(&self.root))
    }
}

struct DisplayNode<'a>(&'a Node);

impl fmt::Display for DisplayNode<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Coord(i) => write!(f, "x{}", i + 1),
            Node::BoundaryDistance => write!(f, "rb"),
            Node::Profile(name, _) => write!(f, "{name}"),
            Node::Add(a, b) => write!(f, "({} + {})", DisplayNode(a), DisplayNode(b)),
            Node::Sub(a, b) => write!(f, "({} - {})", DisplayNode(a), DisplayNode(b)),
            Node::Mul(a, b) => write!(f, "({} * {})", DisplayNode(a), DisplayNode(b)),
            Node::Neg(a) => write!(f, "(-{})", DisplayNode(a)),
            Node::Pow(a, n) => write!(f, "{}^{n}", DisplayNode(a)),
            Node::Exp(a) => write!(f, "exp({})", DisplayNode(a)),
            Node::Cos(a) => write!(f, "cos({})", DisplayNode(a)),
            Node::Sin(a) => write!(f, "sin({})", DisplayNode(a)),
        }
    }
}

fn fold_const(n: &Node) -> Option<f64> {
    Some(match n {
        Node::Const(c) => *c,
        Node::Add(a, b) => fold_const(a)? + fold_const(b)?,
        Node::Sub(a, b) => fold_const(a)? - fold_const(b)?,
        Node::Mul(a, b) => {
            let (ca, cb) = (fold_const(a), fold_const(b));
            match (ca, cb) {
                (Some(0.0), _) | (_, Some(0.0)) => 0.0,
                (Some(x), Some(y)) => x * y,
                _ => return None,
            }
        }
        Node::Neg(a) => -fold_const(a)?,
        Node::Pow(a, k) => fold_const(a)?.powi(*k),
        Node::Exp(a) => fold_const(a)?.exp(),
        Node::Cos(a) => fold_const(a)?.cos(),
        Node::Sin(a) => fold_const(a)?.sin(),
        Node::Profile(_, p) if p.sigma == 0.0 => 1.0,
        _ => return None,
    })
}

fn eval(n: &Node, m: &ModelManifold, x: &Point) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Coord(i) => x[*i],
        Node::BoundaryDistance => m.boundary_distance_unchecked(x),
        Node::Profile(_, p) => p.f_of(m.boundary_distance_unchecked(x)),
        Node::Add(a, b) => eval(a, m, x) + eval(b, m, x),
        Node::Sub(a, b) => eval(a, m, x) - eval(b, m, x),
        Node::Mul(a, b) => eval(a, m, x) * eval(b, m, x),
        Node::Neg(a) => -eval(a, m, x),
        Node::Pow(a, k) => eval(a, m, x).powi(*k),
        Node::Exp(a) => eval(a, m, x).exp(),
        Node::Cos(a) => eval(a, m, x).cos(),
        Node::Sin(a) => eval(a, m, x).sin(),
    }
}

/// Jet of `g(u)` from the jet of `u` and `g, g', g''` at `u.value`.
fn compose(m: &ModelManifold, x: &Point, u: Jet, g0: f64, g1: f64, g2: f64) -> Jet {
    if g1 == 0.0 && g2 == 0.0 {
        return Jet::constant(g0, x.len());
    }
    let gsq = m.inner(x, &u.grad, &u.grad);
    let lap = if g2 == 0.0 { g1 * u.lap } else { g1 * u.lap + g2 * gsq };
    Jet { value: g0, grad: u.grad * g1, lap }
}

fn jet(n: &Node, m: &ModelManifold, x: &Point) -> Jet {
    let dim = x.len();
    match n {
        Node::Const(c) => Jet::constant(*c, dim),
        Node::Coord(i) => Jet {
            value: x[*i],
            grad: m.coordinate_gradient(x, *i),
            lap: m.coordinate_laplacian(x, *i),
        },
        Node::BoundaryDistance => boundary_jet(m, x),
        Node::Profile(_, p) => {
            let u = boundary_jet(m, x);
            let s = u.value;
            compose(m, x, u, p.f_of(s), p.sigma * p.dphi(s), p.sigma * p.ddphi(s))
        }
        Node::Add(a, b) => {
            let (ja, jb) = (jet(a, m, x), jet(b, m, x));
            Jet { value: ja.value + jb.value, grad: ja.grad + jb.grad, lap: ja.lap + jb.lap }
        }
        Node::Sub(a, b) => {
            let (ja, jb) = (jet(a, m, x), jet(b, m, x));
            Jet { value: ja.value - jb.value, grad: ja.grad - jb.grad, lap: ja.lap - jb.lap }
        }
        Node::Mul(a, b) => {
            let (ja, jb) = (jet(a, m, x), jet(b, m, x));
            let mut grad = ja.grad * jb.value;
            grad.axpy(ja.value, &jb.grad);
            let cross = m.inner(x, &ja.grad, &jb.grad);
            Jet { value: ja.value * jb.value, grad, lap: ja.value * jb.lap + jb.value * ja.lap + 2.0 * cross }
        }
        Node::Neg(a) => {
            let ja = jet(a, m, x);
            Jet { value: -ja.value, grad: -ja.grad, lap: -ja.lap }
        }
        Node::Pow(a, k) => {
            let u = jet(a, m, x);
            let v = u.value;
            let kf = *k as f64;
            let (g0, g1, g2) = match *k {
                0 => (1.0, 0.0, 0.0),
                1 => (v, 1.0, 0.0),
                _ => (v.powi(*k), kf * v.powi(k - 1), kf * (kf - 1.0) * v.powi(k - 2)),
            };
            compose(m, x, u, g0, g1, g2)
        }
        Node::Exp(a) => {
            let u = jet(a, m, x);
            let e = u.value.exp();
            compose(m, x, u, e, e, e)
        }
        Node::Cos(a) => {
            let u = jet(a, m, x);
            let (s, c) = u.value.sin_cos();
            compose(m, x, u, c, -s, -c)
        }
        Node::Sin(a) => {
            let u = jet(a, m, x);
            let (s, c) = u.value.sin_cos();
            compose(m, x, u, s, c, -s)
        }
    }
}

fn boundary_jet(m: &ModelManifold, x: &Point) -> Jet {
    let value = m.boundary_distance_unchecked(x);
    match m.inward_normal_unchecked(x) {
        Some(normal) => Jet { value, grad: normal, lap: m.boundary_distance_laplacian(x) },
        None => Jet { value, grad: Vector::zeros(x.len()), lap: f64::NEG_INFINITY },
    }
}

impl std::ops::Add for ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: ScalarField) -> ScalarField {
        ScalarField { root: Node::Add(Box::new(self.root), Box::new(rhs.root)) }
    }
}

impl std::ops::Sub for ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: ScalarField) -> ScalarField {
        ScalarField { root: Node::Sub(Box::new(self.root), Box::new(rhs.root)) }
    }
}

impl std::ops::Mul for ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: ScalarField) -> ScalarField {
        ScalarField { root: Node::Mul(Box::new(self.root), Box::new(rhs.root)) }
    }
}

impl std::ops::Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        ScalarField { root: Node::Neg(Box::new(self.root)) }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    profiles: &'a BTreeMap<String, Arc<BoundaryProfile>>,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                lhs = Node::Mul(Box::new(lhs), Box::new(Node::Pow(Box::new(rhs), -1)));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("exponent must be an integer literal"));
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            let k: i32 = text.parse().map_err(|_| self.error("exponent out of range"))?;
            return Ok(Node::Pow(Box::new(base), if neg { -k } else { k }));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(&mut self.pos);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Const).map_err(|_| Error::Parse { pos: start, msg: format!("bad number `{text}`") })
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
                self.ident(&name, start)
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn ident(&mut self, name: &str, start: usize) -> Result<Node> {
        let func = |p: &mut Self| -> Result<Box<Node>> {
            if !p.eat(b'(') {
                return Err(p.error("expected `(` after function name"));
            }
            let e = p.expr()?;
            if !p.eat(b')') {
                return Err(p.error("expected `)`"));
            }
            Ok(Box::new(e))
        };
        match name {
            "exp" => Ok(Node::Exp(func(self)?)),
            "cos" => Ok(Node::Cos(func(self)?)),
            "sin" => Ok(Node::Sin(func(self)?)),
            "rb" => Ok(Node::BoundaryDistance),
            "pi" => Ok(Node::Const(std::f64::consts::PI)),
            _ => {
                if let Some(p) = self.profiles.get(name) {
                    return Ok(Node::Profile(name.to_string(), p.clone()));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx >= 1 {
                        return Ok(Node::Coord(idx - 1));
                    }
                }
                Err(Error::Parse { pos: start, msg: format!("unknown identifier `{name}`") })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldKind;

    fn flat2() -> ModelManifold {
        ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap()
    }

    #[test]
    fn parses_and_evaluates() {
        let m = flat2();
        let f = ScalarField::parse("1 + 0.5*exp(-x1^2) - x2/2").unwrap();
        let x = Vector::from_slice(&[0.3, 0.4]);
        let expect = 1.0 + 0.5 * (-0.09f64).exp() - 0.2;
        assert!((f.value(&m, &x) - expect).abs() < 1e-15);
        assert!(ScalarField::parse("2 * (x1").is_err());
        assert!(ScalarField::parse("foo(x1)").is_err());
        assert!(ScalarField::parse("x1 ^ 1.5").is_err());
        assert_eq!(ScalarField::parse("3*2-1").unwrap().as_constant(), Some(5.0));
        assert_eq!(ScalarField::parse("1e-3").unwrap().as_constant(), Some(1e-3));
    }

    #[test]
    fn flat_jet_matches_finite_differences() {
        let m = flat2();
        let f = ScalarField::parse("x2*(3 - x1^2 - x2^2)/2 + cos(x1)*exp(0.3*x2)").unwrap();
        let x = Vector::from_slice(&[0.7, -0.2]);
        let j = f.jet(&m, &x);
        let h = 1e-4;
        let mut lap = 0.0;
        for i in 0..2 {
            let e = Vector::basis(2, i) * h;
            let (fp, fm) = (f.value(&m, &(x + e)), f.value(&m, &(x - e)));
            assert!(((fp - fm) / (2.0 * h) - j.grad[i]).abs() < 1e-7);
            lap += (fp - 2.0 * j.value + fm) / (h * h);
        }
        assert!((lap - j.lap).abs() < 1e-5, "{lap} vs {}", j.lap);
    }

    #[test]
    fn sphere_coordinate_laplacian() {
        let m = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
        let f = ScalarField::parse("x3").unwrap();
        let x = Vector::from_slice(&[0.6, 0.0, 0.8]);
        let j = f.jet(&m, &x);
        assert!((j.lap + 2.0 * 0.8).abs() < 1e-14);
        assert!((j.grad.dot(&x)).abs() < 1e-14);
    }

    #[test]
    fn display_round_trips() {
        let f = ScalarField::parse("exp(0.8*x1) - cos(x2)^2").unwrap();
        let g = ScalarField::parse(&f.to_string()).unwrap();
        let m = flat2();
        let x = Vector::from_slice(&[0.1, 0.9]);
        assert_eq!(f.value(&m, &x), g.value(&m, &x));
    }
}
