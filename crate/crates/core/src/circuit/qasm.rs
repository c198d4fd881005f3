//! OpenQASM 2.0 subset: one quantum register, no measurement or classical
//! control. `creg` declarations and `barrier` statements are accepted and
//! ignored.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::dag::{Circuit, Gate, GateId};
use super::gate::{GateKind, Param, SymExpr, MAX_SYMBOLS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |i: &mut usize, col: &mut usize, n: usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            advance(&mut i, &mut col, 1);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let v = s.parse::<f64>().map_err(|_| Error::Syntax {
                line: tl,
                col: tc,
                msg: format!("bad number `{s}`"),
            })?;
            out.push(Token { tok: Tok::Num(v), line: tl, col: tc });
        } else if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                i += 1;
            }
            if i >= chars.len() || chars[i] != '"' {
                return Err(Error::Syntax { line: tl, col: tc, msg: "unterminated string".into() });
            }
            let s: String = chars[start..i].iter().collect();
            i += 1;
            col += s.chars().count() + 2;
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
        } else if ";,()[]+-*/".contains(c) {
            advance(&mut i, &mut col, 1);
            out.push(Token { tok: Tok::Sym(c), line: tl, col: tc });
        } else {
            return Err(Error::Syntax { line: tl, col: tc, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    allow_symbols: bool,
    end: (usize, usize),
}

/// Parsed angle: a concrete value or a linear symbol expression.
#[derive(Clone, Copy, Debug)]
enum Angle {
    Value(f64),
    Expr(SymExpr),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Syntax { line, col, msg: msg.into() })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize)> {
        match self.peek().cloned() {
            Some(Token { tok: Tok::Ident(s), line, col }) => {
                self.pos += 1;
                Ok((s, line, col))
            }
            _ => self.err("expected identifier"),
        }
    }

    fn integer(&mut self) -> Result<usize> {
        match self.peek().cloned() {
            Some(Token { tok: Tok::Num(v), .. }) if v >= 0.0 && v.fract() == 0.0 => {
                self.pos += 1;
                Ok(v as usize)
            }
            _ => self.err("expected non-negative integer"),
        }
    }

    fn expr(&mut self) -> Result<Angle> {
        let mut acc = self.term()?;
        loop {
            if self.eat_sym('+') {
                let rhs = self.term()?;
                acc = self.combine(acc, rhs, 1)?;
            } else if self.eat_sym('-') {
                let rhs = self.term()?;
                acc = self.combine(acc, rhs, -1)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn combine(&self, a: Angle, b: Angle, sign: i8) -> Result<Angle> {
        match (a, b) {
            (Angle::Value(x), Angle::Value(y)) => Ok(Angle::Value(if sign > 0 { x + y } else { x - y })),
            (Angle::Expr(x), Angle::Expr(y)) => {
                let mut coeffs = x.coeffs;
                for i in 0..MAX_SYMBOLS {
                    coeffs[i] = coeffs[i].saturating_add(sign.saturating_mul(y.coeffs[i]));
                }
                Ok(Angle::Expr(SymExpr { coeffs }))
            }
            _ => self.err("cannot mix symbols and constants in one angle"),
        }
    }

    fn term(&mut self) -> Result<Angle> {
        let mut acc = self.factor()?;
        loop {
            if self.eat_sym('*') {
                let rhs = self.factor()?;
                acc = match (acc, rhs) {
                    (Angle::Value(x), Angle::Value(y)) => Angle::Value(x * y),
                    (Angle::Value(k), Angle::Expr(e)) | (Angle::Expr(e), Angle::Value(k))
                        if k.fract() == 0.0 && k.abs() < 64.0 =>
                    {
                        let mut coeffs = e.coeffs;
                        for c in coeffs.iter_mut() {
                            *c = c.saturating_mul(k as i8);
                        }
                        Angle::Expr(SymExpr { coeffs })
                    }
                    _ => return self.err("symbols may only be scaled by small integers"),
                };
            } else if self.eat_sym('/') {
                let rhs = self.factor()?;
                acc = match (acc, rhs) {
                    (Angle::Value(x), Angle::Value(y)) => Angle::Value(x / y),
                    _ => return self.err("cannot divide symbolic angles"),
                };
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Angle> {
        if self.eat_sym('-') {
            return Ok(match self.factor()? {
                Angle::Value(v) => Angle::Value(-v),
                Angle::Expr(e) => {
                    let mut coeffs = e.coeffs;
                    for c in coeffs.iter_mut() {
                        *c = -*c;
                    }
                    Angle::Expr(SymExpr { coeffs })
                }
            });
        }
        if self.eat_sym('(') {
            let v = self.expr()?;
            self.expect_sym(')')?;
            return Ok(v);
        }
        match self.peek().cloned() {
            Some(Token { tok: Tok::Num(v), .. }) => {
                self.pos += 1;
                Ok(Angle::Value(v))
            }
            Some(Token { tok: Tok::Ident(s), .. }) if s == "pi" => {
                self.pos += 1;
                Ok(Angle::Value(PI))
            }
            Some(Token { tok: Tok::Ident(s), .. }) if self.allow_symbols && symbol_index(&s).is_some() => {
                self.pos += 1;
                Ok(Angle::Expr(SymExpr::symbol(symbol_index(&s).unwrap())))
            }
            _ => self.err("expected angle expression"),
        }
    }
}

fn symbol_index(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('t')?;
    let i: usize = rest.parse().ok()?;
    (i < MAX_SYMBOLS).then_some(i)
}

/// Parse QASM source into a circuit whose gate order is statement order.
pub fn parse_qasm(text: &str) -> Result<Circuit> {
    parse_impl(text, None, false)
}

/// Parse a gate list (no header, no `qreg`) over a fixed qubit count, allowing
/// symbolic angles `t0..t3`. Used by the rule file format.
pub(crate) fn parse_gate_list(text: &str, num_qubits: usize) -> Result<Circuit> {
    parse_impl(text, Some(num_qubits), true)
}

fn parse_impl(text: &str, fixed_qubits: Option<usize>, allow_symbols: bool) -> Result<Circuit> {
    let toks = lex(text)?;
    let end = toks.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1));
    let mut p = Parser { toks, pos: 0, allow_symbols, end };
    let mut reg: Option<(String, usize)> = fixed_qubits.map(|n| ("q".to_string(), n));
    let mut gates: Vec<Gate> = Vec::new();

    while p.peek().is_some() {
        let (word, line, col) = p.ident()?;
        match word.as_str() {
            "OPENQASM" => {
                match p.next() {
                    Some(Token { tok: Tok::Num(_), .. }) => {}
                    _ => return p.err("expected version number"),
                }
                p.expect_sym(';')?;
            }
            "include" => {
                match p.next() {
                    Some(Token { tok: Tok::Str(_), .. }) => {}
                    _ => return p.err("expected file name string"),
                }
                p.expect_sym(';')?;
            }
            "qreg" => {
                let (name, ..) = p.ident()?;
                p.expect_sym('[')?;
                let n = p.integer()?;
                p.expect_sym(']')?;
                p.expect_sym(';')?;
                if reg.is_some() {
                    return Err(Error::Syntax { line, col, msg: "only one quantum register is supported".into() });
                }
                reg = Some((name, n));
            }
            "creg" => {
                p.ident()?;
                p.expect_sym('[')?;
                p.integer()?;
                p.expect_sym(']')?;
                p.expect_sym(';')?;
            }
            "barrier" => {
                while !p.eat_sym(';') {
                    if p.next().is_none() {
                        return p.err("expected `;`");
                    }
                }
            }
            "measure" | "reset" | "if" | "gate" | "opaque" | "U" | "CX" => {
                return Err(Error::Syntax { line, col, msg: format!("unsupported statement `{word}`") });
            }
            name => {
                let kind = GateKind::from_name(name).ok_or_else(|| Error::UnknownGate {
                    name: name.to_string(),
                    line,
                    col,
                })?;
                let mut params = Vec::new();
                if p.eat_sym('(') {
                    if !p.eat_sym(')') {
                        loop {
                            params.push(p.expr()?);
                            if p.eat_sym(')') {
                                break;
                            }
                            p.expect_sym(',')?;
                        }
                    }
                }
                if params.len() != kind.param_count() {
                    return Err(Error::Syntax {
                        line,
                        col,
                        msg: format!("`{name}` takes {} parameter(s), got {}", kind.param_count(), params.len()),
                    });
                }
                let (rname, size) = match &reg {
                    Some(r) => r.clone(),
                    None => return Err(Error::Syntax { line, col, msg: "gate before qreg declaration".into() }),
                };
                let mut qubits = Vec::new();
                loop {
                    let (arg, aline, acol) = p.ident()?;
                    if arg != rname {
                        return Err(Error::Syntax { line: aline, col: acol, msg: format!("unknown register `{arg}`") });
                    }
                    p.expect_sym('[')?;
                    let q = p.integer()?;
                    p.expect_sym(']')?;
                    if q >= size {
                        return Err(Error::QubitOutOfRange { qubit: q, num_qubits: size });
                    }
                    qubits.push(q);
                    if !p.eat_sym(',') {
                        break;
                    }
                }
                p.expect_sym(';')?;
                if qubits.len() != kind.arity() {
                    return Err(Error::Syntax {
                        line,
                        col,
                        msg: format!("`{name}` acts on {} qubit(s), got {}", kind.arity(), qubits.len()),
                    });
                }
                if qubits.len() == 2 && qubits[0] == qubits[1] {
                    return Err(Error::Syntax { line, col, msg: "repeated qubit argument".into() });
                }
                let param = params.first().map(|a| match a {
                    Angle::Value(v) => Param::Value(*v),
                    Angle::Expr(e) => Param::Expr(*e),
                });
                gates.push(Gate::new(GateId(gates.len() as u32), kind, &qubits, param));
            }
        }
    }
    let n = reg.map(|r| r.1).unwrap_or(0);
    Circuit::new(n, gates)
}

pub(crate) fn format_param(p: &Param) -> String {
    match p {
        Param::Value(v) => format!("{v:.16e}"),
        Param::Expr(e) => e.to_string(),
    }
}

/// Statements only (no header), one per line.
pub(crate) fn emit_gate_list(circuit: &Circuit, sep: &str) -> String {
    let mut out = String::new();
    for (i, g) in circuit.gates().iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(g.kind.name());
        if let Some(p) = &g.param {
            let _ = write!(out, "({})", format_param(p));
        }
        out.push(' ');
        let args: Vec<String> = g.qubits().iter().map(|q| format!("q[{q}]")).collect();
        out.push_str(&args.join(","));
        out.push(';');
    }
    out
}

/// Render a circuit as OpenQASM 2.0 with gates in stored topological order.
pub fn emit_qasm(circuit: &Circuit) -> String {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", circuit.num_qubits());
    if !circuit.is_empty() {
        out.push_str(&emit_gate_list(circuit, "\n"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{cost, CostMetric};

    #[test]
    fn parses_minimal_program() {
        let c = parse_qasm("qreg q[2]; h q[0]; cx q[0],q[1];").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(cost(&c, &CostMetric::Depth).unwrap(), 2.0);
        assert_eq!(cost(&c, &CostMetric::CnotCount).unwrap(), 1.0);
        assert_eq!(c.gate(1).qubits(), &[0, 1]);
    }

    #[test]
    fn unknown_gate_is_reported_with_position() {
        let err = parse_qasm("qreg q[1];\nbad q[0];").unwrap_err();
        match err {
            Error::UnknownGate { name, line, col } => {
                assert_eq!(name, "bad");
                assert_eq!((line, col), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_and_syntax_errors() {
        assert!(matches!(parse_qasm("qreg q[1]; h q[1];"), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(parse_qasm("qreg q[1]; h q[0]"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_qasm("qreg q[1]; measure q[0] -> c[0];"), Err(Error::Syntax { .. })));
        match parse_qasm("qreg q[2];\n  cx q[0] q[1];") {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn angle_expressions() {
        let c = parse_qasm("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\nrz(-pi/4) q[0];\nrz(3*pi/2) q[0];\nrz(0.5e-1) q[0];")
            .unwrap();
        let vals: Vec<f64> = c.gates().iter().map(|g| g.param.unwrap().value().unwrap()).collect();
        assert_eq!(vals, vec![-PI / 4.0, 3.0 * PI / 2.0, 0.05]);
    }

    #[test]
    fn empty_circuit_emits_header_only() {
        let text = emit_qasm(&Circuit::empty(1));
        assert_eq!(text, "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\n");
    }

    #[test]
    fn round_trip_is_lossless() {
        let src = "qreg q[2]; h q[0]; cx q[0],q[1]; rz(pi/2) q[1]; rz(0.1) q[0];";
        let c = parse_qasm(src).unwrap();
        let text = emit_qasm(&c);
        assert!(text.contains("rz(1.5707963267948966e0) q[1];"), "{text}");
        let back = parse_qasm(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical_hash(), c.canonical_hash());
    }

    #[test]
    fn symbolic_gate_lists() {
        let c = parse_gate_list("cx q[0],q[1]; rz(t0+t1) q[0]; rz(-t1) q[1];", 2).unwrap();
        assert_eq!(c.gate(1).param, Some(Param::Expr(SymExpr::sum(0, 1))));
        assert_eq!(c.gate(2).param, Some(Param::Expr(SymExpr::neg_symbol(1))));
        assert!(parse_qasm("qreg q[1]; rz(t0) q[0];").is_err());
        let text = emit_gate_list(&c, " ");
        assert_eq!(parse_gate_list(&text, 2).unwrap(), c);
    }
}
