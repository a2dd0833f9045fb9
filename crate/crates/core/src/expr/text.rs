//! Text form of expressions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := primary ('^' factor)?          right-associative
//! primary := number | '-' number | '-' primary
//!          | 'x' digits                     1-based variable
//!          | name '(' expr ')'              unary op: neg abs sqrt exp log sin cos recip square cube
//!          | '(' expr ')'
//! ```
//!
//! The printer parenthesizes exactly enough to reproduce the tree
//! structurally, so `parse_text(&to_text(e)) == e`.

use super::{BinaryOp, Expr, ExprError, UnaryOp};

pub fn to_text(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out);
    out
}

fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary(op, _, _) => op.precedence(),
        _ => 4,
    }
}

fn write_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Const(c) => {
            if c.is_sign_negative() {
                out.push_str(&format!("(-{})", -c));
            } else {
                out.push_str(&format!("{c}"));
            }
        }
        Expr::Var(i) => out.push_str(&format!("x{i}")),
        Expr::Unary(op, child) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(child, out);
            out.push(')');
        }
        Expr::Binary(op, left, right) => {
            let p = op.precedence();
            let is_pow = *op == BinaryOp::Pow;
            let left_paren = precedence(left) < p || (is_pow && precedence(left) == p);
            let right_paren = precedence(right) < p || (!is_pow && precedence(right) == p);
            write_operand(left, left_paren, out);
            if p == 1 {
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
            } else {
                out.push_str(op.symbol());
            }
            write_operand(right, right_paren, out);
        }
    }
}

fn write_operand(expr: &Expr, paren: bool, out: &mut String) {
    if paren {
        out.push('(');
        write_expr(expr, out);
        out.push(')');
    } else {
        write_expr(expr, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Token, usize)>, ExprError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let tok = lx.next_token()?;
            let done = tok.0 == Token::End;
            out.push(tok);
            if done {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<(Token, usize), ExprError> {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Token::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let bytes = self.src.as_bytes();
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let lexeme = &self.src[start..end];
            let value: f64 = lexeme.parse().map_err(|_| ExprError::Parse {
                position: start,
                message: format!("malformed number `{lexeme}`"),
            })?;
            self.pos = end;
            return Ok((Token::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let bytes = self.src.as_bytes();
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Token::Ident(self.src[start..end].to_string()), start));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok((Token::Sym(c), start));
        }
        Err(ExprError::Parse {
            position: start,
            message: format!("unexpected character `{c}`"),
        })
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.idx].0
    }

    fn position(&self) -> usize {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.idx].0.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        let message = match self.peek() {
            Token::End => format!("{} at end of input", message.into()),
            _ => message.into(),
        };
        Err(ExprError::Parse {
            position: self.position(),
            message,
        })
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ExprError> {
        if *self.peek() == Token::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Sym('+') => BinaryOp::Add,
                Token::Sym('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Token::Sym('*') => BinaryOp::Mul,
                Token::Sym('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Token::Sym('^') {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().clone() {
            Token::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Token::Sym('-') => {
                self.bump();
                if let Token::Num(v) = *self.peek() {
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
                Ok(Expr::unary(UnaryOp::Neg, self.primary()?))
            }
            Token::Sym('(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect_sym(')')?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        let index: usize = digits.parse().map_err(|_| ExprError::Parse {
                            position: self.position(),
                            message: format!("variable index too large in `{name}`"),
                        })?;
                        if index == 0 {
                            return self.error("variables are 1-based; `x0` is invalid");
                        }
                        self.bump();
                        return Ok(Expr::Var(index));
                    }
                }
                let Some(op) = UnaryOp::from_name(&name) else {
                    return self.error(format!("unknown function `{name}`"));
                };
                self.bump();
                self.expect_sym('(')?;
                let arg = self.expr()?;
                self.expect_sym(')')?;
                Ok(Expr::unary(op, arg))
            }
            _ => self.error("expected an operand"),
        }
    }
}

pub fn parse_text(src: &str) -> Result<Expr, ExprError> {
    let tokens = Lexer::tokenize(src)?;
    let mut parser = Parser { tokens, idx: 0 };
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return parser.error("unexpected trailing input");
    }
    Ok(expr)
}
