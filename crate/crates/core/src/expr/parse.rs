//! Recursive-descent parser with standard precedence:
//! `^` (right-assoc) > unary `-` > `*` `/` > `+` `-`.

use super::{BinOp, ExprAst, Func, Node, ParseError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let src = text.as_bytes();
    let mut pos = 0usize;
    let mut out = Vec::new();
    while pos < src.len() {
        let c = src[pos];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
            b'+' => {
                out.push((Tok::Plus, pos));
                pos += 1;
            }
            b'-' => {
                out.push((Tok::Minus, pos));
                pos += 1;
            }
            b'*' => {
                out.push((Tok::Star, pos));
                pos += 1;
            }
            b'/' => {
                out.push((Tok::Slash, pos));
                pos += 1;
            }
            b'^' => {
                out.push((Tok::Caret, pos));
                pos += 1;
            }
            b'(' => {
                out.push((Tok::LParen, pos));
                pos += 1;
            }
            b')' => {
                out.push((Tok::RParen, pos));
                pos += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = pos;
                while pos < src.len() && (src[pos].is_ascii_digit() || src[pos] == b'.') {
                    pos += 1;
                }
                // Optional exponent part.
                if pos < src.len() && (src[pos] == b'e' || src[pos] == b'E') {
                    let mut probe = pos + 1;
                    if probe < src.len() && (src[probe] == b'+' || src[probe] == b'-') {
                        probe += 1;
                    }
                    if probe < src.len() && src[probe].is_ascii_digit() {
                        pos = probe;
                        while pos < src.len() && src[pos].is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let lit = &text[start..pos];
                let value: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    message: format!("invalid number literal `{lit}`"),
                })?;
                out.push((Tok::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = pos;
                while pos < src.len()
                    && (src[pos].is_ascii_alphanumeric() || src[pos] == b'_')
                {
                    pos += 1;
                }
                out.push((Tok::Ident(text[start..pos].to_string()), start));
            }
            _ => {
                return Err(ParseError::Syntax {
                    position: pos,
                    message: format!("unexpected character `{}`", text[pos..].chars().next().unwrap()),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    dimension: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        self.idx += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError::Syntax {
                position: pos,
                message: format!("expected {what}"),
            }),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := factor (('*'|'/') factor)*
    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // factor := '-' factor | power
    fn factor(&mut self) -> Result<Node, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.factor()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    // power := atom ('^' factor)?   (right-associative through factor)
    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let exp = self.factor()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    // atom := number | ident '(' expr ')' | ident | '(' expr ')'
    fn atom(&mut self) -> Result<Node, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => self.ident(name, pos),
            _ => Err(ParseError::Syntax {
                position: pos,
                message: "expected number, variable, function call, or `(`".to_string(),
            }),
        }
    }

    fn ident(&mut self, name: String, pos: usize) -> Result<Node, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(Tok::LParen, &format!("`(` after function `{name}`"))?;
            let arg = self.expr()?;
            self.expect(Tok::RParen, "closing `)`")?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if name == "t" {
            return Ok(Node::Time);
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ParseError::Syntax {
                    position: pos,
                    message: format!("variable index `{digits}` out of range"),
                })?;
                if index == 0 || index > self.dimension {
                    return Err(ParseError::DimensionExceeded {
                        position: pos,
                        index,
                        dimension: self.dimension,
                    });
                }
                return Ok(Node::Var(index - 1));
            }
        }
        Err(ParseError::UnknownSymbol {
            position: pos,
            name,
        })
    }
}

pub(super) fn parse(text: &str, dimension: usize) -> Result<ExprAst, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            position: 0,
            message: "empty expression".to_string(),
        });
    }
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        idx: 0,
        dimension,
        end: text.len(),
    };
    let root = parser.expr()?;
    if parser.idx != parser.toks.len() {
        return Err(ParseError::Syntax {
            position: parser.pos(),
            message: "trailing input after expression".to_string(),
        });
    }
    Ok(ExprAst { root, dimension })
}
