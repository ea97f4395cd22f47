//! Scalar math expressions over state variables `x1..xn` and time `t`.
//!
//! Expressions are parsed into an immutable AST, evaluated as plain `f64`,
//! and differentiated exactly with one forward-mode dual-number pass per
//! direction. The AST is shareable between threads after parsing.

mod eval;
mod parse;

pub use eval::{EvalError, EvalGrad};

use std::fmt;

/// Built-in scalar functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

/// Binary operators; `Pow` is right-associative, the rest left-associative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// One expression node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based state index; `Var(0)` is the source variable `x1`.
    Var(usize),
    Time,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with the state dimension it was checked
/// against. Immutable; safe to share between concurrent evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
    dimension: usize,
}

/// Parse errors carry the byte offset into the source text.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown symbol `{name}` at byte {position}")]
    UnknownSymbol { position: usize, name: String },
    #[error("variable x{index} exceeds dimension {dimension}")]
    DimensionExceeded {
        position: usize,
        index: usize,
        dimension: usize,
    },
}

/// Parse `text` as an expression over `x1..x<dimension>` and `t`.
pub fn parse(text: &str, dimension: usize) -> Result<ExprAst, ParseError> {
    parse::parse(text, dimension)
}

impl ExprAst {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Whether the expression references `t` anywhere.
    pub fn uses_time(&self) -> bool {
        fn rec(n: &Node) -> bool {
            match n {
                Node::Time => true,
                Node::Const(_) | Node::Var(_) => false,
                Node::Neg(c) | Node::Call(_, c) => rec(c),
                Node::Bin(_, l, r) => rec(l) || rec(r),
            }
        }
        rec(&self.root)
    }

    /// Evaluate at state `x` and time `t`.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        self.check_dim(x)?;
        eval::eval_value(&self.root, x, t)
    }

    /// Evaluate together with the exact gradient with respect to every
    /// state variable and to `t` (forward-mode duals, one pass per
    /// direction). `nonsmooth` is set when `abs`/`sign` was evaluated at 0
    /// (derivative reported as 0 by convention) or `sqrt` exactly at 0.
    pub fn eval_with_gradient(&self, x: &[f64], t: f64) -> Result<EvalGrad, EvalError> {
        self.check_dim(x)?;
        eval::eval_with_gradient(&self.root, x, t)
    }

    /// Directional derivative along `(dx, dt)` in a single dual pass.
    pub fn eval_directional(
        &self,
        x: &[f64],
        t: f64,
        dx: &[f64],
        dt: f64,
    ) -> Result<(f64, f64, bool), EvalError> {
        self.check_dim(x)?;
        if dx.len() != x.len() {
            return Err(EvalError::DimensionMismatch {
                expected: x.len(),
                got: dx.len(),
            });
        }
        eval::eval_directional(&self.root, x, t, dx, dt)
    }

    /// New AST `self ∘ other` over the common dimension.
    pub fn combine(&self, op: BinOp, other: &ExprAst) -> ExprAst {
        ExprAst {
            root: Node::Bin(op, Box::new(self.root.clone()), Box::new(other.root.clone())),
            dimension: self.dimension.max(other.dimension),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }
}

// Printing uses explicit parentheses wherever re-parsing would otherwise
// regroup the tree, so `parse(print(ast)) == ast` for any parser output.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

fn prec(n: &Node) -> u8 {
    match n {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        Node::Const(_) | Node::Var(_) | Node::Time | Node::Call(..) => 6,
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, n: &Node) -> fmt::Result {
            write!(f, "({n})")
        }
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Time => write!(f, "t"),
            Node::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Node::Neg(c) => {
                write!(f, "-")?;
                // Only `^` chains and atoms bind tighter than unary minus.
                if prec(c) < 4 {
                    paren(f, c)
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Bin(op, l, r) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    // Grammar only allows atoms left of `^`.
                    if prec(l) < 6 {
                        paren(f, l)?;
                    } else {
                        write!(f, "{l}")?;
                    }
                    write!(f, "{sym}")?;
                    // Right side is a factor: unary minus and `^` re-parse
                    // as written, anything looser needs parentheses.
                    if prec(r) < 3 {
                        paren(f, r)
                    } else {
                        write!(f, "{r}")
                    }
                } else {
                    if prec(l) < p {
                        paren(f, l)?;
                    } else {
                        write!(f, "{l}")?;
                    }
                    write!(f, "{sym}")?;
                    // Left-associative: an equal-precedence right child
                    // would regroup without parentheses.
                    if prec(r) <= p {
                        paren(f, r)
                    } else {
                        write!(f, "{r}")
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
