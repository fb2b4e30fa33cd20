//! Recursive-descent parser for the rule language:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := 'w' | 'x' | 'y' | literal | '(' expr ')' | '-' factor
//! ```

use std::fmt;

use super::{Operator, RuleExpression, Term, Terminal};

/// Syntax error with the 0-based character position it was detected at.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at position {}: {}", self.position, self.message)
    }
}

impl ParseError {
    /// Two-line diagnostic: the source and a caret under the error position.
    pub fn render(&self, source: &str) -> String {
        format!("{self}\n  {source}\n  {}^", " ".repeat(self.position))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Var(Terminal),
    Number(f64),
    Plus,
    Minus,
    Star,
    Open,
    Close,
    End,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn error<T>(&self, position: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position,
            message: message.into(),
        })
    }

    /// Returns the next token and the position it starts at.
    fn next(&mut self) -> Result<(Token, usize), ParseError> {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.chars.get(self.pos) else {
            return Ok((Token::End, start));
        };
        self.pos += 1;
        let token = match c {
            'w' => Token::Var(Terminal::W),
            'x' => Token::Var(Terminal::X),
            'y' => Token::Var(Terminal::Y),
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '(' => Token::Open,
            ')' => Token::Close,
            d if d.is_ascii_digit() => {
                self.pos = start;
                return self.number();
            }
            other => return self.error(start, format!("unexpected character '{other}'")),
        };
        Ok((token, start))
    }

    fn number(&mut self) -> Result<(Token, usize), ParseError> {
        let start = self.pos;
        let digits = |lexer: &mut Self| {
            let from = lexer.pos;
            while lexer.pos < lexer.chars.len() && lexer.chars[lexer.pos].is_ascii_digit() {
                lexer.pos += 1;
            }
            lexer.pos > from
        };
        digits(self);
        if self.chars.get(self.pos) == Some(&'.') {
            self.pos += 1;
            if !digits(self) {
                return self.error(self.pos, "expected digits after decimal point");
            }
        }
        if matches!(self.chars.get(self.pos), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.chars.get(self.pos), Some('+' | '-')) {
                self.pos += 1;
            }
            if !digits(self) {
                return self.error(self.pos, "expected exponent digits");
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(value) if value.is_finite() => Ok((Token::Number(value), start)),
            _ => self.error(start, format!("literal '{text}' is not a finite decimal")),
        }
    }
}

struct Parser {
    lexer: Lexer,
    current: Token,
    current_pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let (current, current_pos) = lexer.next()?;
        Ok(Self {
            lexer,
            current,
            current_pos,
        })
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let (token, pos) = self.lexer.next()?;
        self.current = token;
        self.current_pos = pos;
        Ok(())
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, ParseError> {
        let found = match &self.current {
            Token::End => "end of input".to_string(),
            Token::Var(Terminal::W) => "'w'".into(),
            Token::Var(Terminal::X) => "'x'".into(),
            Token::Var(Terminal::Y) => "'y'".into(),
            Token::Var(Terminal::Const(c)) | Token::Number(c) => format!("literal {c}"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::Open => "'('".into(),
            Token::Close => "')'".into(),
        };
        Err(ParseError {
            position: self.current_pos,
            message: format!("expected {expected}, found {found}"),
        })
    }

    fn expr(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.current {
                Token::Plus => Operator::Add,
                Token::Minus => Operator::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Term::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.factor()?;
        while self.current == Token::Star {
            self.advance()?;
            let rhs = self.factor()?;
            lhs = Term::Binary(Operator::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Term, ParseError> {
        match self.current.clone() {
            Token::Var(t) => {
                self.advance()?;
                Ok(Term::Leaf(t))
            }
            Token::Number(v) => {
                self.advance()?;
                Ok(Term::Leaf(Terminal::Const(v)))
            }
            Token::Open => {
                self.advance()?;
                let inner = self.expr()?;
                if self.current != Token::Close {
                    return self.unexpected("')'");
                }
                self.advance()?;
                Ok(inner)
            }
            Token::Minus => {
                self.advance()?;
                // negation is exact either way: literals absorb the sign,
                // everything else becomes -1.0 * e
                Ok(match self.factor()? {
                    Term::Leaf(Terminal::Const(v)) => Term::Leaf(Terminal::Const(-v)),
                    other => Term::Binary(
                        Operator::Mul,
                        Box::new(Term::Leaf(Terminal::Const(-1.0))),
                        Box::new(other),
                    ),
                })
            }
            _ => self.unexpected("'w', 'x', 'y', a number, '(' or '-'"),
        }
    }
}

/// Parses a rule kernel such as `"y*(x - w*y)"`.
pub fn parse_rule(source: &str) -> Result<RuleExpression, ParseError> {
    let mut parser = Parser::new(source)?;
    let term = parser.expr()?;
    if parser.current != Token::End {
        return parser.unexpected("an operator or end of input");
    }
    Ok(RuleExpression::from_term(&term))
}
