//! Tokenizer and recursive descent parser for DAOLang source text.
//!
//! Statements terminate on `;` or newline (both occur in the wild), comments
//! run from `#` to end of line, and newlines inside parenthesized or braced
//! groups are ignored so long argument lists may wrap.

use std::fmt;

use thiserror::Error;

use crate::ast::{make_value, Address, Expr, Program, Statement, Value, ValueKind};

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Identifier,
    Integer,
    AddressLiteral,
    StringLiteral,
    KeywordNetwork,
    KeywordProtocol,
    Arrow,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Colon,
    Comma,
    Semicolon,
    Newline,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TokenKind::Identifier => "identifier",
            TokenKind::Integer => "integer",
            TokenKind::AddressLiteral => "address literal",
            TokenKind::StringLiteral => "string literal",
            TokenKind::KeywordNetwork => "`network`",
            TokenKind::KeywordProtocol => "`protocol`",
            TokenKind::Arrow => "`<-`",
            TokenKind::LParen => "`(`",
            TokenKind::RParen => "`)`",
            TokenKind::LBrace => "`{`",
            TokenKind::RBrace => "`}`",
            TokenKind::Colon => "`:`",
            TokenKind::Comma => "`,`",
            TokenKind::Semicolon => "`;`",
            TokenKind::Newline => "newline",
        };
        f.write_str(name)
    }
}

/// One lexeme with its exact source slice and position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub position: Position,
}

/// A positioned parse or lex diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
    pub position: Position,
    pub expected: Vec<TokenKind>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.position, self.message)?;
        if !self.expected.is_empty() {
            let names: Vec<String> = self.expected.iter().map(|k| k.to_string()).collect();
            write!(f, " (expected {})", names.join(" or "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at {position}: {message}")]
pub struct LexError {
    pub message: String,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {0}")]
pub struct SyntaxError(pub Diagnostic);

impl SyntaxError {
    pub fn diagnostic(&self) -> &Diagnostic {
        &self.0
    }
}

impl From<LexError> for SyntaxError {
    fn from(err: LexError) -> Self {
        SyntaxError(Diagnostic { message: err.message, position: err.position, expected: vec![] })
    }
}

/// Lexes source text. Comments and intra-line whitespace vanish; newlines
/// survive as statement terminators.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Lexer { chars: source.chars().peekable(), line: 1, column: 1, tokens: Vec::new() }
    }

    fn position(&self) -> Position {
        Position { line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.chars.next()?;
        if ch == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(ch)
    }

    fn push(&mut self, kind: TokenKind, lexeme: String, position: Position) {
        self.tokens.push(Token { kind, lexeme, position });
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while let Some(&ch) = self.chars.peek() {
            let position = self.position();
            match ch {
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '\n' => {
                    self.bump();
                    self.push(TokenKind::Newline, "\n".into(), position);
                }
                '#' => {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '(' | ')' | '{' | '}' | ':' | ',' | ';' => {
                    self.bump();
                    let kind = match ch {
                        '(' => TokenKind::LParen,
                        ')' => TokenKind::RParen,
                        '{' => TokenKind::LBrace,
                        '}' => TokenKind::RBrace,
                        ':' => TokenKind::Colon,
                        ',' => TokenKind::Comma,
                        _ => TokenKind::Semicolon,
                    };
                    self.push(kind, ch.to_string(), position);
                }
                '<' => {
                    self.bump();
                    if self.chars.peek() == Some(&'-') {
                        self.bump();
                        self.push(TokenKind::Arrow, "<-".into(), position);
                    } else {
                        return Err(LexError { message: "expected `<-`".into(), position });
                    }
                }
                '"' => self.lex_string(position)?,
                c if c.is_ascii_digit() => self.lex_number(position)?,
                c if c.is_ascii_alphabetic() || c == '_' => self.lex_identifier(position),
                other => {
                    return Err(LexError {
                        message: format!("illegal character {other:?}"),
                        position,
                    });
                }
            }
        }
        Ok(self.tokens)
    }

    fn lex_string(&mut self, position: Position) -> Result<(), LexError> {
        let mut lexeme = String::new();
        lexeme.push(self.bump().expect("opening quote"));
        loop {
            match self.chars.peek() {
                None | Some('\n') => {
                    return Err(LexError { message: "unterminated string".into(), position });
                }
                Some('"') => {
                    lexeme.push(self.bump().unwrap());
                    break;
                }
                Some('\\') => {
                    lexeme.push(self.bump().unwrap());
                    match self.chars.peek() {
                        Some('"' | '\\' | 'n' | 't' | 'r') => lexeme.push(self.bump().unwrap()),
                        Some(other) => {
                            let bad = *other;
                            return Err(LexError {
                                message: format!("unsupported escape \\{bad}"),
                                position: self.position(),
                            });
                        }
                        None => {
                            return Err(LexError { message: "unterminated string".into(), position });
                        }
                    }
                }
                Some(_) => lexeme.push(self.bump().unwrap()),
            }
        }
        self.push(TokenKind::StringLiteral, lexeme, position);
        Ok(())
    }

    fn lex_number(&mut self, position: Position) -> Result<(), LexError> {
        let mut lexeme = String::new();
        lexeme.push(self.bump().expect("digit"));
        let hex = lexeme == "0" && matches!(self.chars.peek(), Some('x' | 'X'));
        if hex {
            lexeme.push(self.bump().unwrap());
            while let Some(&c) = self.chars.peek() {
                if c.is_ascii_hexdigit() {
                    lexeme.push(self.bump().unwrap());
                } else {
                    break;
                }
            }
            if lexeme.len() == 2 {
                return Err(LexError { message: "hex literal needs digits".into(), position });
            }
        } else {
            while let Some(&c) = self.chars.peek() {
                if c.is_ascii_digit() {
                    lexeme.push(self.bump().unwrap());
                } else {
                    break;
                }
            }
        }
        // 0x + 40 hex digits is an address; every other hex width is a number
        let kind = if hex && lexeme.len() == 42 {
            TokenKind::AddressLiteral
        } else {
            TokenKind::Integer
        };
        self.push(kind, lexeme, position);
        Ok(())
    }

    fn lex_identifier(&mut self, position: Position) {
        let mut lexeme = String::new();
        lexeme.push(self.bump().expect("identifier start"));
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                lexeme.push(self.bump().unwrap());
            } else {
                break;
            }
        }
        let kind = match lexeme.as_str() {
            "network" => TokenKind::KeywordNetwork,
            "protocol" => TokenKind::KeywordProtocol,
            _ => TokenKind::Identifier,
        };
        self.push(kind, lexeme, position);
    }
}

/// Parses DAOLang source into a [`Program`]; fails on the first error.
pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0, depth: 0 }.parse_program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Nesting depth of `(`/`{`; newlines are skipped inside groups.
    depth: u32,
}

impl Parser {
    fn parse_program(mut self) -> Result<Program, SyntaxError> {
        let mut statements = Vec::new();
        loop {
            self.skip_terminators();
            if self.peek().is_none() {
                break;
            }
            self.parse_statement(&mut statements)?;
            self.expect_terminator()?;
        }
        Ok(Program { statements })
    }

    fn peek(&mut self) -> Option<&Token> {
        while self.depth > 0 && matches!(self.tokens.get(self.pos), Some(t) if t.kind == TokenKind::Newline)
        {
            self.pos += 1;
        }
        self.tokens.get(self.pos)
    }

    fn advance(&mut self) -> Option<Token> {
        self.peek()?;
        let token = self.tokens[self.pos].clone();
        self.pos += 1;
        match token.kind {
            TokenKind::LParen | TokenKind::LBrace => self.depth += 1,
            TokenKind::RParen | TokenKind::RBrace => self.depth = self.depth.saturating_sub(1),
            _ => {}
        }
        Some(token)
    }

    fn end_position(&self) -> Position {
        self.tokens
            .last()
            .map(|t| {
                if t.kind == TokenKind::Newline {
                    Position { line: t.position.line + 1, column: 1 }
                } else {
                    Position {
                        line: t.position.line,
                        column: t.position.column + t.lexeme.chars().count() as u32,
                    }
                }
            })
            .unwrap_or(Position { line: 1, column: 1 })
    }

    fn error(&mut self, message: &str, expected: Vec<TokenKind>) -> SyntaxError {
        let position = self.peek().map(|t| t.position).unwrap_or_else(|| self.end_position());
        SyntaxError(Diagnostic { message: message.to_string(), position, expected })
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, SyntaxError> {
        match self.peek() {
            Some(token) if token.kind == kind => Ok(self.advance().unwrap()),
            Some(token) => {
                let found = token.kind;
                Err(self.error(&format!("unexpected {found}"), vec![kind]))
            }
            None => Err(self.error("unexpected end of input", vec![kind])),
        }
    }

    fn skip_terminators(&mut self) {
        while matches!(
            self.peek().map(|t| t.kind),
            Some(TokenKind::Semicolon | TokenKind::Newline)
        ) {
            self.advance();
        }
    }

    fn expect_terminator(&mut self) -> Result<(), SyntaxError> {
        match self.peek().map(|t| t.kind) {
            None | Some(TokenKind::Semicolon | TokenKind::Newline) => {
                if self.peek().is_some() {
                    self.advance();
                }
                Ok(())
            }
            Some(found) => Err(self.error(
                &format!("unexpected {found} after statement"),
                vec![TokenKind::Semicolon, TokenKind::Newline],
            )),
        }
    }

    fn peek_second_kind(&mut self) -> Option<TokenKind> {
        self.peek()?;
        let mut idx = self.pos + 1;
        while matches!(self.tokens.get(idx), Some(t) if t.kind == TokenKind::Newline && self.depth > 0)
        {
            idx += 1;
        }
        self.tokens.get(idx).map(|t| t.kind)
    }

    fn parse_statement(&mut self, out: &mut Vec<Statement>) -> Result<(), SyntaxError> {
        let is_identifier = matches!(self.peek().map(|t| t.kind), Some(TokenKind::Identifier));
        if is_identifier {
            match self.peek_second_kind() {
                Some(TokenKind::Arrow) => {
                    let name = self.advance().unwrap().lexeme;
                    self.advance(); // arrow
                    let value = self.parse_expr()?;
                    out.push(Statement::Assignment { name, value });
                    return Ok(());
                }
                Some(TokenKind::LParen) => {
                    return self.parse_transaction_group(out);
                }
                _ => {}
            }
        }
        let expr = self.parse_expr()?;
        out.push(Statement::Expression(expr));
        Ok(())
    }

    /// `net(proto:action(args), proto:action(args), ...)` — one statement
    /// per action call, all sharing the network reference.
    fn parse_transaction_group(&mut self, out: &mut Vec<Statement>) -> Result<(), SyntaxError> {
        let network = self.advance().unwrap().lexeme;
        self.expect(TokenKind::LParen)?;
        loop {
            let protocol = self.expect(TokenKind::Identifier)?.lexeme;
            self.expect(TokenKind::Colon)?;
            let action = self.expect(TokenKind::Identifier)?.lexeme;
            self.expect(TokenKind::LParen)?;
            let mut args = Vec::new();
            if !matches!(self.peek().map(|t| t.kind), Some(TokenKind::RParen)) {
                loop {
                    args.push(self.parse_expr()?);
                    if matches!(self.peek().map(|t| t.kind), Some(TokenKind::Comma)) {
                        self.advance();
                    } else {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RParen)?;
            out.push(Statement::Transaction {
                network: network.clone(),
                protocol,
                action,
                args,
            });
            match self.peek().map(|t| t.kind) {
                Some(TokenKind::Comma) => {
                    self.advance();
                }
                _ => break,
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(())
    }

    fn parse_expr(&mut self) -> Result<Expr, SyntaxError> {
        let Some(token) = self.peek() else {
            return Err(self.error(
                "expected expression",
                vec![TokenKind::Identifier, TokenKind::Integer],
            ));
        };
        match token.kind {
            TokenKind::Identifier => {
                let lexeme = self.advance().unwrap().lexeme;
                Ok(match lexeme.as_str() {
                    "true" => Expr::Constant(Value::Bool(true)),
                    "false" => Expr::Constant(Value::Bool(false)),
                    _ => Expr::Identifier(lexeme),
                })
            }
            TokenKind::Integer => {
                let token = self.advance().unwrap();
                // surface integer literals default to uint256
                let value = make_value(ValueKind::Uint(256), &token.lexeme).map_err(|err| {
                    SyntaxError(Diagnostic {
                        message: err.to_string(),
                        position: token.position,
                        expected: vec![],
                    })
                })?;
                Ok(Expr::Constant(value))
            }
            TokenKind::AddressLiteral => {
                let token = self.advance().unwrap();
                let address = Address::parse(&token.lexeme).map_err(|err| {
                    SyntaxError(Diagnostic {
                        message: err.to_string(),
                        position: token.position,
                        expected: vec![],
                    })
                })?;
                Ok(Expr::Constant(Value::Address(address)))
            }
            TokenKind::StringLiteral => {
                let token = self.advance().unwrap();
                let value = make_value(ValueKind::String, &token.lexeme).map_err(|err| {
                    SyntaxError(Diagnostic {
                        message: err.to_string(),
                        position: token.position,
                        expected: vec![],
                    })
                })?;
                Ok(Expr::Constant(value))
            }
            TokenKind::KeywordNetwork => self.parse_network(),
            TokenKind::KeywordProtocol => self.parse_protocol(),
            TokenKind::LBrace => self.parse_object(),
            other => {
                let message = format!("unexpected {other}, expected expression");
                Err(self.error(&message, vec![]))
            }
        }
    }

    fn parse_network(&mut self) -> Result<Expr, SyntaxError> {
        self.advance();
        self.expect(TokenKind::LBrace)?;
        let token = self.expect(TokenKind::Integer)?;
        let chain_id: u64 = token.lexeme.parse().map_err(|_| {
            SyntaxError(Diagnostic {
                message: format!("chain id {} does not fit in 64 bits", token.lexeme),
                position: token.position,
                expected: vec![],
            })
        })?;
        if chain_id == 0 {
            return Err(SyntaxError(Diagnostic {
                message: "chain id must be positive".into(),
                position: token.position,
                expected: vec![],
            }));
        }
        self.expect(TokenKind::RBrace)?;
        Ok(Expr::Network(chain_id))
    }

    fn parse_protocol(&mut self) -> Result<Expr, SyntaxError> {
        self.advance();
        self.expect(TokenKind::LBrace)?;
        let mut addresses = Vec::new();
        loop {
            let token = self.expect(TokenKind::AddressLiteral)?;
            let address = Address::parse(&token.lexeme).map_err(|err| {
                SyntaxError(Diagnostic {
                    message: err.to_string(),
                    position: token.position,
                    expected: vec![],
                })
            })?;
            addresses.push(address);
            if matches!(self.peek().map(|t| t.kind), Some(TokenKind::Comma)) {
                self.advance();
            } else {
                break;
            }
        }
        self.expect(TokenKind::RBrace)?;
        Ok(Expr::Protocol(addresses))
    }

    fn parse_object(&mut self) -> Result<Expr, SyntaxError> {
        self.advance(); // `{`
        let mut pairs: Vec<(String, Expr)> = Vec::new();
        if !matches!(self.peek().map(|t| t.kind), Some(TokenKind::RBrace)) {
            loop {
                let key_token = self.expect(TokenKind::Identifier)?;
                if pairs.iter().any(|(key, _)| *key == key_token.lexeme) {
                    return Err(SyntaxError(Diagnostic {
                        message: format!("duplicate object key {:?}", key_token.lexeme),
                        position: key_token.position,
                        expected: vec![],
                    }));
                }
                self.expect(TokenKind::Colon)?;
                let value = self.parse_expr()?;
                pairs.push((key_token.lexeme, value));
                if matches!(self.peek().map(|t| t.kind), Some(TokenKind::Comma)) {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(TokenKind::RBrace)?;
        Ok(Expr::Object(pairs))
    }
}
