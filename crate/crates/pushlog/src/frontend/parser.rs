//! Hand-written recursive-descent parser for the Datalog dialect.
//!
//! Grammar sketch:
//!
//! ```text
//! program  := (edb_decl | clause)*
//! edb_decl := ".edb" ident "(" type ("," type)* ")" [ "indexed" "(" ident+ ")" ]
//! clause   := literal [ ":-" literal ("," literal)* ] "."
//! literal  := ident "(" term ("," term)* ")"
//! term     := VARIABLE | INTEGER | ident | STRING
//! ```
//!
//! `%` starts a line comment. Variables match `[A-Z][A-Za-z0-9_]*`, lowercase
//! identifiers are symbolic string constants, quoted strings and (signed)
//! integers are literals of type string and int.

use std::collections::HashMap;
use std::fmt;

use crate::storage::BindingPattern;
use crate::value::{ColType, Value};

use super::{EdbDecl, GroundFact, Literal, Program, Rule, Term, ANSWER_PRED};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Str(String),
    Directive(String),
    LParen,
    RParen,
    Comma,
    Dot,
    ColonDash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Var(s) => format!("variable {s:?}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Directive(s) => format!("directive .{s}"),
            Tok::LParen => "'('".to_string(),
            Tok::RParen => "')'".to_string(),
            Tok::Comma => "','".to_string(),
            Tok::Dot => "'.'".to_string(),
            Tok::ColonDash => "':-'".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, line: usize, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws_and_comments(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b'%' {
                while let Some(c) = self.peek() {
                    self.bump();
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn lex_word(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws_and_comments();
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'.' => {
                    self.bump();
                    // `.edb` style directives; a clause-terminating dot must
                    // be followed by whitespace, a comment, or end of input.
                    if self.peek().is_some_and(|c| c.is_ascii_lowercase()) {
                        Tok::Directive(self.lex_word())
                    } else {
                        Tok::Dot
                    }
                }
                b':' => {
                    self.bump();
                    if self.peek() == Some(b'-') {
                        self.bump();
                        Tok::ColonDash
                    } else {
                        return Err(self.err(line, col, "expected ':-'"));
                    }
                }
                b'"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            None | Some(b'\n') => {
                                return Err(self.err(line, col, "unterminated string literal"))
                            }
                            Some(b'"') => break,
                            Some(b'\\') => match self.bump() {
                                Some(b'"') => s.push('"'),
                                Some(b'\\') => s.push('\\'),
                                _ => return Err(self.err(line, col, "invalid escape in string")),
                            },
                            Some(other) => s.push(other as char),
                        }
                    }
                    Tok::Str(s)
                }
                b'-' | b'0'..=b'9' => {
                    let negative = c == b'-';
                    if negative {
                        self.bump();
                        if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            return Err(self.err(line, col, "expected digits after '-'"));
                        }
                    }
                    let word = self.lex_word();
                    let n: i64 = word
                        .parse()
                        .map_err(|_| self.err(line, col, format!("invalid integer {word:?}")))?;
                    Tok::Int(if negative { -n } else { n })
                }
                c if c.is_ascii_lowercase() => Tok::Ident(self.lex_word()),
                c if c.is_ascii_uppercase() => Tok::Var(self.lex_word()),
                other => {
                    return Err(self.err(line, col, format!("unexpected character {:?}", other as char)))
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    i: usize,
    /// Predicate name -> (arity, rule_no or 0 for declarations) for arity checks.
    arities: HashMap<String, usize>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> (usize, usize) {
        (self.toks[self.i].1, self.toks[self.i].2)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.pos();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn check_arity(&mut self, predicate: &str, arity: usize) -> Result<(), ParseError> {
        match self.arities.get(predicate) {
            Some(&known) if known != arity => Err(self.err_here(format!(
                "arity conflict: {predicate} used with {arity} argument(s), previously {known}"
            ))),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(predicate.to_string(), arity);
                Ok(())
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(v))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Term::Const(Value::Str(s)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Value::Str(s)))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Term::Const(Value::Int(n)))
            }
            other => Err(self.err_here(format!("expected term, found {}", other.describe()))),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let predicate = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        self.check_arity(&predicate, args.len())?;
        Ok(Literal { predicate, args })
    }

    fn edb_decl(&mut self) -> Result<EdbDecl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut types = Vec::new();
        loop {
            let (line, col) = self.pos();
            let word = self.ident()?;
            match word.as_str() {
                "int" => types.push(ColType::Int),
                "string" => types.push(ColType::Str),
                other => {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("unknown column type {other:?} (expected int or string)"),
                    })
                }
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        self.check_arity(&name, types.len())?;

        let mut patterns = Vec::new();
        if *self.peek() == Tok::Ident("indexed".to_string()) {
            self.bump();
            self.expect(Tok::LParen)?;
            loop {
                let (line, col) = self.pos();
                let word = self.ident()?;
                let pattern = BindingPattern::parse(&word)
                    .map_err(|e| ParseError { line, col, message: e })?;
                if pattern.arity() != types.len() {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!(
                            "binding pattern {word} does not match arity {} of {name}",
                            types.len()
                        ),
                    });
                }
                patterns.push(pattern);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(EdbDecl {
            name,
            types,
            patterns,
        })
    }
}

/// Parse a program. Clauses are numbered in textual order starting at 1.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        i: 0,
        arities: HashMap::new(),
    };

    let mut program = Program {
        rules: Vec::new(),
        idb_facts: Vec::new(),
        edb: std::collections::BTreeMap::new(),
        answer_pred: ANSWER_PRED.to_string(),
    };
    let mut next_clause = 1u32;

    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Directive(word) => {
                let (line, col) = p.pos();
                p.bump();
                if word != "edb" {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("unknown directive .{word}"),
                    });
                }
                let decl = p.edb_decl()?;
                if program.edb.contains_key(&decl.name) {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("duplicate .edb declaration for {}", decl.name),
                    });
                }
                program.edb.insert(decl.name.clone(), decl);
            }
            Tok::Ident(_) => {
                let head_pos = p.pos();
                let head = p.literal()?;
                let mut body = Vec::new();
                if *p.peek() == Tok::ColonDash {
                    p.bump();
                    loop {
                        let (line, col) = p.pos();
                        let lit = p.literal()?;
                        if lit.predicate == program.answer_pred {
                            return Err(ParseError {
                                line,
                                col,
                                message: format!(
                                    "{} may only occur in rule heads",
                                    program.answer_pred
                                ),
                            });
                        }
                        body.push(lit);
                        if *p.peek() == Tok::Comma {
                            p.bump();
                        } else {
                            break;
                        }
                    }
                }
                p.expect(Tok::Dot)?;

                let rule_no = next_clause;
                next_clause += 1;
                if body.is_empty() {
                    // Ground heads become IDB facts; heads with variables are
                    // kept as body-less rules so validation can flag them.
                    let consts: Option<Vec<Value>> =
                        head.args.iter().map(|t| t.as_const().cloned()).collect();
                    match consts {
                        Some(values) => program.idb_facts.push(GroundFact {
                            rule_no,
                            predicate: head.predicate,
                            values,
                        }),
                        None => program.rules.push(Rule {
                            rule_no,
                            head,
                            body,
                        }),
                    }
                } else {
                    let _ = head_pos;
                    program.rules.push(Rule {
                        rule_no,
                        head,
                        body,
                    });
                }
            }
            other => {
                return Err(p.err_here(format!(
                    "expected a clause or .edb declaration, found {}",
                    other.describe()
                )))
            }
        }
    }

    Ok(program)
}
