//! Minimal s-expression reader with source positions.
//!
//! Atoms are runs of non-delimiter characters; `;` starts a comment that runs
//! to the end of the line. Every node carries the 1-based line/column span of
//! its source text.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl Span {
    pub fn point(line: u32, column: u32) -> Span {
        Span {
            line,
            column,
            length: 1,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Span),
    List(Vec<Sexp>, Span),
}

impl Sexp {
    pub fn span(&self) -> Span {
        match self {
            Sexp::Atom(_, s) | Sexp::List(_, s) => *s,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a, _) => Some(a),
            Sexp::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Atom(..) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadError {
    pub message: String,
    pub span: Span,
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, ReadError> {
        self.skip_trivia();
        let start = Span::point(self.line, self.column);
        match self.chars.peek() {
            None => Ok(None),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        Some(')') => {
                            self.bump();
                            let mut span = start;
                            span.length = 1;
                            return Ok(Some(Sexp::List(items, span)));
                        }
                        None => {
                            return Err(ReadError {
                                message: "unclosed parenthesis".to_string(),
                                span: start,
                            })
                        }
                        _ => match self.read()? {
                            Some(item) => items.push(item),
                            None => {
                                return Err(ReadError {
                                    message: "unclosed parenthesis".to_string(),
                                    span: start,
                                })
                            }
                        },
                    }
                }
            }
            Some(')') => Err(ReadError {
                message: "unexpected ')'".to_string(),
                span: start,
            }),
            Some('|') => {
                // Pipe-quoted atom, SMT-LIB style: content is verbatim.
                self.bump();
                let mut atom = String::new();
                loop {
                    match self.bump() {
                        Some('|') => break,
                        Some(c) => atom.push(c),
                        None => {
                            return Err(ReadError {
                                message: "unterminated |symbol|".to_string(),
                                span: start,
                            })
                        }
                    }
                }
                let mut span = start;
                span.length = (atom.chars().count() + 2) as u32;
                Ok(Some(Sexp::Atom(atom, span)))
            }
            Some(_) => {
                let mut atom = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '|' {
                        break;
                    }
                    atom.push(c);
                    self.bump();
                }
                let mut span = start;
                span.length = atom.chars().count().max(1) as u32;
                Ok(Some(Sexp::Atom(atom, span)))
            }
        }
    }
}

/// Reads every top-level form in the text.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, ReadError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    while let Some(form) = reader.read()? {
        out.push(form);
    }
    Ok(out)
}
