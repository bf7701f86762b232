use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::{
    AdviceRule, AspectOfAssembly, FilterOp, MetadataFilter, OperatorTree, Pattern, PointcutRule,
    PortExpr,
};
use crate::assembly::Value;

/// Every keyword the language knows. There is deliberately no keyword for
/// negation or for removing components or bindings.
pub const KEYWORDS: &[&str] = &[
    "Pointcut", "Advice", "schema", "if", "else", "nop", "call", "delegate", "true", "false",
];

/// Every punctuation token the lexer produces (patterns are lexed as one
/// raw `/…/` token).
pub const PUNCTUATION: &[&str] = &[
    ":=", "->", "||", ":", ";", ",", "(", ")", "{", "}", ".", "^", "=", "<", ">", "&", "@", "/",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax {
        expected: Vec<String>,
        found: String,
    },
    UnboundVariable(String),
    NegationRejected,
    DuplicateVariable(String),
    DuplicateLocal(String),
    ParamMismatch {
        params: Vec<String>,
        variables: Vec<String>,
    },
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => {
                write!(
                    f,
                    "syntax error: expected {}, found {found}",
                    expected.join(" or ")
                )
            }
            ParseErrorKind::UnboundVariable(v) => write!(
                f,
                "`{v}` is neither a pointcut variable nor an instantiated component"
            ),
            ParseErrorKind::NegationRejected => {
                write!(f, "negation is not expressible in pointcuts or advices")
            }
            ParseErrorKind::DuplicateVariable(v) => {
                write!(f, "pointcut variable `{v}` defined twice")
            }
            ParseErrorKind::DuplicateLocal(v) => write!(f, "component `{v}` instantiated twice"),
            ParseErrorKind::ParamMismatch { params, variables } => write!(
                f,
                "schema parameters ({}) differ from pointcut variables ({})",
                params.join(", "),
                variables.join(", ")
            ),
            ParseErrorKind::Pattern(msg) => write!(f, "bad pattern: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Pattern(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "'{s}'"),
            Tok::Num(n) => write!(f, "{n}"),
            Tok::Pattern(p) => write!(f, "/{p}/"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line_no = lineno + 1;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0;
        let err = |col: usize, kind: ParseErrorKind| ParseError {
            kind,
            line: line_no,
            col,
        };
        while i < chars.len() {
            let (byte, c) = chars[i];
            let col = i + 1;
            let next = chars.get(i + 1).map(|&(_, c)| c);
            let mut push = |tok: Tok| {
                out.push(Token {
                    tok,
                    line: line_no,
                    col,
                })
            };
            match c {
                c if c.is_whitespace() => i += 1,
                '#' => break,
                '!' | '~' | '¬' => return Err(err(col, ParseErrorKind::NegationRejected)),
                '/' => {
                    let rest = &line[byte + 1..];
                    let Some(end) = rest.find('/') else {
                        return Err(err(
                            col,
                            ParseErrorKind::Pattern("unterminated pattern".into()),
                        ));
                    };
                    push(Tok::Pattern(rest[..end].to_string()));
                    i += rest[..end].chars().count() + 2;
                }
                '\'' | '"' => {
                    let rest = &line[byte + 1..];
                    let Some(end) = rest.find(c) else {
                        return Err(err(
                            col,
                            ParseErrorKind::Syntax {
                                expected: vec![format!("closing {c}")],
                                found: "end of line".into(),
                            },
                        ));
                    };
                    push(Tok::Str(rest[..end].to_string()));
                    i += rest[..end].chars().count() + 2;
                }
                ':' if next == Some('=') => {
                    push(Tok::Sym(":="));
                    i += 2;
                }
                '-' if next == Some('>') => {
                    push(Tok::Sym("->"));
                    i += 2;
                }
                '|' if next == Some('|') => {
                    push(Tok::Sym("||"));
                    i += 2;
                }
                c if c.is_ascii_digit()
                    || (c == '-' && next.is_some_and(|n| n.is_ascii_digit())) =>
                {
                    let start = i;
                    i += 1;
                    while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                    let n = text.parse::<f64>().map_err(|_| {
                        err(
                            col,
                            ParseErrorKind::Syntax {
                                expected: vec!["number".into()],
                                found: text.clone(),
                            },
                        )
                    })?;
                    push(Tok::Num(n));
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                    push(Tok::Ident(text));
                }
                _ => {
                    let sym = PUNCTUATION
                        .iter()
                        .find(|s| s.len() == 1 && s.starts_with(c) && **s != "/");
                    match sym {
                        Some(s) => {
                            push(Tok::Sym(s));
                            i += 1;
                        }
                        None => {
                            return Err(err(
                                col,
                                ParseErrorKind::Syntax {
                                    expected: vec!["token".into()],
                                    found: format!("`{c}`"),
                                },
                            ))
                        }
                    }
                }
            }
        }
    }
    let line = src.lines().count().max(1);
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: src.lines().last().map_or(1, |l| l.chars().count() + 1),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Every name used in a port expression, with its position.
    uses: Vec<(String, bool, usize, usize)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            uses: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let (line, col) = self.here();
        let found = self.peek().to_string();
        if matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case("not")) {
            return Err(ParseError {
                kind: ParseErrorKind::NegationRejected,
                line,
                col,
            });
        }
        Err(ParseError {
            kind: ParseErrorKind::Syntax {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found,
            },
            line,
            col,
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn aspect(&mut self) -> PResult<AspectOfAssembly> {
        let mut pointcut = Vec::new();
        if self.is_kw("Pointcut") {
            self.bump();
            self.eat_sym(":");
            while !self.is_kw("Advice") {
                pointcut.push(self.pointcut_rule()?);
            }
        }
        self.expect_kw("Advice")?;
        self.expect_sym(":")?;
        self.expect_kw("schema")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            params.push(self.ident()?);
            while self.eat_sym(",") {
                params.push(self.ident()?);
            }
        }
        self.expect_sym(")")?;
        self.expect_sym(":")?;
        let mut rules = Vec::new();
        while *self.peek() != Tok::Eof {
            rules.push(self.advice_rule()?);
        }
        if rules.is_empty() {
            return self.error(&["advice rule"]);
        }
        Ok(AspectOfAssembly {
            name,
            namespace: None,
            pointcut,
            advice_params: params,
            rules,
        })
    }

    fn pointcut_rule(&mut self) -> PResult<PointcutRule> {
        let variable = self.ident()?;
        self.expect_sym(":=")?;
        let tok = self.bump();
        let Tok::Pattern(text) = tok.tok else {
            self.pos -= 1;
            return self.error(&["/pattern/"]);
        };
        let (pattern, filters) =
            parse_pattern_with_filters(&text).map_err(|(col, msg)| ParseError {
                kind: ParseErrorKind::Pattern(msg),
                line: tok.line,
                col: tok.col + 1 + col,
            })?;
        Ok(PointcutRule {
            variable,
            pattern,
            filters,
        })
    }

    fn advice_rule(&mut self) -> PResult<AdviceRule> {
        let is_instantiation =
            matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym(":"));
        if is_instantiation {
            let local_name = self.ident()?;
            self.expect_sym(":")?;
            let type_name = match self.bump().tok {
                Tok::Str(s) => s,
                _ => {
                    self.pos -= 1;
                    return self.error(&["quoted type name"]);
                }
            };
            let mut init_props = BTreeMap::new();
            if self.eat_sym("(") {
                loop {
                    let key = self.ident()?;
                    self.expect_sym("=")?;
                    let value = self.value()?;
                    init_props.insert(key, value);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(")")?;
            }
            self.eat_sym(";");
            return Ok(AdviceRule::Instantiate {
                local_name,
                type_name,
                init_props,
            });
        }
        let lhs = self.port_expr()?;
        self.expect_sym("->")?;
        self.expect_sym("(")?;
        let tree = self.op_expr()?;
        self.expect_sym(")")?;
        self.eat_sym(";");
        Ok(if lhs.required {
            AdviceRule::Link { from: lhs, tree }
        } else {
            AdviceRule::Rewrite { target: lhs, tree }
        })
    }

    fn value(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Value::Num(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Value::Str(s))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Value::Bool(s == "true"))
            }
            _ => self.error(&["number", "quoted string", "boolean"]),
        }
    }

    fn port_expr(&mut self) -> PResult<PortExpr> {
        let (line, col) = self.here();
        let name = self.ident()?;
        let mut expr = PortExpr::var(name.clone());
        if self.eat_sym(".") {
            expr.required = self.eat_sym("^");
            expr.port = Some(self.ident()?);
        }
        self.uses.push((name, expr.port.is_some(), line, col));
        Ok(expr)
    }

    fn op_expr(&mut self) -> PResult<OperatorTree> {
        let mut items = vec![self.seq_expr()?];
        while self.eat_sym("||") {
            items.push(self.seq_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            OperatorTree::Par(items)
        })
    }

    fn seq_expr(&mut self) -> PResult<OperatorTree> {
        let mut items = vec![self.primary()?];
        while self.eat_sym(";") {
            items.push(self.primary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            OperatorTree::Seq(items)
        })
    }

    fn primary(&mut self) -> PResult<OperatorTree> {
        if self.is_kw("if") {
            self.bump();
            self.expect_sym("(")?;
            let cond = self.port_expr()?;
            self.expect_sym(")")?;
            self.expect_sym("{")?;
            let then = self.op_expr()?;
            self.expect_sym("}")?;
            self.expect_kw("else")?;
            self.expect_sym("{")?;
            let els = self.op_expr()?;
            self.expect_sym("}")?;
            return Ok(OperatorTree::if_(cond, then, els));
        }
        if self.is_kw("nop") {
            self.bump();
            return Ok(OperatorTree::Nop);
        }
        if self.is_kw("call") {
            self.bump();
            return Ok(OperatorTree::Call);
        }
        if self.is_kw("delegate") {
            self.bump();
            self.expect_sym("(")?;
            let inner = self.op_expr()?;
            self.expect_sym(")")?;
            return Ok(OperatorTree::delegate(inner));
        }
        if self.eat_sym("(") {
            let inner = self.op_expr()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        if matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str())) {
            return Ok(OperatorTree::Leaf(self.port_expr()?));
        }
        self.error(&["`if`", "`nop`", "`call`", "`delegate`", "`(`", "port"])
    }

    fn finish(&self) -> PResult<()> {
        if *self.peek() != Tok::Eof {
            return self.error(&["end of input"]);
        }
        Ok(())
    }
}

/// Parses `comp`, `comp.port`, `comp(filters)` or `comp(filters).port`.
fn parse_pattern_with_filters(
    text: &str,
) -> Result<(Pattern, Vec<MetadataFilter>), (usize, String)> {
    let mut depth = 0usize;
    let mut open = None;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            '(' if depth == 0 => {
                open = Some(i);
                break;
            }
            _ => {}
        }
    }
    let Some(open) = open else {
        return Ok((Pattern::parse_body(text, 0)?, Vec::new()));
    };
    let close = text[open..]
        .find(')')
        .map(|k| open + k)
        .ok_or((open, "unterminated filter list".to_string()))?;
    let filters = parse_filters(&text[open + 1..close], open + 1)?;
    let comp = &text[..open];
    let tail = &text[close + 1..];
    let combined = if tail.is_empty() {
        comp.to_string()
    } else if tail.starts_with('.') {
        format!("{comp}{tail}")
    } else {
        return Err((close + 1, "expected `.` after filters".into()));
    };
    let comp = if comp.is_empty() { "*" } else { comp };
    let combined = if combined.starts_with('.') || combined.is_empty() {
        format!("{comp}{combined}")
    } else {
        combined
    };
    Ok((Pattern::parse_body(&combined, 0)?, filters))
}

fn parse_filters(text: &str, offset: usize) -> Result<Vec<MetadataFilter>, (usize, String)> {
    let mut out = Vec::new();
    let mut start = 0;
    for part in text.split('&') {
        let col = offset + start;
        start += part.len() + 1;
        let part = part.trim();
        let body = part.strip_prefix('@').unwrap_or(part).trim();
        if body.starts_with("not ") || body.contains("!=") {
            return Err((col, "negation is not expressible".into()));
        }
        let Some(op_at) = body.find(['=', '<', '>']) else {
            return Err((col, format!("filter `{part}` needs =, < or >")));
        };
        let key = body[..op_at].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err((col, format!("bad filter key `{key}`")));
        }
        let op = match &body[op_at..op_at + 1] {
            "=" => FilterOp::Eq,
            "<" => FilterOp::Lt,
            _ => FilterOp::Gt,
        };
        let raw = body[op_at + 1..].trim();
        let unquoted = raw.trim_matches(|c| c == '\'' || c == '"');
        let value = match raw.parse::<f64>() {
            Ok(n) => Value::Num(n),
            Err(_) if op != FilterOp::Eq => {
                return Err((col, "`<` and `>` need a numeric value".into()))
            }
            Err(_) if unquoted.is_empty() => return Err((col, "missing filter value".into())),
            Err(_) => Value::Str(unquoted.to_string()),
        };
        out.push(MetadataFilter {
            key: key.to_string(),
            op,
            value,
        });
    }
    Ok(out)
}

fn check(aa: &AspectOfAssembly, uses: &[(String, bool, usize, usize)]) -> PResult<()> {
    let at = |kind, (line, col): (usize, usize)| Err(ParseError { kind, line, col });
    let mut vars = BTreeSet::new();
    for r in &aa.pointcut {
        if !vars.insert(r.variable.as_str()) {
            return at(
                ParseErrorKind::DuplicateVariable(r.variable.clone()),
                (1, 1),
            );
        }
    }
    let params: BTreeSet<&str> = aa.advice_params.iter().map(String::as_str).collect();
    if params != vars || params.len() != aa.advice_params.len() {
        return at(
            ParseErrorKind::ParamMismatch {
                params: aa.advice_params.clone(),
                variables: aa.pointcut.iter().map(|r| r.variable.clone()).collect(),
            },
            (1, 1),
        );
    }
    let mut locals = BTreeSet::new();
    for name in aa.local_names() {
        if !locals.insert(name) || vars.contains(name) {
            return at(ParseErrorKind::DuplicateLocal(name.to_string()), (1, 1));
        }
    }
    for (name, has_port, line, col) in uses {
        if locals.contains(name.as_str()) {
            if !has_port {
                return at(
                    ParseErrorKind::Syntax {
                        expected: vec![format!("`{name}.<port>`")],
                        found: format!("bare component `{name}`"),
                    },
                    (*line, *col),
                );
            }
        } else if !params.contains(name.as_str()) {
            return at(ParseErrorKind::UnboundVariable(name.clone()), (*line, *col));
        }
    }
    Ok(())
}

/// Parses one aspect of assembly.
pub fn parse_aa(text: &str) -> Result<AspectOfAssembly, ParseError> {
    let mut p = Parser::new(text)?;
    let aa = p.aspect()?;
    p.finish()?;
    check(&aa, &p.uses)?;
    Ok(aa)
}

/// Parses a standalone operator expression such as `a.p ; b.q || call`.
pub fn parse_operator_expr(text: &str) -> Result<OperatorTree, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.op_expr()?;
    p.finish()?;
    Ok(t)
}

/// Parses `/pattern/`. Filters belong to pointcut rules and are rejected
/// here.
pub fn parse_pattern(text: &str) -> Result<Pattern, ParseError> {
    let err = |col, msg: String| ParseError {
        kind: ParseErrorKind::Pattern(msg),
        line: 1,
        col,
    };
    let t = text.trim();
    let inner = t
        .strip_prefix('/')
        .and_then(|s| s.strip_suffix('/'))
        .ok_or_else(|| err(1, "pattern must be written /…/".into()))?;
    let (pattern, filters) = parse_pattern_with_filters(inner).map_err(|(c, m)| err(c + 2, m))?;
    if !filters.is_empty() {
        return Err(err(1, "filters are only allowed in pointcut rules".into()));
    }
    Ok(pattern)
}
