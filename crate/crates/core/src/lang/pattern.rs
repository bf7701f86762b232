use std::fmt;

use crate::assembly::Direction;

/// Pattern dialect: literals, `*` (also written `.*`) and one decimal digit
/// (`[:digit:]` or `[[:digit:]]`). Matching ignores ASCII case.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Literal(String),
    Star,
    DigitClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub component: Vec<Atom>,
    pub port: Option<Vec<Atom>>,
    /// `Some(Required)` when the port part is written `^name`.
    pub port_direction: Option<Direction>,
}

impl Pattern {
    pub fn matches_component(&self, id: &str) -> bool {
        match_atoms(&self.component, id.as_bytes())
    }

    pub fn matches_port(&self, name: &str, direction: Direction) -> bool {
        if self.port_direction.is_some_and(|d| d != direction) {
            return false;
        }
        match &self.port {
            None => true,
            Some(atoms) => match_atoms(atoms, name.as_bytes()),
        }
    }

    pub(crate) fn split_display(&self) -> (String, Option<String>) {
        let comp = atoms_to_string(&self.component);
        let port = self.port.as_ref().map(|p| {
            let caret = if self.port_direction == Some(Direction::Required) {
                "^"
            } else {
                ""
            };
            format!("{caret}{}", atoms_to_string(p))
        });
        (comp, port)
    }

    /// Parses pattern text without the surrounding slashes or filters.
    /// `offset` is added to reported columns.
    pub(crate) fn parse_body(text: &str, offset: usize) -> Result<Pattern, (usize, String)> {
        if text.trim().is_empty() {
            return Err((offset, "empty pattern".into()));
        }
        match split_on_dot(text) {
            None => Ok(Pattern {
                component: non_empty(parse_atoms(text, offset)?, offset)?,
                port: None,
                port_direction: None,
            }),
            Some(dot) => {
                let (before, after) = (&text[..dot], &text[dot + 1..]);
                if after.trim() == "*" {
                    let mut component = parse_atoms(before, offset)?;
                    component.push(Atom::Star);
                    return Ok(Pattern {
                        component: collapse(component),
                        port: None,
                        port_direction: None,
                    });
                }
                let component = non_empty(parse_atoms(before, offset)?, offset)?;
                let trimmed = after.trim_start();
                let (port_direction, port_text, port_off) = match trimmed.strip_prefix('^') {
                    Some(rest) => (
                        Some(Direction::Required),
                        rest,
                        offset + dot + 2 + (after.len() - trimmed.len()),
                    ),
                    None => (None, after, offset + dot + 1),
                };
                let port = non_empty(parse_atoms(port_text, port_off)?, port_off)?;
                Ok(Pattern {
                    component,
                    port: Some(port),
                    port_direction,
                })
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (comp, port) = self.split_display();
        match port {
            Some(p) => write!(f, "/{comp}.{p}/"),
            None => write!(f, "/{comp}/"),
        }
    }
}

fn non_empty(atoms: Vec<Atom>, col: usize) -> Result<Vec<Atom>, (usize, String)> {
    if atoms.is_empty() {
        Err((col, "pattern part needs at least one atom".into()))
    } else {
        Ok(atoms)
    }
}

/// Index of the first `.` that is outside a character class and does not
/// start a `.*` wildcard inside an already-split port part.
fn split_on_dot(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            '.' if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

fn parse_atoms(text: &str, offset: usize) -> Result<Vec<Atom>, (usize, String)> {
    let bytes = text.as_bytes();
    let mut atoms = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    let flush = |lit: &mut String, atoms: &mut Vec<Atom>| {
        if !lit.is_empty() {
            atoms.push(Atom::Literal(std::mem::take(lit)));
        }
    };
    while i < bytes.len() {
        let rest = &text[i..];
        if rest.starts_with("[[:digit:]]") {
            flush(&mut lit, &mut atoms);
            atoms.push(Atom::DigitClass);
            i += "[[:digit:]]".len();
        } else if rest.starts_with("[:digit:]") {
            flush(&mut lit, &mut atoms);
            atoms.push(Atom::DigitClass);
            i += "[:digit:]".len();
        } else if rest.starts_with('[') {
            let msg = if rest.contains(']') {
                "unsupported character class"
            } else {
                "unterminated character class"
            };
            return Err((offset + i, msg.into()));
        } else if rest.starts_with(".*") {
            flush(&mut lit, &mut atoms);
            atoms.push(Atom::Star);
            i += 2;
        } else if rest.starts_with('*') {
            flush(&mut lit, &mut atoms);
            atoms.push(Atom::Star);
            i += 1;
        } else {
            let c = rest.chars().next().expect("non-empty");
            if c.is_whitespace() {
                // listings occasionally carry stray spaces
            } else if c.is_alphanumeric() || c == '_' || c == '-' {
                lit.push(c);
            } else {
                return Err((offset + i, format!("unexpected `{c}` in pattern")));
            }
            i += c.len_utf8();
        }
    }
    flush(&mut lit, &mut atoms);
    Ok(collapse(atoms))
}

fn collapse(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match (out.last_mut(), a) {
            (Some(Atom::Star), Atom::Star) => {}
            (Some(Atom::Literal(prev)), Atom::Literal(s)) => prev.push_str(&s),
            (_, a) => out.push(a),
        }
    }
    out
}

fn atoms_to_string(atoms: &[Atom]) -> String {
    atoms
        .iter()
        .map(|a| match a {
            Atom::Literal(s) => s.clone(),
            Atom::Star => "*".to_string(),
            Atom::DigitClass => "[[:digit:]]".to_string(),
        })
        .collect()
}

fn match_atoms(atoms: &[Atom], text: &[u8]) -> bool {
    match atoms.split_first() {
        None => text.is_empty(),
        Some((Atom::Literal(lit), rest)) => {
            let lit = lit.as_bytes();
            text.len() >= lit.len()
                && text[..lit.len()].eq_ignore_ascii_case(lit)
                && match_atoms(rest, &text[lit.len()..])
        }
        Some((Atom::DigitClass, rest)) => {
            text.first().is_some_and(u8::is_ascii_digit) && match_atoms(rest, &text[1..])
        }
        Some((Atom::Star, rest)) => (0..=text.len()).any(|k| match_atoms(rest, &text[k..])),
    }
}
