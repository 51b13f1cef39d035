// Recursive-descent parser for signature strings.
//
// Accepted grammar (whitespace insignificant, "×" may replace "x"):
//
//   item    := "(" content ")"
//   content := IDENT "," scope                          leaf
//            | WEIGHT item ("+" WEIGHT item)+ ["," scope]   sum
//            | item ("x" item)+ ["," scope]              product
//            | item "," scope                           scope annotation
//            | item                                     grouping
//   scope   := "{" INT ("," INT)* "}"
//
// This covers both the fully annotated form `(body, scope)` and the compact
// form where only leaves and the root carry scopes. Declared scopes are
// checked against the computed ones.

use super::{Scope, SignatureNode};
use crate::error::{Result, SpnError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Comma,
    LBrace,
    RBrace,
    Plus,
    Ident(String),
    Number(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | ',' | '{' | '}' | '+' => {
                chars.next();
                out.push((
                    pos,
                    match c {
                        '(' => Tok::Open,
                        ')' => Tok::Close,
                        ',' => Tok::Comma,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        _ => Tok::Plus,
                    },
                ));
            }
            '×' => {
                chars.next();
                out.push((pos, Tok::Ident("x".into())));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&(_, d)) = chars.peek() {
                    if d.is_ascii_digit() || d == '.' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((pos, Tok::Number(s)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&(_, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((pos, Tok::Ident(s)));
            }
            other => {
                return Err(SpnError::Syntax { pos, msg: format!("unexpected character {other:?}") })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(SpnError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn is_times(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == "x")
    }

    fn item(&mut self) -> Result<SignatureNode> {
        self.expect(Tok::Open, "'('")?;
        let node = match self.peek().cloned() {
            Some(Tok::Ident(symbol)) if self.peek2() == Some(&Tok::Comma) => {
                self.at += 2;
                let scope = self.scope()?;
                SignatureNode::leaf(symbol, scope)?
            }
            Some(Tok::Number(_)) => {
                let mut children = vec![(self.weight()?, self.item()?)];
                while self.peek() == Some(&Tok::Plus) {
                    self.at += 1;
                    children.push((self.weight()?, self.item()?));
                }
                let node = SignatureNode::sum(children)?;
                self.optional_scope(node)?
            }
            Some(Tok::Open) => {
                let first = self.item()?;
                if self.is_times() {
                    let mut children = vec![first];
                    while self.is_times() {
                        self.at += 1;
                        children.push(self.item()?);
                    }
                    let node = SignatureNode::product(children)?;
                    self.optional_scope(node)?
                } else {
                    self.optional_scope(first)?
                }
            }
            _ => return self.err("expected leaf symbol, weight or '('"),
        };
        self.expect(Tok::Close, "')'")?;
        Ok(node)
    }

    fn optional_scope(&mut self, node: SignatureNode) -> Result<SignatureNode> {
        if self.peek() != Some(&Tok::Comma) {
            return Ok(node);
        }
        self.at += 1;
        let declared = self.scope()?;
        if &declared != node.scope() {
            return Err(SpnError::Scope(format!(
                "declared scope {declared} differs from computed scope {}",
                node.scope()
            )));
        }
        Ok(node)
    }

    fn weight(&mut self) -> Result<f64> {
        match self.peek().cloned() {
            Some(Tok::Number(s)) => {
                let w: f64 = s.parse().map_err(|_| SpnError::Syntax {
                    pos: self.pos(),
                    msg: format!("malformed weight {s:?}"),
                })?;
                self.at += 1;
                Ok(w)
            }
            _ => self.err("expected weight"),
        }
    }

    fn scope(&mut self) -> Result<Scope> {
        self.expect(Tok::LBrace, "'{'")?;
        let mut dims = Vec::new();
        loop {
            match self.peek().cloned() {
                Some(Tok::Number(s)) => {
                    let d: usize = s.parse().map_err(|_| SpnError::Syntax {
                        pos: self.pos(),
                        msg: format!("malformed scope index {s:?}"),
                    })?;
                    dims.push(d);
                    self.at += 1;
                }
                _ => return self.err("expected scope index"),
            }
            match self.peek() {
                Some(Tok::Comma) => self.at += 1,
                Some(Tok::RBrace) => {
                    self.at += 1;
                    break;
                }
                _ => return self.err("expected ',' or '}'"),
            }
        }
        Scope::new(dims, self.n)
    }
}

/// Parses and validates a signature over ambient dimension `n`.
pub fn parse_signature(text: &str, n: usize) -> Result<SignatureNode> {
    if n == 0 {
        return Err(SpnError::Scope("ambient dimension must be positive".into()));
    }
    let mut p = Parser { toks: lex(text)?, at: 0, end: text.len(), n };
    let node = p.item()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors() {
        for bad in ["", "(", "(f1,{1}", "(f1,{1}))", "f1", "(f1,{})", "((f1,{1})x)", "(0.5(f1,{1})+)", "(f1,{1})#"] {
            let err = parse_signature(bad, 2).unwrap_err();
            assert!(matches!(err, SpnError::Syntax { .. } | SpnError::Scope(_)), "{bad}: {err:?}");
        }
    }

    #[test]
    fn whitespace_and_unicode_times() {
        let a = parse_signature("( ( (f1,{1}) × (f2,{2}) ) , {1, 2} )", 2).unwrap();
        let b = parse_signature("(((f1,{1})x(f2,{2})),{1,2})", 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_annotated_form() {
        let s = parse_signature(
            "((0.5(((f1,{1})x(f2,{2})),{1,2})+0.5(((f3,{1})x(f4,{2})),{1,2})),{1,2})",
            2,
        )
        .unwrap();
        assert_eq!(s.leaf_count(), 4);
    }

    #[test]
    fn leaf_named_x_is_a_symbol() {
        let s = parse_signature("(((x,{1})x(y,{2})),{1,2})", 2).unwrap();
        assert_eq!(s.leaves()[0].symbol(), Some("x"));
    }
}
