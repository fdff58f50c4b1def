use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::LangError;

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    eof_line: usize,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Parser, LangError> {
        let toks = tokenize(src)?;
        let eof_line = src.lines().count().max(1);
        Ok(Parser { toks, pos: 0, eof_line })
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    pub(crate) fn line(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.line).unwrap_or(self.eof_line)
    }

    fn err(&self, msg: impl Into<String>) -> LangError {
        match self.toks.get(self.pos) {
            Some(t) => LangError::syntax(t.line, t.col, format!("{}, found {:?}", msg.into(), t.tok)),
            None => LangError::syntax(self.eof_line, 1, format!("{}, found end of input", msg.into())),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), LangError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    pub(crate) fn rule(&mut self) -> Result<Rule, LangError> {
        match self.peek() {
            Some(Tok::If) => {
                self.bump();
                let body = self.body_until_dot()?;
                Ok(Rule { head: Head::Constraint, body })
            }
            Some(Tok::WeakIf) => {
                self.bump();
                let body = self.body_until_dot()?;
                self.expect(Tok::LBracket, "'[' after weak constraint")?;
                let weight = self.term()?;
                let level = if self.eat(&Tok::At) { self.term()? } else { Term::Int(0) };
                let mut terms = Vec::new();
                while self.eat(&Tok::Comma) {
                    terms.push(self.term()?);
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(Rule { head: Head::Weak(WeakPayload { weight, level, terms }), body })
            }
            _ => {
                let head = self.head()?;
                let body = if self.eat(&Tok::If) { self.body_until_dot()? } else {
                    self.expect(Tok::Dot, "'.' or ':-' after rule head")?;
                    Vec::new()
                };
                Ok(Rule { head, body })
            }
        }
    }

    fn body_until_dot(&mut self) -> Result<Vec<Literal>, LangError> {
        let mut body = Vec::new();
        if self.eat(&Tok::Dot) {
            return Ok(body);
        }
        loop {
            body.push(self.literal()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::Dot, "',' or '.' in rule body")?;
            return Ok(body);
        }
    }

    fn head(&mut self) -> Result<Head, LangError> {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(n)), Some(Tok::LParen)) if n == "nn" => self.neural_head(),
            (Some(Tok::Float(_)), _) | (Some(Tok::Int(_)), Some(Tok::Colon)) => self.probabilistic_head(),
            (Some(Tok::LBrace), _) => self.choice_head(None),
            (Some(Tok::Int(_) | Tok::Var(_)), Some(Tok::LBrace)) => {
                let lower = self.primary()?;
                self.choice_head(Some(lower))
            }
            _ => Ok(Head::Atom(self.atom()?)),
        }
    }

    fn neural_head(&mut self) -> Result<Head, LangError> {
        self.bump();
        self.expect(Tok::LParen, "'('")?;
        let network = match self.bump() {
            Some(Tok::Ident(n)) => n,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected network name in neural atom"));
            }
        };
        self.expect(Tok::LParen, "'(' after network name")?;
        let events = self.term()?;
        let mut data = Vec::new();
        while self.eat(&Tok::Comma) {
            data.push(self.term()?);
        }
        self.expect(Tok::RParen, "')'")?;
        self.expect(Tok::Comma, "',' before outcome list")?;
        self.expect(Tok::LBracket, "'[' opening outcome list")?;
        let mut outcomes = vec![self.term()?];
        while self.eat(&Tok::Comma) {
            outcomes.push(self.term()?);
        }
        self.expect(Tok::RBracket, "']'")?;
        self.expect(Tok::RParen, "')'")?;
        Ok(Head::Neural(NeuralHead { network, events, data, outcomes }))
    }

    fn probabilistic_head(&mut self) -> Result<Head, LangError> {
        let mut alts = Vec::new();
        loop {
            let text = match self.bump() {
                Some(Tok::Float(t)) => t,
                Some(Tok::Int(i)) => i.to_string(),
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected probability"));
                }
            };
            let value: f64 = text.parse().map_err(|_| self.err("bad probability"))?;
            self.expect(Tok::Colon, "':' after probability")?;
            let atom = self.atom()?;
            alts.push((Prob { text, value }, atom));
            if !self.eat(&Tok::Bar) {
                break;
            }
        }
        Ok(Head::Probabilistic(alts))
    }

    fn choice_head(&mut self, mut lower: Option<Term>) -> Result<Head, LangError> {
        self.expect(Tok::LBrace, "'{'")?;
        let mut elements = Vec::new();
        if !self.eat(&Tok::RBrace) {
            loop {
                let atom = self.atom()?;
                let mut condition = Vec::new();
                if self.eat(&Tok::Colon) {
                    condition.push(self.literal()?);
                    while self.eat(&Tok::Comma) {
                        condition.push(self.literal()?);
                    }
                }
                elements.push(ChoiceElement { atom, condition });
                if self.eat(&Tok::Semi) {
                    continue;
                }
                self.expect(Tok::RBrace, "';' or '}' in choice")?;
                break;
            }
        }
        let mut upper = None;
        match self.peek() {
            Some(Tok::Eq) => {
                self.bump();
                let b = self.term()?;
                lower = Some(b.clone());
                upper = Some(b);
            }
            Some(Tok::Le) => {
                self.bump();
                upper = Some(self.term()?);
            }
            Some(Tok::Ge) => {
                self.bump();
                lower = Some(self.term()?);
            }
            Some(Tok::Int(_) | Tok::Var(_)) => upper = Some(self.primary()?),
            _ => {}
        }
        Ok(Head::Choice(ChoiceHead { elements, lower, upper }))
    }

    fn atom(&mut self) -> Result<Atom, LangError> {
        let strong_neg = matches!(self.peek(), Some(Tok::Tilde | Tok::Minus))
            && matches!(self.peek_at(1), Some(Tok::Ident(_)));
        if strong_neg {
            self.bump();
        }
        let predicate = match self.bump() {
            Some(Tok::Ident(n)) => n,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected atom"));
            }
        };
        let args = if self.eat(&Tok::LParen) { self.term_list(Tok::RParen)? } else { Vec::new() };
        Ok(Atom { predicate, args, strong_neg })
    }

    fn term_list(&mut self, close: Tok) -> Result<Vec<Term>, LangError> {
        let mut args = vec![self.term()?];
        while self.eat(&Tok::Comma) {
            args.push(self.term()?);
        }
        self.expect(close, "closing bracket")?;
        Ok(args)
    }

    pub(crate) fn literal(&mut self) -> Result<Literal, LangError> {
        let negated = matches!(self.peek(), Some(Tok::Ident(n)) if n == "not");
        if negated {
            self.bump();
        }
        if self.peek() == Some(&Tok::Count) {
            let aggregate = self.count_right()?;
            return Ok(Literal::Count { negated, aggregate });
        }
        let strong = matches!(self.peek(), Some(Tok::Tilde))
            || (matches!(self.peek(), Some(Tok::Minus)) && matches!(self.peek_at(1), Some(Tok::Ident(_))));
        if strong {
            let atom = self.atom()?;
            return Ok(Literal::Atom { negated, atom });
        }
        let start = self.pos;
        let lhs = self.term()?;
        if let Some(op) = self.cmp_op() {
            if negated {
                return Err(self.err("'not' cannot be applied to a comparison"));
            }
            if self.peek() == Some(&Tok::Count) {
                let mut agg = self.count_set()?;
                agg.op = op.flip();
                agg.bound = lhs;
                return Ok(Literal::Count { negated, aggregate: agg });
            }
            let rhs = self.term()?;
            return Ok(Literal::Cmp { op, lhs, rhs });
        }
        match lhs {
            Term::Sym(p) => Ok(Literal::Atom { negated, atom: Atom::new(p, Vec::new()) }),
            Term::Func(p, args) => Ok(Literal::Atom { negated, atom: Atom::new(p, args) }),
            _ => {
                self.pos = start;
                Err(self.err("expected literal"))
            }
        }
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek()? {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    /// `#count{...} op term`
    fn count_right(&mut self) -> Result<CountAggregate, LangError> {
        let mut agg = self.count_set()?;
        let op = self.cmp_op().ok_or_else(|| self.err("expected comparison after #count"))?;
        agg.op = op;
        agg.bound = self.term()?;
        Ok(agg)
    }

    fn count_set(&mut self) -> Result<CountAggregate, LangError> {
        self.expect(Tok::Count, "#count")?;
        self.expect(Tok::LBrace, "'{'")?;
        let mut elements = Vec::new();
        if !self.eat(&Tok::RBrace) {
            loop {
                let mut terms = vec![self.term()?];
                while self.eat(&Tok::Comma) {
                    terms.push(self.term()?);
                }
                let mut condition = Vec::new();
                if self.eat(&Tok::Colon) {
                    condition.push(self.literal()?);
                    while self.eat(&Tok::Comma) {
                        condition.push(self.literal()?);
                    }
                }
                elements.push(AggElement { terms, condition });
                if self.eat(&Tok::Semi) {
                    continue;
                }
                self.expect(Tok::RBrace, "';' or '}' in #count")?;
                break;
            }
        }
        Ok(CountAggregate { elements, op: CmpOp::Eq, bound: Term::Int(0) })
    }

    pub(crate) fn term(&mut self) -> Result<Term, LangError> {
        let lo = self.additive()?;
        if self.eat(&Tok::DotDot) {
            let hi = self.additive()?;
            return Ok(Term::Interval(Box::new(lo), Box::new(hi)));
        }
        Ok(lo)
    }

    fn additive(&mut self) -> Result<Term, LangError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Term::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Term, LangError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => ArithOp::Mul,
                Some(Tok::Slash) => ArithOp::Div,
                Some(Tok::Backslash) => ArithOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Term::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Term, LangError> {
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(match inner {
                Term::Int(i) => Term::Int(-i),
                other => Term::Neg(Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Term, LangError> {
        match self.bump() {
            Some(Tok::Int(i)) => Ok(Term::Int(i)),
            Some(Tok::Var(v)) => Ok(Term::Var(v)),
            Some(Tok::Ident(name)) => {
                if name == "not" {
                    self.pos -= 1;
                    return Err(self.err("'not' is a keyword"));
                }
                if self.eat(&Tok::LParen) {
                    let args = self.term_list(Tok::RParen)?;
                    Ok(Term::Func(name, args))
                } else {
                    Ok(Term::Sym(name))
                }
            }
            Some(Tok::LParen) => {
                let t = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(t)
            }
            Some(Tok::Bar) => {
                let t = self.additive()?;
                self.expect(Tok::Bar, "closing '|'")?;
                Ok(Term::Abs(Box::new(t)))
            }
            _ => {
                self.pos -= 1;
                Err(self.err("expected term"))
            }
        }
    }
}
