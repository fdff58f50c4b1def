use std::fmt;

/// Arithmetic operators usable inside terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Written `\`.
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "\\",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div | ArithOp::Mod => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Int(i64),
    /// Lowercase-leading symbolic constant.
    Sym(String),
    /// Uppercase-leading variable.
    Var(String),
    Binary(ArithOp, Box<Term>, Box<Term>),
    Neg(Box<Term>),
    Abs(Box<Term>),
    Interval(Box<Term>, Box<Term>),
    Func(String, Vec<Term>),
}

impl Term {
    pub fn sym(name: impl Into<String>) -> Term {
        Term::Sym(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    /// Collects every variable name occurring in the term.
    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Int(_) | Term::Sym(_) => {}
            Term::Binary(_, a, b) | Term::Interval(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Term::Neg(a) | Term::Abs(a) => a.vars(out),
            Term::Func(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    pub fn is_ground(&self) -> bool {
        let mut v = Vec::new();
        self.vars(&mut v);
        v.is_empty()
    }

    /// True when the term contains arithmetic or an interval, i.e. it cannot be
    /// used to bind variables by pattern matching.
    pub fn is_computed(&self) -> bool {
        match self {
            Term::Int(_) | Term::Sym(_) | Term::Var(_) => false,
            Term::Binary(..) | Term::Neg(_) | Term::Abs(_) | Term::Interval(..) => true,
            Term::Func(_, args) => args.iter().any(Term::is_computed),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        match self {
            Term::Int(i) => {
                if *i < 0 && parent > 0 {
                    write!(f, "({i})")
                } else {
                    write!(f, "{i}")
                }
            }
            Term::Sym(s) | Term::Var(s) => f.write_str(s),
            Term::Binary(op, a, b) => {
                let p = op.precedence();
                if p < parent {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, p)?;
                f.write_str(op.symbol())?;
                // left associative: the right operand binds tighter
                b.fmt_prec(f, p + 1)?;
                if p < parent {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Term::Neg(a) => {
                f.write_str("-")?;
                a.fmt_prec(f, 3)
            }
            Term::Abs(a) => {
                f.write_str("|")?;
                a.fmt_prec(f, 0)?;
                f.write_str("|")
            }
            Term::Interval(a, b) => {
                if parent > 0 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 1)?;
                f.write_str("..")?;
                b.fmt_prec(f, 1)?;
                if parent > 0 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Term::Func(name, args) => {
                f.write_str(name)?;
                f.write_str("(")?;
                write_list(f, args, ",")?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T], sep: &str) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

/// A (possibly strongly negated) atom `p(t1,...,tk)` or `~p(...)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
    pub strong_neg: bool,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom { predicate: predicate.into(), args, strong_neg: false }
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        self.args.iter().for_each(|t| t.vars(out));
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.strong_neg {
            f.write_str("-")?;
        }
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.args, ",")?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator obtained by swapping operands (`a < b` iff `b > a`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn eval<T: Ord>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// One element `t1,...,tk : cond1, ..., condm` of a `#count` set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggElement {
    pub terms: Vec<Term>,
    pub condition: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountAggregate {
    pub elements: Vec<AggElement>,
    pub op: CmpOp,
    pub bound: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    /// `a`, `~a`, `not a`, `not ~a`.
    Atom { negated: bool, atom: Atom },
    Cmp { op: CmpOp, lhs: Term, rhs: Term },
    Count { negated: bool, aggregate: CountAggregate },
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal::Atom { negated: false, atom }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal::Atom { negated: true, atom }
    }

    pub fn is_positive_atom(&self) -> bool {
        matches!(self, Literal::Atom { negated: false, .. })
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            Literal::Atom { atom, .. } => atom.vars(out),
            Literal::Cmp { lhs, rhs, .. } => {
                lhs.vars(out);
                rhs.vars(out);
            }
            Literal::Count { aggregate, .. } => {
                for el in &aggregate.elements {
                    el.terms.iter().for_each(|t| t.vars(out));
                    el.condition.iter().for_each(|l| l.vars(out));
                }
                aggregate.bound.vars(out);
            }
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom { negated, atom } => {
                if *negated {
                    f.write_str("not ")?;
                }
                write!(f, "{atom}")
            }
            Literal::Cmp { op, lhs, rhs } => write!(f, "{lhs}{}{rhs}", op.symbol()),
            Literal::Count { negated, aggregate } => {
                if *negated {
                    f.write_str("not ")?;
                }
                f.write_str("#count{")?;
                for (i, el) in aggregate.elements.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write_list(f, &el.terms, ",")?;
                    if !el.condition.is_empty() {
                        f.write_str(":")?;
                        write_list(f, &el.condition, ",")?;
                    }
                }
                write!(f, "}}{}{}", aggregate.op.symbol(), aggregate.bound)
            }
        }
    }
}

/// Element `a : cond` of a choice head.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChoiceElement {
    pub atom: Atom,
    pub condition: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChoiceHead {
    pub elements: Vec<ChoiceElement>,
    pub lower: Option<Term>,
    pub upper: Option<Term>,
}

/// Head of `nn(m(e, t1,...,tk), [v1,...,vn])`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeuralHead {
    pub network: String,
    pub events: Term,
    pub data: Vec<Term>,
    pub outcomes: Vec<Term>,
}

/// Payload `[w@l, t1,...,tk]` of a weak constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeakPayload {
    pub weight: Term,
    pub level: Term,
    pub terms: Vec<Term>,
}

/// Probability written in a probabilistic rule, kept as source text so that
/// printing is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Prob {
    pub text: String,
    pub value: f64,
}

impl Eq for Prob {}

impl std::hash::Hash for Prob {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.text.hash(state);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Atom(Atom),
    Choice(ChoiceHead),
    /// Integrity constraint `:- Body.`
    Constraint,
    /// Weak constraint `:~ Body. [w@l, terms]`
    Weak(WeakPayload),
    Neural(NeuralHead),
    /// `p1: a1 | ... | pn: an.`
    Probabilistic(Vec<(Prob, Atom)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Fact,
    Normal,
    Constraint,
    Choice,
    Weak,
    Neural,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match &self.head {
            Head::Atom(_) if self.body.is_empty() => RuleKind::Fact,
            Head::Atom(_) => RuleKind::Normal,
            Head::Choice(_) => RuleKind::Choice,
            Head::Constraint => RuleKind::Constraint,
            Head::Weak(_) => RuleKind::Weak,
            Head::Neural(_) => RuleKind::Neural,
            Head::Probabilistic(_) => RuleKind::Probabilistic,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body_sep = match &self.head {
            Head::Atom(a) => {
                write!(f, "{a}")?;
                " :- "
            }
            Head::Choice(ch) => {
                if let (Some(l), Some(u)) = (&ch.lower, &ch.upper) {
                    if l == u {
                        write_choice_elems(f, &ch.elements)?;
                        write!(f, "={l}")?;
                        return write_body(f, " :- ", &self.body);
                    }
                }
                if let Some(l) = &ch.lower {
                    write!(f, "{l}")?;
                }
                write_choice_elems(f, &ch.elements)?;
                if let Some(u) = &ch.upper {
                    write!(f, "{u}")?;
                }
                " :- "
            }
            Head::Constraint => {
                f.write_str(":- ")?;
                write_list(f, &self.body, ", ")?;
                return f.write_str(".");
            }
            Head::Weak(w) => {
                f.write_str(":~ ")?;
                write_list(f, &self.body, ", ")?;
                write!(f, ". [{}@{}", w.weight, w.level)?;
                for t in &w.terms {
                    write!(f, ",{t}")?;
                }
                return f.write_str("]");
            }
            Head::Neural(nn) => {
                write!(f, "nn({}({}", nn.network, nn.events)?;
                for t in &nn.data {
                    write!(f, ",{t}")?;
                }
                f.write_str("),[")?;
                write_list(f, &nn.outcomes, ",")?;
                f.write_str("])")?;
                " :- "
            }
            Head::Probabilistic(alts) => {
                for (i, (p, a)) in alts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{}: {a}", p.text)?;
                }
                " :- "
            }
        };
        write_body(f, body_sep, &self.body)
    }
}

fn write_choice_elems(f: &mut fmt::Formatter<'_>, elems: &[ChoiceElement]) -> fmt::Result {
    f.write_str("{")?;
    for (i, el) in elems.iter().enumerate() {
        if i > 0 {
            f.write_str(";")?;
        }
        write!(f, "{}", el.atom)?;
        if !el.condition.is_empty() {
            f.write_str(":")?;
            write_list(f, &el.condition, ",")?;
        }
    }
    f.write_str("}")
}

fn write_body(f: &mut fmt::Formatter<'_>, sep: &str, body: &[Literal]) -> fmt::Result {
    if !body.is_empty() {
        f.write_str(sep)?;
        write_list(f, body, ", ")?;
    }
    f.write_str(".")
}

/// A parsed program: ASP rules plus neural rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn neural_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| matches!(r.head, Head::Neural(_)))
    }

    pub fn extend(&mut self, other: Program) {
        self.rules.extend(other.rules);
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// A set of integrity constraints; an interpretation satisfies it when it
/// satisfies none of the constraint bodies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Observation {
    pub constraints: Vec<Rule>,
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.constraints {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
