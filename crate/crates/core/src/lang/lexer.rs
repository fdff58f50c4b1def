use super::LangError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    /// Decimal literal, kept verbatim.
    Float(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Dot,
    DotDot,
    If,
    WeakIf,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Backslash,
    Bar,
    At,
    Tilde,
    Count,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LangError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let next = chars.get(i + 1).copied();
        let mut adv = 1;
        let tok = match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
                continue;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '@' => Tok::At,
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '\\' => Tok::Backslash,
            '|' => Tok::Bar,
            ':' => match next {
                Some('-') => {
                    adv = 2;
                    Tok::If
                }
                Some('~') => {
                    adv = 2;
                    Tok::WeakIf
                }
                _ => Tok::Colon,
            },
            '.' => {
                if next == Some('.') {
                    adv = 2;
                    Tok::DotDot
                } else {
                    Tok::Dot
                }
            }
            '=' => {
                if next == Some('=') {
                    adv = 2;
                }
                Tok::Eq
            }
            '!' => {
                if next == Some('=') {
                    adv = 2;
                    Tok::Ne
                } else {
                    return Err(LangError::syntax(tl, tc, "expected '!='"));
                }
            }
            '<' => match next {
                Some('=') => {
                    adv = 2;
                    Tok::Le
                }
                Some('>') => {
                    adv = 2;
                    Tok::Ne
                }
                _ => Tok::Lt,
            },
            '>' => {
                if next == Some('=') {
                    adv = 2;
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '#' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_alphanumeric() {
                    j += 1;
                }
                let word: String = chars[i + 1..j].iter().collect();
                if word != "count" {
                    return Err(LangError::syntax(
                        tl,
                        tc,
                        format!("unsupported directive or aggregate '#{word}'"),
                    ));
                }
                adv = j - i;
                Tok::Count
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let is_float = j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit();
                if is_float {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    adv = j - i;
                    Tok::Float(chars[i..j].iter().collect())
                } else {
                    let text: String = chars[i..j].iter().collect();
                    adv = j - i;
                    let v = text
                        .parse::<i64>()
                        .map_err(|_| LangError::syntax(tl, tc, format!("integer '{text}' out of range")))?;
                    Tok::Int(v)
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                adv = j - i;
                if c.is_uppercase() || c == '_' {
                    Tok::Var(word)
                } else {
                    Tok::Ident(word)
                }
            }
            other => {
                return Err(LangError::syntax(tl, tc, format!("unexpected character '{other}'")));
            }
        };
        out.push(Token { tok, line: tl, col: tc });
        i += adv;
        col += adv;
    }
    Ok(out)
}
