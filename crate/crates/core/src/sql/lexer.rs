use super::parser::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Keyword or identifier, lowercased.
    Word(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => w.to_ascii_uppercase(),
            Tok::Number(n) => n.clone(),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Sym(s) => (*s).to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// Byte offset into the source.
    pub pos: usize,
}

const SYMBOLS: [&str; 13] = ["<=", ">=", "!=", "<>", "=", "<", ">", "(", ")", ",", ".", "*", ";"];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(src[start..i].to_ascii_lowercase()),
                pos: start,
            });
            continue;
        }
        let negative_number = c == b'-'
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())
            && !matches!(
                out.last().map(|t: &Token| &t.tok),
                Some(Tok::Word(_)) | Some(Tok::Number(_)) | Some(Tok::Str(_)) | Some(Tok::Sym(")"))
            );
        if c.is_ascii_digit() || negative_number {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(SyntaxError::new(start, &["number"], &src[start..=i]));
            }
            out.push(Token {
                tok: Tok::Number(src[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match src[i..].chars().next() {
                    None => return Err(SyntaxError::new(start, &["closing quote"], "end of input")),
                    Some('\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
            continue;
        }
        match SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                let sym = if *sym == "<>" { "!=" } else { sym };
                out.push(Token {
                    tok: Tok::Sym(sym),
                    pos: start,
                });
            }
            None => {
                let ch = src[i..].chars().next().unwrap();
                return Err(SyntaxError::new(start, &["token"], &ch.to_string()));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: src.len(),
    });
    Ok(out)
}
