use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    /// Full text of a `#pragma` line after the `#pragma` keyword.
    Pragma(String),
    /// `#define NAME VALUE`
    Define(String, String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const PUNCTS: [&str; 20] = [
    "++", "+=", "-=", "*=", "/=", "<=", "(", ")", "[", "]", "{", "}", ";", ",", "=", "+", "-", "*", "/", "<",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError::Syntax { line, col, msg };

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        // comments
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(l0, c0, "unterminated block comment".into()));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    col += 2;
                    break;
                }
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c == '#' {
            let start = i;
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            let text: String = chars[start + 1..i].iter().collect();
            col += i - start;
            let mut words = text.split_whitespace();
            match words.next() {
                Some("pragma") => {
                    let rest = text.trim_start().trim_start_matches("pragma").trim().to_string();
                    toks.push(Token { tok: Tok::Pragma(rest), line: tl, col: tc });
                }
                Some("define") => {
                    let name = words.next().ok_or_else(|| err(tl, tc, "#define without a name".into()))?;
                    let value: Vec<&str> = words.collect();
                    if value.is_empty() {
                        return Err(err(tl, tc, format!("#define {name} without a value")));
                    }
                    toks.push(Token { tok: Tok::Define(name.to_string(), value.join(" ")), line: tl, col: tc });
                }
                Some("include") => {}
                other => return Err(err(tl, tc, format!("unsupported directive `#{}`", other.unwrap_or("")))),
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            toks.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                is_float |= chars[i] == '.';
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                is_float = true;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            // float suffix
            if i < chars.len() && (chars[i] == 'f' || chars[i] == 'F') {
                is_float = true;
                i += 1;
            }
            col += i - start;
            let tok = if is_float {
                Tok::Float(text.parse().map_err(|_| err(tl, tc, format!("bad number `{text}`")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| err(tl, tc, format!("bad number `{text}`")))?)
            };
            toks.push(Token { tok, line: tl, col: tc });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                toks.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
            }
            None => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
        }
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_pragmas_and_punctuation() {
        let toks = tokenize("#pragma ACCEL pipeline auto{_P}\nfor (i=0;i<=3;i++) a[i] += 1.5f;").unwrap();
        assert_eq!(toks[0].tok, Tok::Pragma("ACCEL pipeline auto{_P}".into()));
        assert_eq!(toks[1].line, 2);
        assert!(toks.iter().any(|t| t.tok == Tok::Punct("<=")));
        assert!(toks.iter().any(|t| t.tok == Tok::Float(1.5)));
    }

    #[test]
    fn reports_position_of_bad_char() {
        let e = tokenize("int x;\n  @").unwrap_err();
        assert_eq!(e, ParseError::Syntax { line: 2, col: 3, msg: "unexpected character `@`".into() });
    }
}
