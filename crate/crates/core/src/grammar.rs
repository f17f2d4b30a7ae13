//! Small cursor shared by the map and observable spec parsers.

use num_complex::Complex64;

use crate::error::EqdError;

pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> EqdError {
        EqdError::parse_at(self.src, self.pos, message)
    }

    pub fn error_at(&self, pos: usize, message: impl Into<String>) -> EqdError {
        EqdError::parse_at(self.src, pos, message)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    pub fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    pub fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    pub fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, c: char) -> Result<(), EqdError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    pub fn expect_end(&mut self) -> Result<(), EqdError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    pub fn ident(&mut self) -> Result<&'a str, EqdError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number_len(s: &str) -> usize {
        let b = s.as_bytes();
        let mut i = 0;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        i
    }

    pub fn real(&mut self) -> Result<f64, EqdError> {
        self.skip_ws();
        let rest = self.rest();
        let len = Self::number_len(rest);
        rest[..len]
            .parse::<f64>()
            .inspect(|_| self.pos += len)
            .map_err(|_| self.error("expected number"))
    }

    pub fn integer(&mut self) -> Result<i64, EqdError> {
        let start = self.pos;
        let v = self.real()?;
        if v.fract() != 0.0 || v.abs() > 1e15 {
            self.pos = start;
            return Err(self.error("expected integer"));
        }
        Ok(v as i64)
    }

    /// Complex literal `re`, `imj` or `re+imj` / `re-imj`.
    pub fn complex(&mut self) -> Result<Complex64, EqdError> {
        let first = self.real()?;
        if self.rest().starts_with('j') {
            self.pos += 1;
            return Ok(Complex64::new(0.0, first));
        }
        let rest = self.rest();
        if rest.starts_with('+') || rest.starts_with('-') {
            let len = Self::number_len(rest);
            if len > 1 && rest[len..].starts_with('j') {
                let im: f64 = rest[..len]
                    .parse()
                    .map_err(|_| self.error("malformed imaginary part"))?;
                self.pos += len + 1;
                return Ok(Complex64::new(first, im));
            }
        }
        Ok(Complex64::new(first, 0.0))
    }

    pub fn complex_list(&mut self) -> Result<Vec<Complex64>, EqdError> {
        self.expect('[')?;
        let mut out = Vec::new();
        if self.eat(']') {
            return Ok(out);
        }
        loop {
            out.push(self.complex()?);
            if self.eat(']') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    pub fn complex_matrix(&mut self) -> Result<Vec<Vec<Complex64>>, EqdError> {
        self.expect('[')?;
        let mut out = Vec::new();
        loop {
            out.push(self.complex_list()?);
            if self.eat(']') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }
}

pub(crate) fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}{}j", z.re, z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

pub(crate) fn fmt_complex_list(zs: &[Complex64]) -> String {
    let parts: Vec<String> = zs.iter().map(|z| fmt_complex(*z)).collect();
    format!("[{}]", parts.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let mut c = Cursor::new("[1, -2.5, 0.5+0.25j, 1-2j, 3j, 1e-3-1e2j]");
        let v = c.complex_list().unwrap();
        assert_eq!(
            v,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(-2.5, 0.0),
                Complex64::new(0.5, 0.25),
                Complex64::new(1.0, -2.0),
                Complex64::new(0.0, 3.0),
                Complex64::new(1e-3, -1e2),
            ]
        );
        for z in v {
            let s = fmt_complex(z);
            assert_eq!(Cursor::new(&s).complex().unwrap(), z, "{s}");
        }
    }

    #[test]
    fn error_positions() {
        let mut c = Cursor::new("[1,\n  x]");
        match c.complex_list() {
            Err(EqdError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
    }
}
