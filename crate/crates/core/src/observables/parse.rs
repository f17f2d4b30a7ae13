use num_complex::Complex64;

use super::{Chi, Expr};
use crate::error::Result;
use crate::grammar::Cursor;
use crate::projective::ProjPoint;

pub(crate) fn parse(spec: &str) -> Result<Expr> {
    let mut cur = Cursor::new(spec);
    let e = expr(&mut cur)?;
    cur.expect_end()?;
    Ok(e)
}

fn point(cur: &mut Cursor) -> Result<ProjPoint> {
    let at = cur.pos();
    let coords = cur.complex_list()?;
    if !(2..=3).contains(&coords.len()) {
        return Err(cur.error_at(at, "point needs 2 or 3 coordinates"));
    }
    ProjPoint::normalize(&coords)
}

/// Comma-separated complex numbers ending before `;` or `)`.
fn coefficients(cur: &mut Cursor) -> Result<Vec<Complex64>> {
    let mut out = vec![cur.complex()?];
    while cur.eat(',') {
        out.push(cur.complex()?);
    }
    if !(2..=3).contains(&out.len()) {
        return Err(cur.error("linear form needs 2 or 3 coefficients"));
    }
    if out.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
        return Err(cur.error("linear form is identically zero"));
    }
    Ok(out)
}

fn index(cur: &mut Cursor) -> Result<usize> {
    let v = cur.integer()?;
    if !(0..=2).contains(&v) {
        return Err(cur.error("coordinate index must be 0, 1 or 2"));
    }
    Ok(v as usize)
}

fn chi(cur: &mut Cursor) -> Result<Chi> {
    let name = cur.ident()?;
    match name {
        "abs" => Ok(Chi::Abs),
        "pos" => Ok(Chi::Pos),
        "clip" => {
            cur.expect('(')?;
            let lo = cur.real()?;
            cur.expect(',')?;
            let hi = cur.real()?;
            cur.expect(')')?;
            if !(lo <= hi) {
                return Err(cur.error("clip needs lo <= hi"));
            }
            Ok(Chi::Clip(lo, hi))
        }
        other => Err(cur.error(format!("unknown post-composition '{other}'"))),
    }
}

fn expr(cur: &mut Cursor) -> Result<Expr> {
    cur.skip_ws();
    let start = cur.pos();
    let name = cur.ident()?;
    cur.expect('(')?;
    let e = match name {
        "const" => Expr::Const(cur.real()?),
        "chordal_re" => {
            let i = index(cur)?;
            cur.expect(',')?;
            let j = index(cur)?;
            Expr::ChordalRe(i, j)
        }
        "cos_arg" => {
            let k = cur.integer()?;
            if k.abs() > 1_000_000 {
                return Err(cur.error("frequency out of range"));
            }
            Expr::CosArg(k as i32)
        }
        "dist_to" => Expr::DistTo(point(cur)?),
        "bump" => {
            let p = point(cur)?;
            cur.expect(',')?;
            let r = cur.real()?;
            if !(r > 0.0) {
                return Err(cur.error("bump radius must be positive"));
            }
            Expr::Bump(p, r)
        }
        "qpsh_log" => Expr::QpshLog(coefficients(cur)?),
        "loglog" => {
            let l = coefficients(cur)?;
            cur.expect(';')?;
            Expr::LogLog(l, cur.real()?)
        }
        "dsh" => {
            let a = coefficients(cur)?;
            cur.expect(';')?;
            let b = coefficients(cur)?;
            cur.expect(';')?;
            let m = cur.real()?;
            if a.len() != b.len() {
                return Err(cur.error("both linear forms need the same length"));
            }
            if !(m > 0.0) {
                return Err(cur.error("cutoff must be positive"));
            }
            Expr::Dsh(a, b, m)
        }
        "lip_of" => {
            let c = chi(cur)?;
            cur.expect(',')?;
            Expr::LipOf(c, Box::new(expr(cur)?))
        }
        "sum" => {
            let a = expr(cur)?;
            cur.expect(',')?;
            Expr::Sum(Box::new(a), Box::new(expr(cur)?))
        }
        "scale" => {
            let c = cur.real()?;
            cur.expect(',')?;
            Expr::Scale(c, Box::new(expr(cur)?))
        }
        other => {
            return Err(cur.error_at(start, format!("unknown observable '{other}'")))
        }
    };
    cur.expect(')')?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use crate::error::EqdError;
    use crate::observables::make_observable;

    #[test]
    fn errors_carry_positions() {
        match make_observable("sum(const(1), nope(2))") {
            Err(EqdError::Parse { line, column, .. }) => assert_eq!((line, column), (1, 15)),
            other => panic!("{other:?}"),
        }
        assert!(make_observable("const(1) x").is_err());
        assert!(make_observable("bump([1,0], -1)").is_err());
        assert!(make_observable("qpsh_log(0,0)").is_err());
        assert!(make_observable("dist_to([1])").is_err());
        assert!(make_observable("lip_of(clip(1,0), const(1))").is_err());
    }

    #[test]
    fn whitespace_and_complex() {
        let o = make_observable("  scale( 2 , qpsh_log( 1+1j , -2j ) ) ").unwrap();
        assert_eq!(o.dim(), Some(1));
    }
}
