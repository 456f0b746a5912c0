//! Control files: a header line `N n_u`, then `N` rows of `n_u` values.

use std::io::Write;

use slidopt::{ControlGrid, Error, Result, Vector};

fn numbers(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty())
}

/// Parses a control file into `(N, rows)`. Lines starting with `#` are
/// skipped.
pub fn parse(text: &str) -> Result<(usize, Vec<Vector>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty control file".into()))?;
    let head: Vec<usize> = numbers(header)
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("header `{header}` must be `N n_u`")))?;
    let [n, n_u] = head[..] else {
        return Err(Error::Format(format!("header `{header}` must be `N n_u`")));
    };
    if n == 0 || n_u == 0 {
        return Err(Error::Format("N and n_u must be positive".into()));
    }
    let mut rows = Vec::with_capacity(n);
    for (lineno, line) in lines {
        let row: Vec<f64> = numbers(line)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {lineno}: not a number")))?;
        if row.len() != n_u || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("line {lineno}: expected {n_u} finite values")));
        }
        rows.push(Vector::from_vec(row));
    }
    if rows.len() != n {
        return Err(Error::Format(format!("expected {n} rows, found {}", rows.len())));
    }
    Ok((n, rows))
}

pub fn write(grid: &ControlGrid, mut w: impl Write) -> Result<()> {
    writeln!(w, "{} {}", grid.n_intervals(), grid.n_u())?;
    for v in &grid.values {
        let row: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let grid = ControlGrid::constant(0.0, 1.0, 3, Vector::from_vec(vec![0.1, -2.0]), Vector::zeros(2), Vector::zeros(2));
        let mut buf = Vec::new();
        write(&grid, &mut buf).unwrap();
        let (n, rows) = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(rows, grid.values);
    }

    #[test]
    fn malformed() {
        for text in ["", "3", "2 1\n0.5", "1 2\n0.5", "1 1\nabc", "1 1\nnan", "0 1\n"] {
            assert!(matches!(parse(text), Err(Error::Format(_))), "{text:?}");
        }
        assert!(parse("# comment\n2 1\n0.5\n-0.5, \n").is_ok());
    }
}
