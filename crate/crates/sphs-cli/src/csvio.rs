//! CSV formats.  One layout family, full double precision, LF endings:
//!
//! * trajectory  — `t,x1,...,xn[,u1,...,um]`
//! * derivative pairs — `x1,...,xn[,u1,...,um],dx1,...,dxn`
//! * input signal — `t,u1,...,um`
//! * generic tables — caller-provided header
//!
//! Values are printed with 17 significant digits, enough for every `f64` to
//! survive a write/read round trip bit-exactly.  Parse failures name the
//! file and line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sphs_core::data::{DerivativeSet, Trajectory};
use sphs_core::ode::{InputSignal, Interp};

use crate::error::CmdError;

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{v:.16e}");
        first = false;
    }
    out.push('\n');
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<(), CmdError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CmdError::io(dir, e))?;
        }
    }
    fs::write(path, content).map_err(|e| CmdError::io(path, e))
}

/// Split one data line, parse every cell as a finite `f64`.
fn parse_row(path: &Path, line_no: usize, line: &str, cols: usize) -> Result<Vec<f64>, CmdError> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != cols {
        return Err(CmdError::parse(
            path,
            line_no,
            format!("expected {cols} columns, found {}", cells.len()),
        ));
    }
    let mut row = Vec::with_capacity(cols);
    for cell in cells {
        let v: f64 = cell
            .parse()
            .map_err(|_| CmdError::parse(path, line_no, format!("not a number: {cell:?}")))?;
        if !v.is_finite() {
            return Err(CmdError::parse(path, line_no, format!("non-finite value: {cell}")));
        }
        row.push(v);
    }
    Ok(row)
}

/// Read a whole file into (header cells, data rows), stripping `\r`.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<(usize, String)>), CmdError> {
    let content = fs::read_to_string(path).map_err(|e| CmdError::io(path, e))?;
    let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let Some((_, header)) = lines.next() else {
        return Err(CmdError::parse(path, 1, "empty file"));
    };
    let header: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let rows = lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(no, l)| (no, l.to_string()))
        .collect();
    Ok((header, rows))
}

/// Expect `names` to occupy `header[at..at+names.len()]`.
fn expect_columns(path: &Path, header: &[String], at: usize, names: &[String]) -> Result<(), CmdError> {
    for (k, name) in names.iter().enumerate() {
        let got = header.get(at + k).map(String::as_str).unwrap_or("<missing>");
        if got != name {
            return Err(CmdError::parse(
                path,
                1,
                format!("expected column {name:?} at position {}, found {got:?}", at + k + 1),
            ));
        }
    }
    Ok(())
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Count consecutive header cells `prefix1, prefix2, ...` starting at `at`.
fn count_numbered(header: &[String], at: usize, prefix: &str) -> usize {
    let mut n = 0;
    while header.get(at + n).map(String::as_str) == Some(format!("{prefix}{}", n + 1).as_str()) {
        n += 1;
    }
    n
}

// ── Trajectories ────────────────────────────────────────────────────────

pub fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<(), CmdError> {
    let n = tr.state_dim();
    let m = tr.input_dim();
    let mut out = String::new();
    out.push('t');
    for name in numbered("x", n).iter().chain(numbered("u", m).iter()) {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..tr.len() {
        let u = tr.input(i).unwrap_or(&[]);
        push_row(
            &mut out,
            core::iter::once(tr.times()[i])
                .chain(tr.state(i).iter().copied())
                .chain(u.iter().copied()),
        );
    }
    write_file(path, &out)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CmdError> {
    let (header, rows) = read_rows(path)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(CmdError::parse(path, 1, "first column must be \"t\""));
    }
    let n = count_numbered(&header, 1, "x");
    if n == 0 {
        return Err(CmdError::parse(path, 1, "no state columns (expected x1, x2, ...)"));
    }
    let m = count_numbered(&header, 1 + n, "u");
    let cols = 1 + n + m;
    if header.len() != cols {
        return Err(CmdError::parse(
            path,
            1,
            format!("unrecognized trailing column {:?}", header[1 + n + m]),
        ));
    }
    let mut t = Vec::with_capacity(rows.len());
    let mut states = Vec::with_capacity(rows.len() * n);
    let mut inputs = Vec::with_capacity(rows.len() * m);
    for (line_no, line) in &rows {
        let row = parse_row(path, *line_no, line, cols)?;
        t.push(row[0]);
        states.extend_from_slice(&row[1..1 + n]);
        inputs.extend_from_slice(&row[1 + n..]);
    }
    let built = if m > 0 {
        Trajectory::with_inputs(t, states, n, inputs, m)
    } else {
        Trajectory::new(t, states, n)
    };
    built.map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

// ── Derivative pairs ────────────────────────────────────────────────────

pub fn write_derivative_set(path: &Path, set: &DerivativeSet) -> Result<(), CmdError> {
    let (n, m) = (set.state_dim, set.input_dim);
    let mut out = String::new();
    let names: Vec<String> = numbered("x", n)
        .into_iter()
        .chain(numbered("u", m))
        .chain(numbered("dx", n))
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..set.rows {
        push_row(
            &mut out,
            set.x[r * n..(r + 1) * n]
                .iter()
                .chain(&set.u[r * m..(r + 1) * m])
                .chain(&set.dxdt[r * n..(r + 1) * n])
                .copied(),
        );
    }
    write_file(path, &out)
}

pub fn read_derivative_set(path: &Path) -> Result<DerivativeSet, CmdError> {
    let (header, rows) = read_rows(path)?;
    let n = count_numbered(&header, 0, "x");
    if n == 0 {
        return Err(CmdError::parse(path, 1, "no state columns (expected x1, x2, ...)"));
    }
    let m = count_numbered(&header, n, "u");
    expect_columns(path, &header, n + m, &numbered("dx", n))?;
    let cols = 2 * n + m;
    if header.len() != cols {
        return Err(CmdError::parse(path, 1, "unrecognized trailing columns after dx block"));
    }
    let mut set = DerivativeSet { state_dim: n, input_dim: m, ..Default::default() };
    for (line_no, line) in &rows {
        let row = parse_row(path, *line_no, line, cols)?;
        set.x.extend_from_slice(&row[..n]);
        set.u.extend_from_slice(&row[n..n + m]);
        set.dxdt.extend_from_slice(&row[n + m..]);
        set.rows += 1;
    }
    if set.rows == 0 {
        return Err(CmdError::parse(path, 1, "no data rows"));
    }
    Ok(set)
}

// ── Input signals ───────────────────────────────────────────────────────

pub fn read_input_signal(path: &Path, interp: Interp) -> Result<InputSignal, CmdError> {
    let (header, rows) = read_rows(path)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(CmdError::parse(path, 1, "first column must be \"t\""));
    }
    let m = count_numbered(&header, 1, "u");
    if m == 0 || header.len() != 1 + m {
        return Err(CmdError::parse(path, 1, "expected columns t, u1, ..., um"));
    }
    let mut t = Vec::with_capacity(rows.len());
    let mut u = Vec::with_capacity(rows.len() * m);
    for (line_no, line) in &rows {
        let row = parse_row(path, *line_no, line, 1 + m)?;
        t.push(row[0]);
        u.extend_from_slice(&row[1..]);
    }
    InputSignal::new(t, u, m, interp)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

// ── Generic tables ──────────────────────────────────────────────────────

/// Write a plot-ready table: named columns, one `f64` per cell.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CmdError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), header.len(), "table row width mismatch");
        push_row(&mut out, row.iter().copied());
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("tr.csv");
        let tr = Trajectory::with_inputs(
            vec![0.0, 0.1 + 1e-17, 0.3],
            vec![1.0 / 3.0, -2.0 / 7.0, 1e-300, 5e300, 0.1 + 0.2, -0.0],
            2,
            vec![core::f64::consts::PI, -1e-12, 42.0],
            1,
        )
        .unwrap();
        write_trajectory(&path, &tr).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.times(), tr.times());
        assert_eq!(back.states(), tr.states());
        assert_eq!(back.inputs(), tr.inputs());
        // Bit-exact, not merely close.
        for (a, b) in tr.states().iter().zip(back.states()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_is_the_documented_shape() {
        let dir = tmp();
        let path = dir.path().join("tr.csv");
        let tr = Trajectory::with_inputs(
            vec![0.0, 1.0],
            vec![1.0, 2.0, 3.0, 4.0],
            2,
            vec![5.0, 6.0],
            1,
        )
        .unwrap();
        write_trajectory(&path, &tr).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x1,x2,u1\n"), "header: {}", text.lines().next().unwrap());
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tmp();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,x1\n0.0,1.0\n1.0,nan\n").unwrap();
        let err = read_trajectory(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.csv:3"), "line number in: {msg}");
        assert!(matches!(err, CmdError::Data(_)));

        std::fs::write(&path, "t,x1\n0.0\n").unwrap();
        let msg = read_trajectory(&path).unwrap_err().to_string();
        assert!(msg.contains(":2") && msg.contains("columns"), "{msg}");

        std::fs::write(&path, "x1,x2\n0.0,1.0\n").unwrap();
        let msg = read_trajectory(&path).unwrap_err().to_string();
        assert!(msg.contains("\"t\""), "{msg}");

        std::fs::write(&path, "t,x1,y2\n0.0,1.0,2.0\n").unwrap();
        assert!(read_trajectory(&path).is_err());
    }

    #[test]
    fn derivative_set_round_trip() {
        let dir = tmp();
        let path = dir.path().join("pairs.csv");
        let set = DerivativeSet {
            x: vec![0.1, 0.2, 0.3, 0.4],
            u: vec![1.5, -2.5],
            dxdt: vec![0.01, -0.02, 0.03, -0.04],
            rows: 2,
            state_dim: 2,
            input_dim: 1,
        };
        write_derivative_set(&path, &set).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,u1,dx1,dx2\n"));
        let back = read_derivative_set(&path).unwrap();
        assert_eq!(back.x, set.x);
        assert_eq!(back.u, set.u);
        assert_eq!(back.dxdt, set.dxdt);
        assert_eq!(back.rows, 2);
    }

    #[test]
    fn input_signal_reads_and_clamps() {
        let dir = tmp();
        let path = dir.path().join("u.csv");
        std::fs::write(&path, "t,u1\n0.0,1.0\n2.0,3.0\n").unwrap();
        let sig = read_input_signal(&path, Interp::Linear).unwrap();
        let mut u = [0.0];
        sig.eval(1.0, &mut u);
        assert!((u[0] - 2.0).abs() < 1e-15);
    }
}
