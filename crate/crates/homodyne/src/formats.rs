//! Plain CSV files with a one-line `#` metadata header.
//!
//! Every file starts with `# homodyne-<kind> v1 convention=x-vacuum-variance-1/4 key=value ...`,
//! followed by a column header line and comma-separated rows (LF endings).
//! Floats use the shortest representation that round-trips exactly.

use crate::error::{Error, Result};
use crate::reconstruct::{PhaseLayout, QuadratureDataset, QuadratureSample};
use crate::wigner::{CartesianGrid, WignerGrid};
use ndarray::Array2;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

pub const FORMAT_VERSION: &str = "v1";
pub const CONVENTION: &str = "x-vacuum-variance-1/4";

const SAMPLES_COLUMNS: &str = "phase_index,phase_radians,block,value";
const STATE_COLUMNS: &str = "n,re,im";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Metadata from the first line of a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn new(kind: &str) -> Self {
        Header {
            kind: kind.to_string(),
            fields: vec![("convention".into(), CONVENTION.into())],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .get(key)
            .ok_or_else(|| parse_err(1, format!("header lacks `{key}`")))?;
        v.parse()
            .map_err(|_| parse_err(1, format!("header field `{key}` has invalid value {v:?}")))
    }

    /// The `#` line, newline included.
    pub fn render(&self) -> String {
        let mut s = format!("# homodyne-{} {FORMAT_VERSION}", self.kind);
        for (k, v) in &self.fields {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
        s
    }

    fn parse(line: &str, want: &str) -> Result<Self> {
        let rest = line
            .strip_prefix("# homodyne-")
            .ok_or_else(|| parse_err(1, "missing `# homodyne-<kind>` header"))?;
        let mut tokens = rest.split_whitespace();
        let kind = tokens.next().unwrap_or_default().to_string();
        if kind != want {
            return Err(parse_err(1, format!("expected a {want} file, found {kind:?}")));
        }
        match tokens.next() {
            Some(FORMAT_VERSION) => {}
            other => {
                return Err(parse_err(
                    1,
                    format!("unsupported format version {other:?}, expected {FORMAT_VERSION}"),
                ))
            }
        }
        let fields = tokens
            .map(|t| {
                t.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| parse_err(1, format!("malformed header field {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Header {
            kind,
            fields,
        })
    }
}

/// Header, column line and numbered data lines of a file body.
struct Body<'a> {
    header: Header,
    columns: &'a str,
    rows: Vec<(usize, &'a str)>,
}

fn split<'a>(text: &'a str, kind: &str) -> Result<Body<'a>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = Header::parse(first, kind)?;
    let (_, columns) = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    let rows = lines.filter(|(_, l)| !l.trim().is_empty()).collect();
    Ok(Body {
        header,
        columns,
        rows,
    })
}

fn fields(line: usize, text: &str, want: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = text.split(',').map(str::trim).collect();
    if f.len() != want {
        return Err(parse_err(line, format!("expected {want} fields, found {}", f.len())));
    }
    Ok(f)
}

fn number<T: FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from {s:?}")))
}

fn layout_name(l: PhaseLayout) -> &'static str {
    match l {
        PhaseLayout::FullCircle => "full-circle",
        PhaseLayout::HalfCircle => "half-circle",
        PhaseLayout::Scattered => "scattered",
    }
}

fn parse_layout(s: &str) -> Result<PhaseLayout> {
    match s {
        "full-circle" => Ok(PhaseLayout::FullCircle),
        "half-circle" => Ok(PhaseLayout::HalfCircle),
        "scattered" => Ok(PhaseLayout::Scattered),
        _ => Err(parse_err(1, format!("unknown phase layout {s:?}"))),
    }
}

// --- samples --------------------------------------------------------------

pub fn samples_to_string(ds: &QuadratureDataset) -> String {
    let header = Header::new("samples")
        .with("n_phi", ds.n_phi())
        .with("n_blocks", ds.n_blocks())
        .with("layout", layout_name(ds.layout()))
        .with("n_samples", ds.len());
    let mut s = header.render();
    s.push_str(SAMPLES_COLUMNS);
    s.push('\n');
    for q in ds.samples() {
        let _ = writeln!(s, "{},{},{},{}", q.phase_index, q.phase, q.block, q.value);
    }
    s
}

pub fn parse_samples(text: &str) -> Result<QuadratureDataset> {
    let body = split(text, "samples")?;
    if body.columns.trim() != SAMPLES_COLUMNS {
        return Err(parse_err(2, format!("expected columns `{SAMPLES_COLUMNS}`")));
    }
    let n_phi: usize = body.header.require("n_phi")?;
    let n_blocks: usize = body.header.require("n_blocks")?;
    let layout = parse_layout(&body.header.require::<String>("layout")?)?;
    let mut samples = Vec::with_capacity(body.rows.len());
    for &(line, text) in &body.rows {
        let f = fields(line, text, 4)?;
        let s = QuadratureSample {
            phase_index: number(line, "phase_index", f[0])?,
            phase: number(line, "phase_radians", f[1])?,
            block: number(line, "block", f[2])?,
            value: number(line, "value", f[3])?,
        };
        if !s.value.is_finite() {
            return Err(parse_err(line, format!("value {} is not finite", s.value)));
        }
        if s.phase_index as usize >= n_phi || s.block as usize >= n_blocks {
            return Err(parse_err(
                line,
                format!(
                    "phase index {} or block {} out of range (n_phi = {n_phi}, n_blocks = {n_blocks})",
                    s.phase_index, s.block
                ),
            ));
        }
        samples.push(s);
    }
    if let Ok(n) = body.header.require::<usize>("n_samples") {
        if n != samples.len() {
            return Err(parse_err(
                body.rows.last().map_or(2, |r| r.0),
                format!("header announces {n} samples, file holds {}", samples.len()),
            ));
        }
    }
    QuadratureDataset::new(samples, n_phi, n_blocks, layout)
}

// --- real matrices --------------------------------------------------------

pub fn matrix_to_string(m: &Array2<f64>, name: &str) -> String {
    let header = Header::new("matrix")
        .with("name", name)
        .with("rows", m.nrows())
        .with("cols", m.ncols());
    let mut s = header.render();
    let cols: Vec<String> = (0..m.ncols()).map(|k| format!("c{k}")).collect();
    s.push_str(&cols.join(","));
    s.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Matrix and its `name` header field.
pub fn parse_matrix(text: &str) -> Result<(Array2<f64>, String)> {
    let body = split(text, "matrix")?;
    let rows: usize = body.header.require("rows")?;
    let cols: usize = body.header.require("cols")?;
    let name = body.header.get("name").unwrap_or_default().to_string();
    if body.rows.len() != rows {
        return Err(parse_err(
            body.rows.last().map_or(2, |r| r.0),
            format!("header announces {rows} rows, file holds {}", body.rows.len()),
        ));
    }
    let mut m = Array2::zeros((rows, cols));
    for (i, &(line, text)) in body.rows.iter().enumerate() {
        for (k, f) in fields(line, text, cols)?.into_iter().enumerate() {
            m[[i, k]] = number(line, "matrix entry", f)?;
        }
    }
    Ok((m, name))
}

/// Real and imaginary part files for a complex matrix.
pub fn complex_to_strings(m: &Array2<Complex64>, name: &str) -> (String, String) {
    (
        matrix_to_string(&m.mapv(|c| c.re), &format!("{name}_re")),
        matrix_to_string(&m.mapv(|c| c.im), &format!("{name}_im")),
    )
}

pub fn parse_complex(re: &str, im: &str) -> Result<Array2<Complex64>> {
    let (a, _) = parse_matrix(re)?;
    let (b, _) = parse_matrix(im)?;
    if a.dim() != b.dim() {
        return Err(Error::Data(format!(
            "real part is {:?} but imaginary part is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(Array2::from_shape_fn(a.dim(), |ix| Complex64::new(a[ix], b[ix])))
}

// --- state vectors --------------------------------------------------------

pub fn state_to_string(coeffs: &[Complex64]) -> String {
    let mut s = Header::new("state").with("cutoff", coeffs.len()).render();
    s.push_str(STATE_COLUMNS);
    s.push('\n');
    for (n, c) in coeffs.iter().enumerate() {
        let _ = writeln!(s, "{n},{},{}", c.re, c.im);
    }
    s
}

pub fn parse_state(text: &str) -> Result<Vec<Complex64>> {
    let body = split(text, "state")?;
    if body.columns.trim() != STATE_COLUMNS {
        return Err(parse_err(2, format!("expected columns `{STATE_COLUMNS}`")));
    }
    let cutoff: usize = body.header.require("cutoff")?;
    let mut c = vec![Complex64::default(); cutoff];
    let mut seen = vec![false; cutoff];
    for &(line, text) in &body.rows {
        let f = fields(line, text, 3)?;
        let n: usize = number(line, "n", f[0])?;
        if n >= cutoff || seen[n] {
            return Err(parse_err(line, format!("index {n} is out of range or repeated")));
        }
        seen[n] = true;
        c[n] = Complex64::new(number(line, "re", f[1])?, number(line, "im", f[2])?);
    }
    Ok(c)
}

// --- Wigner grids ---------------------------------------------------------

fn grid_to_string(header: Header, corner: &str, cols: &[f64], rows: &[f64], w: &Array2<f64>) -> String {
    let mut s = header.render();
    s.push_str(corner);
    for c in cols {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        s.push_str(&r.to_string());
        for v in w.row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

type Grid = (Header, Vec<f64>, Vec<f64>, Array2<f64>);

fn parse_grid(text: &str, kind: &str, corner: &str) -> Result<Grid> {
    let body = split(text, kind)?;
    let head: Vec<&str> = body.columns.split(',').map(str::trim).collect();
    if head.first() != Some(&corner) {
        return Err(parse_err(2, format!("column header must start with `{corner}`")));
    }
    let cols = head[1..]
        .iter()
        .map(|s| number(2, "axis value", s))
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::with_capacity(body.rows.len());
    let mut w = Array2::zeros((body.rows.len(), cols.len()));
    for (i, &(line, text)) in body.rows.iter().enumerate() {
        let f = fields(line, text, cols.len() + 1)?;
        rows.push(number(line, "axis value", f[0])?);
        for (k, v) in f[1..].iter().enumerate() {
            w[[i, k]] = number(line, "grid value", v)?;
        }
    }
    Ok((body.header, cols, rows, w))
}

/// First row holds θ, first column holds r.
pub fn wigner_to_string(g: &WignerGrid, method: &str) -> String {
    grid_to_string(Header::new("wigner").with("method", method), "r\\theta", &g.theta, &g.r, &g.w)
}

pub fn parse_wigner(text: &str) -> Result<WignerGrid> {
    let (_, theta, r, w) = parse_grid(text, "wigner", "r\\theta")?;
    Ok(WignerGrid { r, theta, w })
}

/// First row holds x, first column holds y.
pub fn cartesian_to_string(g: &CartesianGrid) -> String {
    grid_to_string(Header::new("wigner-cartesian"), "y\\x", &g.x, &g.y, &g.w)
}

pub fn parse_cartesian(text: &str) -> Result<CartesianGrid> {
    let (_, x, y, w) = parse_grid(text, "wigner-cartesian", "y\\x")?;
    Ok(CartesianGrid { x, y, w })
}

// --- files ----------------------------------------------------------------

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Attaches the file name to parse errors.
pub fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_samples(path: &Path) -> Result<QuadratureDataset> {
    in_file(path, parse_samples(&read_text(path)?))
}

pub fn write_samples(path: &Path, ds: &QuadratureDataset) -> Result<()> {
    write_text(path, &samples_to_string(ds))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    in_file(path, parse_matrix(&read_text(path)?).map(|(m, _)| m))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>, name: &str) -> Result<()> {
    write_text(path, &matrix_to_string(m, name))
}

pub fn read_complex(re: &Path, im: &Path) -> Result<Array2<Complex64>> {
    let a = read_text(re)?;
    let b = read_text(im)?;
    in_file(re, parse_complex(&a, &b))
}

pub fn read_state(path: &Path) -> Result<Vec<Complex64>> {
    in_file(path, parse_state(&read_text(path)?))
}

pub fn write_state(path: &Path, coeffs: &[Complex64]) -> Result<()> {
    write_text(path, &state_to_string(coeffs))
}

pub fn read_wigner(path: &Path) -> Result<WignerGrid> {
    in_file(path, parse_wigner(&read_text(path)?))
}

pub fn write_wigner(path: &Path, g: &WignerGrid, method: &str) -> Result<()> {
    write_text(path, &wigner_to_string(g, method))
}

pub fn write_cartesian(path: &Path, g: &CartesianGrid) -> Result<()> {
    write_text(path, &cartesian_to_string(g))
}
