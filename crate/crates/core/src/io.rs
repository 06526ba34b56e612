//! Plain-text and binary dump formats for fields, trajectories, segments and
//! transition paths. Floats are written with 17 significant digits so that
//! dumps round-trip exactly and identical runs give identical bytes.

use std::io::{BufRead, Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid, NodeClass, ScalarField, VectorField};
use crate::integrate::Trajectory;
use crate::reactive::ReactiveSegment;
use crate::tpp::TppPath;
use crate::Point;

/// Formats `x` with 17 significant digits; `-0` prints as `0`.
pub fn fmt_f64(x: f64) -> String {
    let x = x + 0.0;
    format!("{x:.16e}")
}

/// Hex SHA-256 of a string.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of a model's canonical descriptor.
pub fn model_hash(descriptor: &str) -> String {
    sha256_hex(descriptor)
}

fn class_char(c: NodeClass) -> char {
    match c {
        NodeClass::Interior => 'I',
        NodeClass::A => 'A',
        NodeClass::B => 'B',
        NodeClass::BoxBoundary => 'X',
    }
}

const FIELD_MAGIC: &str = "# tptkit-field 1";

fn write_field_header(w: &mut impl Write, name: &str, grid: &Grid, components: usize) -> Result<()> {
    writeln!(w, "{FIELD_MAGIC}")?;
    writeln!(w, "# name {name}")?;
    writeln!(w, "# dim {}", grid.dim())?;
    writeln!(w, "# components {components}")?;
    for k in 0..grid.dim() {
        let a = grid.axis(k);
        writeln!(w, "# axis {k} {} {} {}", fmt_f64(a.lo), fmt_f64(a.hi), a.n)?;
    }
    writeln!(w, "# legend I=interior A=region_A B=region_B X=box_boundary")?;
    writeln!(w, "# classes")?;
    let [nx, ny] = grid.shape();
    for j in 0..ny {
        let row: String = (0..nx).map(|i| class_char(grid.class(grid.index([i, j])))).collect();
        writeln!(w, "{row}")?;
    }
    writeln!(w, "# values (row-major, first axis fastest)")?;
    Ok(())
}

/// Writes a scalar field: header, class map, then one grid row per line.
pub fn write_scalar_field(w: &mut impl Write, name: &str, f: &ScalarField) -> Result<()> {
    let grid = f.grid();
    write_field_header(w, name, grid, 1)?;
    let [nx, ny] = grid.shape();
    for j in 0..ny {
        let row: Vec<String> = (0..nx).map(|i| fmt_f64(f.at(grid.index([i, j])))).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Writes a vector field; each node contributes `dim` consecutive values.
pub fn write_vector_field(w: &mut impl Write, name: &str, f: &VectorField) -> Result<()> {
    let grid = f.grid();
    let d = grid.dim();
    write_field_header(w, name, grid, d)?;
    let [nx, ny] = grid.shape();
    for j in 0..ny {
        let row: Vec<String> = (0..nx)
            .flat_map(|i| {
                let v = f.at(grid.index([i, j]));
                (0..d).map(move |k| fmt_f64(v[k]))
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// A field dump read back from text.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub name: String,
    pub dim: usize,
    pub components: usize,
    pub axes: Vec<Axis>,
    /// One class letter per node, first axis fastest.
    pub classes: Vec<char>,
    /// `components` values per node.
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("field dump line {line}: {msg}"))
}

struct Cursor {
    lines: Vec<String>,
    pos: usize,
}

impl Cursor {
    fn next(&mut self, what: &str) -> Result<(usize, &str)> {
        let i = self.pos;
        self.pos += 1;
        match self.lines.get(i) {
            Some(l) => Ok((i + 1, l.as_str())),
            None => Err(Error::Parse(format!("field dump ends before {what}"))),
        }
    }

    fn tag(&mut self, key: &str) -> Result<(usize, Vec<String>)> {
        let (n, l) = self.next(key)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some("#") || parts.next() != Some(key) {
            return Err(parse_err(n, format!("expected `# {key}`")));
        }
        Ok((n, parts.map(str::to_owned).collect()))
    }
}

fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| parse_err(n, e))
}

/// Parses the output of [`write_scalar_field`] or [`write_vector_field`].
pub fn read_field(r: impl BufRead) -> Result<FieldDump> {
    let mut c = Cursor {
        lines: r.lines().collect::<std::io::Result<_>>()?,
        pos: 0,
    };
    let (n, magic) = c.next("header")?;
    if magic.trim() != FIELD_MAGIC {
        return Err(parse_err(n, "not a field dump"));
    }
    let (_, name) = c.tag("name")?;
    let first = |v: &[String]| v.first().cloned().unwrap_or_default();
    let (n, d) = c.tag("dim")?;
    let dim: usize = num(n, &first(&d))?;
    let (n, k) = c.tag("components")?;
    let components: usize = num(n, &first(&k))?;
    let mut axes = Vec::new();
    for _ in 0..dim {
        let (n, a) = c.tag("axis")?;
        if a.len() != 4 {
            return Err(parse_err(n, "axis needs index, lo, hi, n"));
        }
        axes.push(Axis::new(num(n, &a[1])?, num(n, &a[2])?, num(n, &a[3])?));
    }
    c.tag("legend")?;
    c.tag("classes")?;
    let nx = axes.first().map_or(1, |a| a.n);
    let ny = axes.get(1).map_or(1, |a| a.n);
    let mut classes = Vec::with_capacity(nx * ny);
    for _ in 0..ny {
        let (n, row) = c.next("classes")?;
        if row.chars().count() != nx {
            return Err(parse_err(n, "class row has the wrong length"));
        }
        classes.extend(row.chars());
    }
    c.tag("values")?;
    let mut values = Vec::with_capacity(nx * ny * components);
    for _ in 0..ny {
        let (n, row) = c.next("values")?;
        for s in row.split_whitespace() {
            values.push(num(n, s)?);
        }
    }
    if values.len() != nx * ny * components {
        return Err(Error::Parse(format!(
            "field dump has {} values, expected {}",
            values.len(),
            nx * ny * components
        )));
    }
    Ok(FieldDump {
        name: name.join(" "),
        dim,
        components,
        axes,
        classes,
        values,
    })
}

fn trajectory_header(t: &Trajectory, model_hash: &str) -> String {
    format!(
        "model_hash={model_hash} dt={} seed={} stream_id={} dim={} steps={}",
        fmt_f64(t.dt),
        t.seed,
        t.stream_id,
        t.dim,
        t.len()
    )
}

/// CSV with a `#` header line and columns `t, x_1..x_d`.
pub fn write_trajectory_csv(w: &mut impl Write, t: &Trajectory, model_hash: &str) -> Result<()> {
    writeln!(w, "# {}", trajectory_header(t, model_hash))?;
    let cols: Vec<String> = (1..=t.dim).map(|k| format!("x_{k}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (k, x) in t.states.iter().enumerate() {
        write!(w, "{}", fmt_f64(t.time(k)))?;
        for v in &x[..t.dim] {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

const TRAJ_MAGIC: &[u8; 8] = b"TPTTRAJ1";

/// Little-endian binary: magic, a length-prefixed UTF-8 model hash, dt, seed,
/// stream id, dim, step count, then `(t, x_1..x_d)` as f64 per step.
pub fn write_trajectory_binary(w: &mut impl Write, t: &Trajectory, model_hash: &str) -> Result<()> {
    w.write_all(TRAJ_MAGIC)?;
    w.write_all(&(model_hash.len() as u32).to_le_bytes())?;
    w.write_all(model_hash.as_bytes())?;
    w.write_all(&t.dt.to_le_bytes())?;
    w.write_all(&t.seed.to_le_bytes())?;
    w.write_all(&t.stream_id.to_le_bytes())?;
    w.write_all(&(t.dim as u32).to_le_bytes())?;
    w.write_all(&(t.len() as u64).to_le_bytes())?;
    for (k, x) in t.states.iter().enumerate() {
        w.write_all(&t.time(k).to_le_bytes())?;
        for v in &x[..t.dim] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads [`write_trajectory_binary`] output; returns the trajectory and the model hash.
pub fn read_trajectory_binary(mut r: impl Read) -> Result<(Trajectory, String)> {
    fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        r.read_exact(&mut b)?;
        Ok(b)
    }
    if &take::<8>(&mut r)? != TRAJ_MAGIC {
        return Err(Error::Parse("not a binary trajectory".into()));
    }
    let hlen = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut hash = vec![0u8; hlen];
    r.read_exact(&mut hash)?;
    let hash = String::from_utf8(hash).map_err(|e| Error::Parse(e.to_string()))?;
    let dt = f64::from_le_bytes(take(&mut r)?);
    let seed = u64::from_le_bytes(take(&mut r)?);
    let stream_id = u64::from_le_bytes(take(&mut r)?);
    let dim = u32::from_le_bytes(take(&mut r)?) as usize;
    if dim == 0 || dim > crate::MAX_DIM {
        return Err(Error::Dimension {
            expected: crate::MAX_DIM,
            got: dim,
        });
    }
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let _t = f64::from_le_bytes(take(&mut r)?);
        let mut x: Point = [0.0; 2];
        for v in x.iter_mut().take(dim) {
            *v = f64::from_le_bytes(take(&mut r)?);
        }
        states.push(x);
    }
    Ok((
        Trajectory {
            dt,
            states,
            seed,
            stream_id,
            dim,
        },
        hash,
    ))
}

/// Segment index times `(k, t_A_plus, t_A_minus, t_B_plus, t_B_minus)`.
pub fn write_segments_csv(w: &mut impl Write, segments: &[ReactiveSegment], dt: f64) -> Result<()> {
    writeln!(w, "k,t_A_plus,t_A_minus,t_B_plus,t_B_minus")?;
    let t = |i: usize| fmt_f64(i as f64 * dt);
    for s in segments {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.k,
            t(s.idx_a_plus),
            t(s.idx_a_minus),
            t(s.idx_b_plus),
            t(s.idx_b_minus)
        )?;
    }
    Ok(())
}

/// Transition path with columns `t, x_1..x_d, q, dt_eff`.
pub fn write_tpp_csv(w: &mut impl Write, path: &TppPath, dim: usize) -> Result<()> {
    writeln!(w, "# seed={} stream_id={}", path.seed, path.stream_id)?;
    let cols: Vec<String> = (1..=dim).map(|k| format!("x_{k}")).collect();
    writeln!(w, "t,{},q,dt_eff", cols.join(","))?;
    for i in 0..path.states.len() {
        write!(w, "{}", fmt_f64(path.times[i]))?;
        for v in &path.states[i][..dim] {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w, ",{},{}", fmt_f64(path.q[i]), fmt_f64(path.dt_eff[i]))?;
    }
    Ok(())
}
