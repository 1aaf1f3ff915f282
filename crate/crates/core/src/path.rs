//! Right-continuous paths with left limits, and their on-disk formats.
//!
//! CSV layout: two `#` header lines, a column header, then one row per
//! record `time, x_0 .. x_{d-1}, jump_flag`. A jump at time `tau` is written
//! as a `jump_flag = 2` row holding the left limit followed by a
//! `jump_flag = 1` row holding the post-jump value; ordinary rows use 0.
//!
//! Binary layout (little endian): magic `SKLP`, `u32` version, `u32` dim,
//! `u64` record count, `u8` seed flag, `u64` master, `u64` index,
//! `i64` lifetime index (`-1` for none), then per record `f64` time,
//! `f64` flag, and `dim` `f64` components.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::rng::StreamId;

pub const BINARY_MAGIC: &[u8; 4] = b"SKLP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    jump_index: Vec<usize>,
    left_limits: Vec<f64>,
    pub seed: Option<StreamId>,
    /// Index of the last point inside the lifetime, when truncated.
    pub lifetime: Option<usize>,
}

impl CadlagPath {
    pub fn new(dim: usize) -> Self {
        Self::with_capacity(dim, 0)
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        CadlagPath {
            dim,
            times: Vec::with_capacity(n),
            values: Vec::with_capacity(n * dim),
            jump_index: Vec::new(),
            left_limits: Vec::new(),
            seed: None,
            lifetime: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_point(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn jump_indices(&self) -> &[usize] {
        &self.jump_index
    }

    pub fn is_jump(&self, i: usize) -> bool {
        self.jump_index.binary_search(&i).is_ok()
    }

    /// `x_{t_i -}`; equals the point itself away from jumps.
    pub fn left_limit(&self, i: usize) -> &[f64] {
        match self.jump_index.binary_search(&i) {
            Ok(k) => &self.left_limits[k * self.dim..(k + 1) * self.dim],
            Err(_) => self.point(i),
        }
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(
            self.times.last().is_none_or(|&last| t > last),
            "times must increase"
        );
        self.times.push(t);
        self.values.extend_from_slice(x);
    }

    /// Records a jump at `t` from `left` to `x`. A jump at the time of the
    /// last stored point converts that point into the left limit.
    pub fn push_jump(&mut self, t: f64, left: &[f64], x: &[f64]) {
        if self.times.last() == Some(&t) {
            let i = self.len() - 1;
            self.values[i * self.dim..].copy_from_slice(x);
            if self.jump_index.last() == Some(&i) {
                // Two jumps at one instant compose; keep the earliest left limit.
                return;
            }
            self.jump_index.push(i);
            self.left_limits.extend_from_slice(left);
            return;
        }
        self.push(t, x);
        self.jump_index.push(self.len() - 1);
        self.left_limits.extend_from_slice(left);
    }

    /// Largest index with `time <= t + 1e-12`.
    pub fn index_at_or_before(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s <= t + 1e-12);
        k.checked_sub(1)
    }

    pub fn truncate(&mut self, len: usize) {
        self.times.truncate(len);
        self.values.truncate(len * self.dim);
        let keep = self.jump_index.partition_point(|&i| i < len);
        self.jump_index.truncate(keep);
        self.left_limits.truncate(keep * self.dim);
    }

    /// Maps every point (and left limit) through `f`, keeping times and marks.
    pub fn map_points(&self, new_dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> CadlagPath {
        let mut out = CadlagPath::with_capacity(new_dim, self.len());
        out.times = self.times.clone();
        for i in 0..self.len() {
            out.values.extend(f(self.point(i)));
        }
        out.jump_index = self.jump_index.clone();
        for k in 0..self.jump_index.len() {
            out.left_limits
                .extend(f(&self.left_limits[k * self.dim..(k + 1) * self.dim]));
        }
        out.seed = self.seed;
        out.lifetime = self.lifetime;
        out
    }

    /// Checks `times[0] = 0`, strict increase, and uniform spacing `dt`
    /// except around jump marks.
    pub fn check_grid(&self, dt: f64) -> Result<()> {
        if self.times.first() != Some(&0.0) {
            return Err(Error::InvalidInput("path must start at time 0".into()));
        }
        let mut prev_regular = 0.0;
        for i in 1..self.len() {
            if self.times[i] <= self.times[i - 1] {
                return Err(Error::InvalidInput(format!(
                    "times not increasing at index {i}"
                )));
            }
            if self.is_jump(i) {
                continue;
            }
            let gap = self.times[i] - prev_regular;
            let is_last = i + 1 == self.len();
            if (gap - dt).abs() > 1e-12 * (1.0 + self.times[i]) && !(is_last && gap < dt) {
                return Err(Error::InvalidInput(format!(
                    "non-uniform spacing {gap} at index {i}"
                )));
            }
            prev_regular = self.times[i];
        }
        Ok(())
    }

    /// Number of continuous steps whose displacement exceeds `6 sigma sqrt(dt)`.
    pub fn continuity_violations(&self, sigma: f64, dt: f64) -> usize {
        let bound = 6.0 * sigma * dt.sqrt() * (self.dim as f64).sqrt();
        (1..self.len())
            .filter(|&i| {
                let prev = self.point(i - 1);
                let cur = self.left_limit(i);
                let d: f64 = prev
                    .iter()
                    .zip(cur)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                d > bound
            })
            .count()
    }

    // -- CSV ----------------------------------------------------------------

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# cadlag-path v{FORMAT_VERSION}")?;
        let seed = self
            .seed
            .map_or("none".to_string(), |s| format!("{}:{}", s.master, s.index));
        let life = self.lifetime.map_or("none".to_string(), |l| l.to_string());
        writeln!(
            w,
            "# dim={} points={} seed={} lifetime={}",
            self.dim,
            self.len(),
            seed,
            life
        )?;
        let cols: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "time,{},jump_flag", cols.join(","))?;
        let row = |w: &mut W, t: f64, x: &[f64], flag: u8| -> std::io::Result<()> {
            write!(w, "{t}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{flag}")
        };
        for i in 0..self.len() {
            if self.is_jump(i) {
                row(&mut w, self.times[i], self.left_limit(i), 2)?;
                row(&mut w, self.times[i], self.point(i), 1)?;
            } else {
                row(&mut w, self.times[i], self.point(i), 0)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dim = None;
        let mut seed = None;
        let mut lifetime = None;
        let mut path: Option<CadlagPath> = None;
        let mut pending_left: Option<(f64, Vec<f64>)> = None;
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("dim", v)) => dim = Some(parse_num::<usize>(v, ln)?),
                        Some(("seed", v)) if v != "none" => {
                            let (m, i) = v.split_once(':').ok_or_else(|| bad(ln, "seed"))?;
                            seed = Some(StreamId::new(parse_num(m, ln)?, parse_num(i, ln)?));
                        }
                        Some(("lifetime", v)) if v != "none" => lifetime = Some(parse_num(v, ln)?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with("time") {
                let d = dim.ok_or_else(|| bad(ln, "missing dim header"))?;
                path = Some(CadlagPath::new(d));
                continue;
            }
            let p = path.as_mut().ok_or_else(|| bad(ln, "data before header"))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != p.dim + 2 {
                return Err(bad(ln, "wrong column count"));
            }
            let t: f64 = parse_num(fields[0], ln)?;
            let x: Vec<f64> = fields[1..=p.dim]
                .iter()
                .map(|f| parse_num(f, ln))
                .collect::<Result<_>>()?;
            match fields[p.dim + 1] {
                "0" => p.push(t, &x),
                "2" => pending_left = Some((t, x)),
                "1" => {
                    let (lt, left) = pending_left
                        .take()
                        .ok_or_else(|| bad(ln, "jump without left limit"))?;
                    if lt != t {
                        return Err(bad(ln, "left-limit time mismatch"));
                    }
                    p.push_jump(t, &left, &x);
                }
                _ => return Err(bad(ln, "unknown jump flag")),
            }
        }
        let mut p = path.ok_or_else(|| Error::Parse("empty path file".into()))?;
        p.seed = seed;
        p.lifetime = lifetime;
        Ok(p)
    }

    // -- binary -------------------------------------------------------------

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let records = self.len() + self.jump_index.len();
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(records as u64).to_le_bytes())?;
        let (flag, m, i) = self.seed.map_or((0u8, 0, 0), |s| (1, s.master, s.index));
        w.write_all(&[flag])?;
        w.write_all(&m.to_le_bytes())?;
        w.write_all(&i.to_le_bytes())?;
        w.write_all(&self.lifetime.map_or(-1i64, |l| l as i64).to_le_bytes())?;
        let mut rec = |t: f64, flag: f64, x: &[f64]| -> std::io::Result<()> {
            w.write_all(&t.to_le_bytes())?;
            w.write_all(&flag.to_le_bytes())?;
            for v in x {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        for k in 0..self.len() {
            if self.is_jump(k) {
                rec(self.times[k], 2.0, self.left_limit(k))?;
                rec(self.times[k], 1.0, self.point(k))?;
            } else {
                rec(self.times[k], 0.0, self.point(k))?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("bad magic in binary path".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported binary path version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let records = read_u64(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let master = read_u64(&mut r)?;
        let index = read_u64(&mut r)?;
        let life = read_u64(&mut r)? as i64;
        let mut p = CadlagPath::with_capacity(dim, records);
        p.seed = (flag[0] == 1).then_some(StreamId::new(master, index));
        p.lifetime = (life >= 0).then_some(life as usize);
        let mut pending: Option<(f64, Vec<f64>)> = None;
        for _ in 0..records {
            let t = read_f64(&mut r)?;
            let f = read_f64(&mut r)?;
            let x: Vec<f64> = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
            if f == 0.0 {
                p.push(t, &x);
            } else if f == 2.0 {
                pending = Some((t, x));
            } else if f == 1.0 {
                let (_, left) = pending
                    .take()
                    .ok_or_else(|| Error::Parse("jump without left limit".into()))?;
                p.push_jump(t, &left, &x);
            } else {
                return Err(Error::Parse("unknown jump flag".into()));
            }
        }
        Ok(p)
    }
}

fn bad(line: usize, what: &str) -> Error {
    Error::Parse(format!("line {}: {what}", line + 1))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| bad(line, &format!("cannot parse '{s}'")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Clock `a_t` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeChange {
    pub fn total(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// `a_{t_j} - a_{t_i}`.
    pub fn increment(&self, i: usize, j: usize) -> f64 {
        self.values[j] - self.values[i]
    }

    /// First grid index with `a_t >= level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        let k = self.values.partition_point(|&v| v < level);
        (k < self.values.len()).then_some(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CadlagPath {
        let mut p = CadlagPath::new(2);
        p.seed = Some(StreamId::new(3, 4));
        p.push(0.0, &[1.0, 2.0]);
        p.push(0.1, &[1.5, -0.25]);
        p.push_jump(0.15, &[1.6, -0.2], &[0.1, 1e-300]);
        p.push(0.2, &[std::f64::consts::PI, 2.0 / 3.0]);
        p
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = CadlagPath::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let mut p = sample();
        p.lifetime = Some(2);
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        let q = CadlagPath::read_binary(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn left_limits_and_lookup() {
        let p = sample();
        assert_eq!(p.left_limit(2), &[1.6, -0.2]);
        assert_eq!(p.left_limit(1), p.point(1));
        assert_eq!(p.index_at_or_before(0.12), Some(1));
        assert_eq!(p.index_at_or_before(-1.0), None);
    }

    #[test]
    fn grid_check_skips_jump_marks() {
        let mut p = CadlagPath::new(1);
        p.push(0.0, &[0.0]);
        p.push(0.1, &[0.0]);
        p.push_jump(0.13, &[0.0], &[1.0]);
        p.push(0.2, &[1.0]);
        assert!(p.check_grid(0.1).is_ok());
        let mut bad = CadlagPath::new(1);
        bad.push(0.0, &[0.0]);
        bad.push(0.07, &[0.0]);
        bad.push(0.2, &[0.0]);
        assert!(bad.check_grid(0.1).is_err());
    }
}
