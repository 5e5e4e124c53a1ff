//! Field files.
//!
//! CSV layout: a header line `nx,ny,x_min,x_max,length,components,time`, one
//! line with those values, a column line `j,i,x,y,c0[,c1]`, then one line per
//! sample in row-major order (`j` outer, `i` inner).
//!
//! Binary layout (little endian): magic `FLD2`, `u32 nx`, `u32 ny`,
//! `f64 x_min`, `f64 x_max`, `f64 length`, `u32 components`, `f64 time`, then
//! every component as `(ny + 1)·nx` row-major `f64` samples.

use ndarray::Array2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Field2D, Grid};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FLD2";

pub fn write_csv(f: &Field2D, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = f.grid();
    writeln!(w, "nx,ny,x_min,x_max,length,components,time")?;
    writeln!(
        w,
        "{},{},{:e},{:e},{:e},{},{:e}",
        g.nx(),
        g.ny(),
        g.x_min(),
        g.x_max(),
        g.length(),
        f.components(),
        f.time()
    )?;
    let cols: Vec<String> = (0..f.components()).map(|c| format!("c{c}")).collect();
    writeln!(w, "j,i,x,y,{}", cols.join(","))?;
    for j in 0..g.rows() {
        for i in 0..g.nx() {
            write!(w, "{j},{i},{:e},{:e}", g.x(i), g.y(j))?;
            for c in 0..f.components() {
                write!(w, ",{:e}", f.value(c, i, j))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {what} from {s:?}")))
}

pub fn read_csv(path: &Path) -> Result<Field2D> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let mut next = |n: usize| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("line {n}: unexpected end of file")))?
            .map_err(Error::from)
    };
    next(1)?;
    let head = next(2)?;
    let h: Vec<&str> = head.split(',').collect();
    if h.len() != 7 {
        return Err(Error::Parse("line 2: expected 7 header values".into()));
    }
    let grid = Grid::new(
        parse(h[0], "nx", 2)?,
        parse(h[1], "ny", 2)?,
        parse(h[2], "x_min", 2)?,
        parse(h[3], "x_max", 2)?,
        parse(h[4], "length", 2)?,
    )?;
    let comps: usize = parse(h[5], "components", 2)?;
    let time: f64 = parse(h[6], "time", 2)?;
    if !(1..=2).contains(&comps) {
        return Err(Error::Parse(format!("line 2: {comps} components")));
    }
    next(3)?;
    let mut layers = vec![Array2::zeros((grid.rows(), grid.nx())); comps];
    for n in 0..grid.rows() * grid.nx() {
        let line_no = n + 4;
        let line = next(line_no)?;
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 4 + comps {
            return Err(Error::Parse(format!("line {line_no}: wrong column count")));
        }
        let j: usize = parse(v[0], "j", line_no)?;
        let i: usize = parse(v[1], "i", line_no)?;
        if j >= grid.rows() || i >= grid.nx() {
            return Err(Error::Parse(format!("line {line_no}: index out of range")));
        }
        for (c, layer) in layers.iter_mut().enumerate() {
            layer[[j, i]] = parse(v[4 + c], "sample", line_no)?;
        }
    }
    Ok(Field2D::from_layers(&grid, layers)?.with_time(time))
}

pub fn write_binary(f: &Field2D, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.nx() as u32).to_le_bytes())?;
    w.write_all(&(g.ny() as u32).to_le_bytes())?;
    for v in [g.x_min(), g.x_max(), g.length()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(f.components() as u32).to_le_bytes())?;
    w.write_all(&f.time().to_le_bytes())?;
    for l in f.layers() {
        for v in l.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<Field2D> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a field file (bad magic)".into()));
    }
    let mut u32b = [0u8; 4];
    let mut f64b = [0u8; 8];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<usize> {
        r.read_exact(&mut u32b)?;
        Ok(u32::from_le_bytes(u32b) as usize)
    };
    let nx = read_u32(&mut r)?;
    let ny = read_u32(&mut r)?;
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut f64b)?;
        Ok(f64::from_le_bytes(f64b))
    };
    let (x_min, x_max, length) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let grid = Grid::new(nx, ny, x_min, x_max, length)?;
    let comps = read_u32(&mut r)?;
    if !(1..=2).contains(&comps) {
        return Err(Error::Parse(format!("{comps} components")));
    }
    let time = read_f64(&mut r)?;
    let mut layers = Vec::with_capacity(comps);
    for _ in 0..comps {
        let mut l = Array2::zeros((grid.rows(), grid.nx()));
        for v in l.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        layers.push(l);
    }
    Ok(Field2D::from_layers(&grid, layers)?.with_time(time))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_binary_round_trip() {
        let g = Grid::new(16, 8, -4.0, 6.0, 1.0).unwrap();
        let f = Field2D::vector_from_fn(&g, |x, y| (x.sin() * y, (x * y).cos())).with_time(0.25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_csv(&f, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.max_diff(&f), 0.0);
        assert_eq!(back.time(), 0.25);

        let p = dir.path().join("f.bin");
        write_binary(&f, &p).unwrap();
        let back = read_binary(&p).unwrap();
        assert_eq!(back.max_diff(&f), 0.0);
    }

    #[test]
    fn truncated_csv_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "nx,ny\n16,8,-4,6,1,1,0\nj,i,x,y,c0\n0,0,0,0,1\n").unwrap();
        assert!(matches!(read_csv(&p), Err(Error::Parse(_))));
    }
}
