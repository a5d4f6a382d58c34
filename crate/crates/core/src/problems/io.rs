//! Text format for problem instances.
//!
//! ```text
//! trbundle-instance 1
//! family max-quartic
//! n 2
//! m 3
//! seed 7
//! growth_order 1
//! f_star 0.0000000000000000e0
//! block x_star 1 2
//! 0.0000000000000000e0 0.0000000000000000e0
//! block g 3 2
//! ...
//! end
//! ```
//!
//! Header lines are `key value`. Numeric data follows in `block <name> <rows>
//! <cols>` sections, row-major, one row per line, with 17 significant digits
//! so that every `f64` round-trips exactly. Blocks per family: `g`, `h` (one
//! flattened `H_i` per row) and `c` for the quartic families; `a` (one
//! flattened `A_i` per row, `i = 0..n`) for max-eig; none otherwise. The
//! sine-growth exponent is the header key `p`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Family, ProblemData, ProblemInstance};
use crate::error::{Error, Result};
use crate::types::Point;

const MAGIC: &str = "trbundle-instance 1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_block(out: &mut String, name: &str, rows: &[Vec<f64>]) {
    let cols = rows.first().map_or(0, Vec::len);
    out.push_str(&format!("block {name} {} {cols}\n", rows.len()));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn serialize(inst: &ProblemInstance) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("family {}\n", inst.family));
    out.push_str(&format!("n {}\n", inst.n));
    out.push_str(&format!("m {}\n", inst.m));
    out.push_str(&format!("seed {}\n", inst.seed));
    match inst.growth_order {
        Some(p) => out.push_str(&format!("growth_order {p}\n")),
        None => out.push_str("growth_order unknown\n"),
    }
    match inst.f_star {
        Some(f) => out.push_str(&format!("f_star {}\n", fmt_f64(f))),
        None => out.push_str("f_star unknown\n"),
    }
    if let ProblemData::Sine { p } = inst.data {
        out.push_str(&format!("p {p}\n"));
    }
    if let Some(x) = &inst.x_star {
        write_block(&mut out, "x_star", &[x.to_vec()]);
    }
    match &inst.data {
        ProblemData::Quartic { g, h, c } => {
            let g_rows: Vec<Vec<f64>> = g.iter().map(|v| v.iter().copied().collect()).collect();
            let h_rows: Vec<Vec<f64>> = h.iter().map(row_major).collect();
            write_block(&mut out, "g", &g_rows);
            write_block(&mut out, "h", &h_rows);
            write_block(&mut out, "c", &[c.clone()]);
        }
        ProblemData::Eigen { a } => {
            let rows: Vec<Vec<f64>> = a.iter().map(row_major).collect();
            write_block(&mut out, "a", &rows);
        }
        ProblemData::Sine { .. } | ProblemData::Toy => {}
    }
    out.push_str("end\n");
    out
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

struct Block {
    line: usize,
    rows: Vec<Vec<f64>>,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn deserialize(text: &str) -> Result<ProblemInstance> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((ln, l)) => return Err(perr(ln, format!("expected `{MAGIC}`, found `{l}`"))),
        None => return Err(perr(1, "empty input")),
    }

    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut blocks: BTreeMap<String, Block> = BTreeMap::new();
    let mut ended = false;
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "end" {
            ended = true;
            break;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        if key == "block" {
            let name = parts
                .next()
                .ok_or_else(|| perr(ln, "block: missing name"))?
                .to_string();
            let rows: usize = parse_field(parts.next(), ln, "block rows")?;
            let cols: usize = parse_field(parts.next(), ln, "block cols")?;
            let mut data = Vec::with_capacity(rows);
            for r in 0..rows {
                let (rln, row) = lines
                    .next()
                    .ok_or_else(|| perr(ln, format!("block `{name}`: missing row {r}")))?;
                let vals = row
                    .split_whitespace()
                    .enumerate()
                    .map(|(k, tok)| {
                        tok.parse::<f64>().map_err(|_| {
                            perr(rln, format!("block `{name}` row {r} field {k}: bad number `{tok}`"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != cols {
                    return Err(perr(
                        rln,
                        format!("block `{name}` row {r}: expected {cols} fields, found {}", vals.len()),
                    ));
                }
                if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(perr(rln, format!("block `{name}` row {r} field {k}: non-finite")));
                }
                data.push(vals);
            }
            blocks.insert(name, Block { line: ln, rows: data });
        } else {
            let value = parts.collect::<Vec<_>>().join(" ");
            if value.is_empty() {
                return Err(perr(ln, format!("header `{key}`: missing value")));
            }
            header.insert(key.to_string(), (ln, value));
        }
    }
    if !ended {
        return Err(perr(text.lines().count(), "missing `end`"));
    }

    let get = |key: &str| -> Result<&(usize, String)> {
        header
            .get(key)
            .ok_or_else(|| perr(0, format!("missing header `{key}`")))
    };
    let (fl, fam) = get("family")?;
    let family: Family = fam.parse().map_err(|_| perr(*fl, format!("unknown family `{fam}`")))?;
    let (nl, n) = get("n")?;
    let n: usize = parse_field(Some(n), *nl, "n")?;
    let (ml, m) = get("m")?;
    let m: usize = parse_field(Some(m), *ml, "m")?;
    let (sl, seed) = get("seed")?;
    let seed: u64 = parse_field(Some(seed), *sl, "seed")?;
    let (gl, g) = get("growth_order")?;
    let growth_order = if g == "unknown" {
        None
    } else {
        Some(parse_field::<u32>(Some(g), *gl, "growth_order")?)
    };
    let (fsl, fs) = get("f_star")?;
    let f_star = if fs == "unknown" {
        None
    } else {
        Some(parse_field::<f64>(Some(fs), *fsl, "f_star")?)
    };
    let x_star = match blocks.get("x_star") {
        Some(b) => {
            let row = single_row(b, "x_star", n)?;
            Some(Point::new(row).map_err(|e| perr(b.line, e.to_string()))?)
        }
        None => None,
    };

    let data = match family {
        Family::MaxQuartic | Family::SumAbsQuartic => {
            let gb = need_block(&blocks, "g")?;
            check_shape(gb, "g", m, n)?;
            let hb = need_block(&blocks, "h")?;
            check_shape(hb, "h", m, n * n)?;
            let cb = need_block(&blocks, "c")?;
            let c = single_row(cb, "c", m)?;
            let g = gb.rows.iter().map(|r| DVector::from_row_slice(r)).collect();
            let h = hb
                .rows
                .iter()
                .map(|r| DMatrix::from_row_slice(n, n, r))
                .collect();
            ProblemData::Quartic { g, h, c }
        }
        Family::MaxEigenvalue => {
            let ab = need_block(&blocks, "a")?;
            check_shape(ab, "a", n + 1, m * m)?;
            let a = ab
                .rows
                .iter()
                .map(|r| DMatrix::from_row_slice(m, m, r))
                .collect();
            ProblemData::Eigen { a }
        }
        Family::SineGrowth => {
            let (pl, p) = get("p")?;
            ProblemData::Sine {
                p: parse_field(Some(p), *pl, "p")?,
            }
        }
        Family::ToyQuadratic => ProblemData::Toy,
    };

    Ok(ProblemInstance {
        family,
        n,
        m,
        seed,
        data,
        x_star,
        growth_order,
        f_star,
    })
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| perr(line, format!("{what}: missing value")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("{what}: cannot parse `{tok}`")))
}

fn need_block<'b>(blocks: &'b BTreeMap<String, Block>, name: &str) -> Result<&'b Block> {
    blocks
        .get(name)
        .ok_or_else(|| perr(0, format!("missing block `{name}`")))
}

fn check_shape(b: &Block, name: &str, rows: usize, cols: usize) -> Result<()> {
    let ok = b.rows.len() == rows && b.rows.iter().all(|r| r.len() == cols);
    if ok {
        Ok(())
    } else {
        Err(perr(
            b.line,
            format!("block `{name}`: expected {rows}x{cols}"),
        ))
    }
}

fn single_row(b: &Block, name: &str, len: usize) -> Result<Vec<f64>> {
    check_shape(b, name, 1, len)?;
    Ok(b.rows[0].clone())
}
