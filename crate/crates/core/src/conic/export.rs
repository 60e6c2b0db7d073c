//! CBF (version 1) and SDPA-sparse writers and readers.
//!
//! Both writers encode the canonical form `A z + s = b, s in K` in the
//! format's native "affine expression in cone" convention, i.e. `-A z + b`.
//! PSD rows are written as lower-triangular (CBF) or upper-triangular (SDPA)
//! matrix coordinates with the sqrt(2) svec scaling removed.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{svec_index, Cone, ConicProgram};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    Cbf,
    SdpaSparse,
}

impl ExportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ExportFormat::Cbf => "cbf",
            ExportFormat::SdpaSparse => "dat-s",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cbf" => Ok(ExportFormat::Cbf),
            "sdpa" | "sdpa-sparse" | "dat-s" => Ok(ExportFormat::SdpaSparse),
            other => Err(Error::InvalidInput(format!("unknown export format {other:?}"))),
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// 17 significant digits: enough for an exact f64 round trip.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// For a PSD block of side k, maps svec position to (row, col) with row <= col.
fn psd_coords(k: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0); k * (k + 1) / 2];
    for c in 0..k {
        for r in 0..=c {
            out[svec_index(r, c)] = (r, c);
        }
    }
    out
}

pub fn export(prog: &ConicProgram, format: ExportFormat) -> Result<String> {
    prog.check()?;
    match format {
        ExportFormat::Cbf => Ok(write_cbf(prog)),
        ExportFormat::SdpaSparse => write_sdpa(prog),
    }
}

pub fn import(text: &str, format: ExportFormat) -> Result<ConicProgram> {
    match format {
        ExportFormat::Cbf => read_cbf(text),
        ExportFormat::SdpaSparse => read_sdpa(text),
    }
}

struct RowMap {
    /// For each program row: (is_psd, block ordinal within its section, local index).
    rows: Vec<(bool, usize, usize)>,
}

fn row_map(prog: &ConicProgram) -> RowMap {
    let mut rows = Vec::with_capacity(prog.num_rows());
    let mut scalar_row = 0;
    let mut psd_ordinal = 0;
    for cone in &prog.cones {
        match cone {
            Cone::Psd(_) => {
                for local in 0..cone.dim() {
                    rows.push((true, psd_ordinal, local));
                }
                psd_ordinal += 1;
            }
            _ => {
                for _ in 0..cone.dim() {
                    rows.push((false, 0, scalar_row));
                    scalar_row += 1;
                }
            }
        }
    }
    RowMap { rows }
}

fn write_cbf(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let n = prog.num_vars();
    let map = row_map(prog);
    let psd_sides: Vec<usize> =
        prog.cones.iter().filter_map(|c| if let Cone::Psd(k) = c { Some(*k) } else { None }).collect();
    let coords: Vec<Vec<(usize, usize)>> = psd_sides.iter().map(|&k| psd_coords(k)).collect();
    let scalar_cones: Vec<&Cone> = prog.cones.iter().filter(|c| !matches!(c, Cone::Psd(_))).collect();
    let scalar_rows: usize = scalar_cones.iter().map(|c| c.dim()).sum();

    let _ = writeln!(out, "# canonical form: minimize c'z s.t. -A z + b in K");
    for (idx, (cone, label)) in prog.cones.iter().zip(&prog.block_labels).enumerate() {
        let _ = writeln!(out, "# block {idx} {cone} {label}");
    }
    let _ = writeln!(out, "VER\n1\n");
    let _ = writeln!(out, "OBJSENSE\nMIN\n");
    let _ = writeln!(out, "VAR\n{n} 1\nF {n}\n");
    if !psd_sides.is_empty() {
        let _ = writeln!(out, "PSDCON\n{}", psd_sides.len());
        for k in &psd_sides {
            let _ = writeln!(out, "{k}");
        }
        out.push('\n');
    }
    if !scalar_cones.is_empty() {
        let _ = writeln!(out, "CON\n{} {}", scalar_rows, scalar_cones.len());
        for c in &scalar_cones {
            let tag = match c {
                Cone::Zero(_) => "L=",
                Cone::NonNeg(_) => "L+",
                Cone::SecondOrder(_) => "Q",
                Cone::Psd(_) => unreachable!(),
            };
            let _ = writeln!(out, "{tag} {}", c.dim());
        }
        out.push('\n');
    }
    let obj: Vec<(usize, f64)> =
        prog.objective.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
    if !obj.is_empty() {
        let _ = writeln!(out, "OBJACOORD\n{}", obj.len());
        for (j, v) in obj {
            let _ = writeln!(out, "{j} {}", num(v));
        }
        out.push('\n');
    }
    if prog.objective_offset != 0.0 {
        let _ = writeln!(out, "OBJBCOORD\n{}\n", num(prog.objective_offset));
    }

    let mut acoord = Vec::new();
    let mut hcoord = Vec::new();
    for &(r, c, v) in &prog.a {
        let (psd, ord, local) = map.rows[r];
        if psd {
            let (i, j) = coords[ord][local];
            let f = if i == j { 1.0 } else { SQRT2 };
            // lower triangle: row >= col
            hcoord.push(format!("{ord} {c} {j} {i} {}", num(-v / f)));
        } else {
            acoord.push(format!("{local} {c} {}", num(-v)));
        }
    }
    let mut bcoord = Vec::new();
    let mut dcoord = Vec::new();
    for (r, &v) in prog.b.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let (psd, ord, local) = map.rows[r];
        if psd {
            let (i, j) = coords[ord][local];
            let f = if i == j { 1.0 } else { SQRT2 };
            dcoord.push(format!("{ord} {j} {i} {}", num(v / f)));
        } else {
            bcoord.push(format!("{local} {}", num(v)));
        }
    }
    for (name, lines) in [("ACOORD", acoord), ("BCOORD", bcoord), ("HCOORD", hcoord), ("DCOORD", dcoord)] {
        if !lines.is_empty() {
            let _ = writeln!(out, "{name}\n{}", lines.len());
            for l in lines {
                out.push_str(&l);
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, comment: &[char]) -> Self {
        let items = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with(comment))
            .collect();
        Lines { items, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let r = self.items.get(self.pos).copied();
        self.pos += 1;
        r
    }

    fn expect(&mut self) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| parse_err(0, "unexpected end of input"))
    }
}

fn field<T: FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, "missing field"))?.parse().map_err(|_| parse_err(line, "malformed number"))
}

/// Reads `block <idx> <cone> <label>` comment lines as (is_psd, label) pairs.
fn labels_from_comments(text: &str, prefix: char) -> Vec<(bool, String)> {
    let mut labels = Vec::new();
    for l in text.lines() {
        let l = l.trim();
        if let Some(rest) = l.strip_prefix(prefix).map(str::trim).and_then(|r| r.strip_prefix("block ")) {
            let mut parts = rest.splitn(3, ' ');
            let _idx = parts.next();
            let psd = parts.next().is_some_and(|c| c.starts_with("psd"));
            labels.push((psd, parts.next().unwrap_or("").to_string()));
        }
    }
    labels
}

fn read_cbf(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines::new(text, &['#']);
    let mut n = 0usize;
    let mut psd_sides: Vec<usize> = Vec::new();
    let mut scalar_cones: Vec<Cone> = Vec::new();
    let mut objective: Vec<(usize, f64)> = Vec::new();
    let mut offset = 0.0;
    let mut acoord: Vec<(usize, usize, f64)> = Vec::new();
    let mut bcoord: Vec<(usize, f64)> = Vec::new();
    let mut hcoord: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut dcoord: Vec<(usize, usize, usize, f64)> = Vec::new();

    while let Some((ln, head)) = lines.next() {
        match head {
            "VER" => {
                let (l, v) = lines.expect()?;
                if v.trim() != "1" {
                    return Err(parse_err(l, format!("unsupported CBF version {v}")));
                }
            }
            "OBJSENSE" => {
                let (l, v) = lines.expect()?;
                if v != "MIN" {
                    return Err(parse_err(l, "only OBJSENSE MIN is supported"));
                }
            }
            "VAR" => {
                let (l, v) = lines.expect()?;
                let mut it = v.split_whitespace();
                n = field(it.next(), l)?;
                let groups: usize = field(it.next(), l)?;
                for _ in 0..groups {
                    let (l, g) = lines.expect()?;
                    if !g.starts_with('F') {
                        return Err(parse_err(l, "only free variables are supported"));
                    }
                }
            }
            "PSDCON" => {
                let (l, v) = lines.expect()?;
                let count: usize = field(Some(v), l)?;
                for _ in 0..count {
                    let (l, v) = lines.expect()?;
                    psd_sides.push(field(Some(v), l)?);
                }
            }
            "CON" => {
                let (l, v) = lines.expect()?;
                let mut it = v.split_whitespace();
                let _rows: usize = field(it.next(), l)?;
                let groups: usize = field(it.next(), l)?;
                for _ in 0..groups {
                    let (l, g) = lines.expect()?;
                    let mut it = g.split_whitespace();
                    let tag = it.next().unwrap_or("");
                    let d: usize = field(it.next(), l)?;
                    scalar_cones.push(match tag {
                        "L=" => Cone::Zero(d),
                        "L+" => Cone::NonNeg(d),
                        "Q" => Cone::SecondOrder(d),
                        other => return Err(parse_err(l, format!("unsupported cone {other}"))),
                    });
                }
            }
            "OBJACOORD" | "ACOORD" | "BCOORD" | "HCOORD" | "DCOORD" => {
                let (l, v) = lines.expect()?;
                let count: usize = field(Some(v), l)?;
                for _ in 0..count {
                    let (l, e) = lines.expect()?;
                    let mut it = e.split_whitespace();
                    match head {
                        "OBJACOORD" => objective.push((field(it.next(), l)?, field(it.next(), l)?)),
                        "ACOORD" => acoord.push((field(it.next(), l)?, field(it.next(), l)?, field(it.next(), l)?)),
                        "BCOORD" => bcoord.push((field(it.next(), l)?, field(it.next(), l)?)),
                        "HCOORD" => hcoord.push((
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                        )),
                        _ => dcoord.push((
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                            field(it.next(), l)?,
                        )),
                    }
                }
            }
            "OBJBCOORD" => {
                let (l, v) = lines.expect()?;
                offset = field(Some(v), l)?;
            }
            other => return Err(parse_err(ln, format!("unsupported section {other}"))),
        }
    }

    // Scalar cones first, then PSD blocks.
    let scalar_rows: usize = scalar_cones.iter().map(Cone::dim).sum();
    let mut psd_offsets = Vec::with_capacity(psd_sides.len());
    let mut off = scalar_rows;
    for &k in &psd_sides {
        psd_offsets.push(off);
        off += k * (k + 1) / 2;
    }
    let m = off;
    let mut a = Vec::with_capacity(acoord.len() + hcoord.len());
    let mut b = vec![0.0; m];
    let psd_row = |p: usize, i: usize, j: usize| -> Result<(usize, f64)> {
        let k = *psd_sides.get(p).ok_or_else(|| parse_err(0, "PSD index out of range"))?;
        if i >= k || j >= k {
            return Err(parse_err(0, "PSD coordinate out of range"));
        }
        Ok((psd_offsets[p] + svec_index(i, j), if i == j { 1.0 } else { SQRT2 }))
    };
    for (r, c, v) in acoord {
        if r >= scalar_rows || c >= n {
            return Err(parse_err(0, "ACOORD out of range"));
        }
        a.push((r, c, -v));
    }
    for (r, v) in bcoord {
        *b.get_mut(r).ok_or_else(|| parse_err(0, "BCOORD out of range"))? += v;
    }
    for (p, c, i, j, v) in hcoord {
        let (row, f) = psd_row(p, i, j)?;
        a.push((row, c, -v * f));
    }
    for (p, i, j, v) in dcoord {
        let (row, f) = psd_row(p, i, j)?;
        b[row] += v * f;
    }
    ConicProgram::coalesce(&mut a);
    let mut obj = vec![0.0; n];
    for (j, v) in objective {
        *obj.get_mut(j).ok_or_else(|| parse_err(0, "OBJACOORD out of range"))? += v;
    }
    let cones: Vec<Cone> = scalar_cones.into_iter().chain(psd_sides.iter().map(|&k| Cone::Psd(k))).collect();
    // The format stores scalar cones before PSD cones; reorder labels to match.
    let commented = labels_from_comments(text, '#');
    let block_labels = if commented.len() == cones.len() {
        let (psd, scalar): (Vec<_>, Vec<_>) = commented.into_iter().partition(|(p, _)| *p);
        scalar.into_iter().chain(psd).map(|(_, l)| l).collect()
    } else {
        (0..cones.len()).map(|i| format!("block{i}")).collect()
    };
    let prog = ConicProgram {
        objective: obj,
        objective_offset: offset,
        a,
        b,
        cones,
        var_names: (0..n).map(|j| format!("z[{j}]")).collect(),
        block_labels,
        warnings: Vec::new(),
    };
    prog.check()?;
    Ok(prog)
}

fn write_sdpa(prog: &ConicProgram) -> Result<String> {
    let mut structure = Vec::with_capacity(prog.cones.len());
    for (idx, cone) in prog.cones.iter().enumerate() {
        structure.push(match *cone {
            Cone::NonNeg(n) => -(n as i64),
            Cone::Psd(k) => k as i64,
            other => {
                return Err(Error::UnsupportedCone {
                    block: idx,
                    cone: format!("{other} '{}'", prog.block_labels[idx]),
                    format: "SDPA-sparse",
                })
            }
        });
    }
    // Per-row (block number 1-based, i, j) with i <= j, 1-based, and scale.
    let mut coord = Vec::with_capacity(prog.num_rows());
    for (bi, cone) in prog.cones.iter().enumerate() {
        match *cone {
            Cone::NonNeg(n) => coord.extend((1..=n).map(|i| (bi + 1, i, i, 1.0))),
            Cone::Psd(k) => coord.extend(
                psd_coords(k).into_iter().map(|(i, j)| (bi + 1, i + 1, j + 1, if i == j { 1.0 } else { SQRT2 })),
            ),
            _ => unreachable!(),
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "* canonical form: minimize c'z s.t. sum_j F_j z_j - F_0 PSD, F_j = -A[:,j], F_0 = -b");
    let _ = writeln!(out, "* objective_offset {}", num(prog.objective_offset));
    for (idx, (cone, label)) in prog.cones.iter().zip(&prog.block_labels).enumerate() {
        let _ = writeln!(out, "* block {idx} {cone} {label}");
    }
    let _ = writeln!(out, "{}", prog.num_vars());
    let _ = writeln!(out, "{}", structure.len());
    let _ = writeln!(out, "{}", structure.iter().map(i64::to_string).collect::<Vec<_>>().join(" "));
    let _ = writeln!(out, "{}", prog.objective.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "));
    for (r, &v) in prog.b.iter().enumerate() {
        if v != 0.0 {
            let (blk, i, j, f) = coord[r];
            let _ = writeln!(out, "0 {blk} {i} {j} {}", num(-v / f));
        }
    }
    // Entries grouped by matrix number (variable), as SDPA readers expect.
    let mut by_col: Vec<(usize, usize, f64)> = prog.a.iter().map(|&(r, c, v)| (c, r, v)).collect();
    by_col.sort_by_key(|x| (x.0, x.1));
    for (c, r, v) in by_col {
        let (blk, i, j, f) = coord[r];
        let _ = writeln!(out, "{} {blk} {i} {j} {}", c + 1, num(-v / f));
    }
    Ok(out)
}

fn read_sdpa(text: &str) -> Result<ConicProgram> {
    let mut offset = 0.0;
    for l in text.lines() {
        if let Some(v) = l.trim().strip_prefix("* objective_offset ") {
            offset = v.trim().parse().map_err(|_| parse_err(0, "bad objective offset"))?;
        }
    }
    let mut lines = Lines::new(text, &['*', '"']);
    let clean = |s: &str| s.replace(['{', '}', '(', ')', ','], " ");
    let (l, v) = lines.expect()?;
    let n: usize = field(clean(v).split_whitespace().next(), l)?;
    let (l, v) = lines.expect()?;
    let nblocks: usize = field(clean(v).split_whitespace().next(), l)?;
    let (l, v) = lines.expect()?;
    let structure: Vec<i64> = clean(v).split_whitespace().map(|t| field(Some(t), l)).collect::<Result<_>>()?;
    if structure.len() != nblocks {
        return Err(parse_err(l, "block structure length mismatch"));
    }
    let mut obj = Vec::with_capacity(n);
    while obj.len() < n {
        let (l, v) = lines.expect()?;
        for t in clean(v).split_whitespace() {
            obj.push(field::<f64>(Some(t), l)?);
        }
    }
    let mut cones = Vec::with_capacity(nblocks);
    let mut offsets = Vec::with_capacity(nblocks);
    let mut m = 0;
    for &s in &structure {
        offsets.push(m);
        let cone = if s < 0 { Cone::NonNeg((-s) as usize) } else { Cone::Psd(s as usize) };
        m += cone.dim();
        cones.push(cone);
    }
    let mut a = Vec::new();
    let mut b = vec![0.0; m];
    while let Some((l, e)) = lines.next() {
        let e = clean(e);
        let mut it = e.split_whitespace();
        let mat: usize = field(it.next(), l)?;
        let blk: usize = field(it.next(), l)?;
        let i: usize = field(it.next(), l)?;
        let j: usize = field(it.next(), l)?;
        let v: f64 = field(it.next(), l)?;
        if blk == 0 || blk > nblocks || i == 0 || j == 0 || mat > n {
            return Err(parse_err(l, "entry index out of range"));
        }
        let (row, f) = match cones[blk - 1] {
            Cone::NonNeg(d) => {
                if i != j || i > d {
                    return Err(parse_err(l, "LP block entry must be diagonal"));
                }
                (offsets[blk - 1] + i - 1, 1.0)
            }
            Cone::Psd(k) => {
                if i > k || j > k {
                    return Err(parse_err(l, "PSD entry out of range"));
                }
                (offsets[blk - 1] + svec_index(i - 1, j - 1), if i == j { 1.0 } else { SQRT2 })
            }
            _ => unreachable!(),
        };
        if mat == 0 {
            b[row] += -v * f;
        } else {
            a.push((row, mat - 1, -v * f));
        }
    }
    ConicProgram::coalesce(&mut a);
    let commented = labels_from_comments(text, '*');
    let block_labels = if commented.len() == cones.len() {
        commented.into_iter().map(|(_, l)| l).collect()
    } else {
        (0..cones.len()).map(|i| format!("block{i}")).collect()
    };
    let prog = ConicProgram {
        objective: obj,
        objective_offset: offset,
        a,
        b,
        cones,
        var_names: (0..n).map(|j| format!("z[{j}]")).collect(),
        block_labels,
        warnings: Vec::new(),
    };
    prog.check()?;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ExprMatrix, LinExpr, ProgramBuilder};

    fn lp() -> ConicProgram {
        let mut b = ProgramBuilder::new();
        let x = b.var("x");
        let y = b.var("y");
        b.add_nonneg("rows", vec![LinExpr::from(x) - 1.0, LinExpr::from(y) + x * 2.0]);
        b.add_zero("eq", vec![LinExpr::from(x) + y - 3.0]);
        b.minimize(LinExpr::from(x) + y * 0.5);
        b.build()
    }

    #[test]
    fn lp_cbf_has_only_linear_cones() {
        let text = export(&lp(), ExportFormat::Cbf).unwrap();
        assert!(text.contains("L+ 2"));
        assert!(text.contains("L= 1"));
        assert!(!text.contains("PSDCON"));
        assert!(!text.contains("\nQ "));
    }

    #[test]
    fn psd3_sdpa_single_block() {
        let mut b = ProgramBuilder::new();
        let t = b.var("t");
        let mut m = ExprMatrix::new(3);
        for i in 0..3 {
            m.get_mut(i, i).add_term(t, 1.0).add_const(-(i as f64));
        }
        m.add_sym(0, 2, &LinExpr::constant(0.5), 1.0);
        b.add_psd("blk", &m);
        b.minimize(t.into());
        let text = export(&b.build(), ExportFormat::SdpaSparse).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!(body[0], "1");
        assert_eq!(body[1], "1");
        assert_eq!(body[2], "3");
    }

    #[test]
    fn sdpa_rejects_soc_naming_block() {
        let mut b = ProgramBuilder::new();
        let t = b.var("t");
        b.add_soc("norm-row", vec![t.into(), LinExpr::constant(1.0)]);
        let err = export(&b.build(), ExportFormat::SdpaSparse).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block 0") && msg.contains("norm-row"), "{msg}");
    }

    #[test]
    fn format_parse() {
        assert_eq!("cbf".parse::<ExportFormat>().unwrap(), ExportFormat::Cbf);
        assert_eq!("sdpa".parse::<ExportFormat>().unwrap(), ExportFormat::SdpaSparse);
        assert!("mps".parse::<ExportFormat>().is_err());
    }
}
