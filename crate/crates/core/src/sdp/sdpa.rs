//! SDPA sparse (`.dat-s`) reader and writer.
//!
//! The equality form maps onto the SDPA dual problem
//! `max <F0, Y>  s.t.  <F_i, Y> = c_i,  Y PSD`: each equality becomes one
//! `F_i` with `c_i` its right-hand side. Nonnegative scalars, then free
//! scalars split as `u = u+ - u-`, occupy a trailing diagonal block. Min
//! problems are written with `F0 = -C`; a leading comment records the sense
//! so that [`read_sdpa`] restores it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{merge_terms, SdpProblem, Sense, VarRef};
use crate::error::{Error, Result};

const SENSE_TAG: &str = "\"sipsdp sense";

/// Where a scalar variable lands in the diagonal block.
fn scalar_slots(prob: &SdpProblem, v: VarRef) -> Vec<(usize, f64)> {
    let nlp = prob.nonneg_vars.len();
    match v {
        VarRef::Nonneg(k) => vec![(k, 1.0)],
        VarRef::Free(k) => vec![(nlp + 2 * k, 1.0), (nlp + 2 * k + 1, -1.0)],
        VarRef::Entry { .. } => Vec::new(),
    }
}

fn emit(out: &mut String, prob: &SdpProblem, matno: usize, terms: &[(VarRef, f64)], scale: f64) {
    let diag_block = prob.psd_blocks.len() + 1;
    let mut diag: BTreeMap<usize, f64> = BTreeMap::new();
    for (v, c) in merge_terms(terms) {
        let c = c * scale;
        match v {
            VarRef::Entry { block, i, j } => {
                let val = if i == j { c } else { 0.5 * c };
                let _ = writeln!(out, "{matno} {} {} {} {val}", block + 1, i + 1, j + 1);
            }
            _ => {
                for (pos, s) in scalar_slots(prob, v) {
                    *diag.entry(pos).or_insert(0.0) += s * c;
                }
            }
        }
    }
    for (pos, val) in diag {
        if val != 0.0 {
            let _ = writeln!(out, "{matno} {diag_block} {} {} {val}", pos + 1, pos + 1);
        }
    }
}

/// Render a problem as SDPA sparse text.
pub fn write_sdpa(prob: &SdpProblem) -> Result<String> {
    prob.validate()?;
    let ndiag = prob.nonneg_vars.len() + 2 * prob.free_vars.len();
    let mut sizes: Vec<i64> = prob.psd_blocks.iter().map(|b| b.dim as i64).collect();
    if ndiag > 0 {
        sizes.push(-(ndiag as i64));
    }
    let mut out = String::new();
    let sense = match prob.sense {
        Sense::Min => "min",
        Sense::Max => "max",
    };
    let _ = writeln!(out, "{SENSE_TAG} {sense}");
    let _ = writeln!(out, "{}", prob.equalities.len());
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(
        out,
        "{}",
        sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(
        out,
        "{}",
        prob.equalities
            .iter()
            .map(|e| e.rhs.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let obj_scale = match prob.sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    emit(&mut out, prob, 0, &prob.objective, obj_scale);
    for (k, eq) in prob.equalities.iter().enumerate() {
        emit(&mut out, prob, k + 1, &eq.terms, 1.0);
    }
    Ok(out)
}

pub fn export_sdpa(prob: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_sdpa(prob)?)?;
    Ok(())
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::Parse {
                line: self.items.last().map_or(0, |t| t.0),
                msg: format!("unexpected end of input, expected {what}"),
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.next(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("expected {what}, found `{tok}`"),
        })
    }
}

fn split_line(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || "{}(),".contains(c))
        .filter(|t| !t.is_empty())
}

/// Parse SDPA sparse text.
pub fn read_sdpa(text: &str) -> Result<SdpProblem> {
    let mut sense = Sense::Max;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    while let Some(&(_, l)) = lines.peek() {
        let t = l.trim_start();
        if t.starts_with('"') || t.starts_with('*') {
            if let Some(rest) = t.strip_prefix(SENSE_TAG) {
                if rest.trim() == "min" {
                    sense = Sense::Min;
                }
            }
            lines.next();
        } else if t.is_empty() {
            lines.next();
        } else {
            break;
        }
    }
    // The first two header lines carry one number each; anything after it
    // is a comment by convention.
    let mut header = Vec::new();
    for _ in 0..2 {
        let (no, l) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        let tok = split_line(l).next().ok_or(Error::Parse {
            line: no,
            msg: "empty header line".into(),
        })?;
        header.push((no, tok));
    }
    let mut toks = Tokens {
        items: header,
        pos: 0,
    };
    for (no, l) in lines {
        toks.items.extend(split_line(l).map(|t| (no, t)));
    }

    let m: usize = toks.parse("number of constraints")?;
    let nblocks: usize = toks.parse("number of blocks")?;
    let mut sizes = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let (line, tok) = toks.next("block size")?;
        let s: i64 = tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("expected block size, found `{tok}`"),
        })?;
        if s == 0 {
            return Err(Error::Parse {
                line,
                msg: "block size 0".into(),
            });
        }
        sizes.push(s);
    }
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        rhs.push(toks.parse::<f64>("right-hand side")?);
    }

    let mut prob = SdpProblem::new(sense);
    // block number -> (psd index | first nonneg index)
    let mut layout = Vec::with_capacity(nblocks);
    for (k, &s) in sizes.iter().enumerate() {
        if s > 0 {
            layout.push((true, prob.add_psd_block(format!("B{}", k + 1), s as usize)));
        } else {
            let first = prob.nonneg_vars.len();
            for i in 0..(-s) as usize {
                prob.add_nonneg(format!("d{}_{}", k + 1, i + 1));
            }
            layout.push((false, first));
        }
    }
    let mut rows: Vec<Vec<(VarRef, f64)>> = vec![Vec::new(); m + 1];
    while toks.pos < toks.items.len() {
        let line = toks.items[toks.pos].0;
        let matno: usize = toks.parse("matrix number")?;
        let blk: usize = toks.parse("block number")?;
        let i: usize = toks.parse("row index")?;
        let j: usize = toks.parse("column index")?;
        let v: f64 = toks.parse("value")?;
        let bad = |msg: String| Error::Parse { line, msg };
        if matno > m {
            return Err(bad(format!("matrix number {matno} exceeds {m}")));
        }
        if blk == 0 || blk > nblocks {
            return Err(bad(format!("block number {blk} out of range")));
        }
        let size = sizes[blk - 1].unsigned_abs() as usize;
        if i == 0 || j == 0 || i > size || j > size {
            return Err(bad(format!("index ({i}, {j}) outside block {blk}")));
        }
        let (psd, base) = layout[blk - 1];
        let term = if psd {
            let c = if i == j { v } else { 2.0 * v };
            (VarRef::entry(base, i - 1, j - 1), c)
        } else {
            if i != j {
                return Err(bad(format!("off-diagonal entry in diagonal block {blk}")));
            }
            (VarRef::Nonneg(base + i - 1), v)
        };
        rows[matno].push(term);
    }
    let mut rows = rows.into_iter();
    let obj = merge_terms(&rows.next().unwrap_or_default());
    let obj_scale = match sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    prob.objective = obj.into_iter().map(|(v, c)| (v, c * obj_scale)).collect();
    for (terms, b) in rows.zip(rhs) {
        prob.add_equality(merge_terms(&terms), b);
    }
    Ok(prob)
}

pub fn import_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem> {
    read_sdpa(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::tests::min_x_single;
    use crate::sdp::{solve, Settings, Status};
    use proptest::prelude::*;

    #[test]
    fn min_x_layout() {
        let text = write_sdpa(&min_x_single()).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('"')).collect();
        assert_eq!(body[0], "1");
        assert_eq!(body[1], "1");
        assert_eq!(body[2], "2");
        assert_eq!(body[3], "1");
        assert!(body.contains(&"1 1 1 2 0.5"));
        let back = read_sdpa(&text).unwrap();
        let a = solve(&min_x_single(), &Settings::default()).unwrap();
        let b = solve(&back, &Settings::default()).unwrap();
        assert_eq!(b.status, Status::Optimal);
        assert!((a.primal_value - b.primal_value).abs() <= 1e-6 * (1.0 + a.primal_value.abs()));
    }

    #[test]
    fn empty_objective() {
        let mut p = min_x_single();
        p.objective.clear();
        let text = write_sdpa(&p).unwrap();
        assert!(!text.lines().any(|l| l.starts_with("0 ")));
        assert!(read_sdpa(&text).unwrap().objective.is_empty());
    }

    #[test]
    fn scalars_go_to_a_diagonal_block() {
        let mut p = SdpProblem::new(Sense::Max);
        let b = p.add_psd_block("s", 1);
        let x = p.add_free("x");
        let z = p.add_nonneg("z");
        p.add_equality(
            vec![(VarRef::entry(b, 0, 0), 1.0), (x, 1.0), (z, 1.0)],
            -1.0,
        );
        p.set_objective(Sense::Max, vec![(x, 1.0)]);
        let text = write_sdpa(&p).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('"')).collect();
        assert_eq!(body[2], "1 -3");
        let back = read_sdpa(&text).unwrap();
        assert_eq!(back.nonneg_vars.len(), 3);
        let r = solve(&back, &Settings::default()).unwrap();
        assert!((r.primal_value + 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn foreign_file_with_comments() {
        let text = "* a comment\n\"another\n2 =mdim\n1 =nblocks\n{2}\n(1.0, 2.0)\n\
                    0 1 1 1 1.0\n1 1 1 1 1.0\n2 1 2 2 1.0\n";
        let p = read_sdpa(text).unwrap();
        assert_eq!(p.sense, Sense::Max);
        assert_eq!(p.equalities.len(), 2);
        assert_eq!(p.equalities[1].rhs, 2.0);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "1\n1\n2\n1\n1 1 1 2 abc\n";
        match read_sdpa(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        match read_sdpa("1\n1\n2\n1\n1 1 3 3 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    fn arb_problem() -> impl Strategy<Value = SdpProblem> {
        (1usize..4, 0usize..3, 0usize..3, 1usize..5, any::<bool>())
            .prop_flat_map(|(dim, nfree, nlp, m, max)| {
                let nent = dim * (dim + 1) / 2 + nfree + nlp;
                (
                    Just((dim, nfree, nlp, max)),
                    prop::collection::vec(prop::collection::vec(-3i32..4, nent), m),
                    prop::collection::vec(-3i32..4, m),
                    prop::collection::vec(-3i32..4, nent),
                )
            })
            .prop_map(|((dim, nfree, nlp, max), rows, rhs, obj)| {
                let sense = if max { Sense::Max } else { Sense::Min };
                let mut p = SdpProblem::new(sense);
                let b = p.add_psd_block("X", dim);
                let mut vars = Vec::new();
                for i in 0..dim {
                    for j in i..dim {
                        vars.push(VarRef::entry(b, i, j));
                    }
                }
                for k in 0..nfree {
                    vars.push(p.add_free(format!("u{k}")));
                }
                for k in 0..nlp {
                    vars.push(p.add_nonneg(format!("z{k}")));
                }
                let lin = |c: &[i32]| -> Vec<(VarRef, f64)> {
                    vars.iter()
                        .zip(c)
                        .filter(|(_, &c)| c != 0)
                        .map(|(&v, &c)| (v, c as f64 * 0.5))
                        .collect()
                };
                for (r, b) in rows.iter().zip(&rhs) {
                    p.add_equality(lin(r), *b as f64);
                }
                p.set_objective(sense, lin(&obj));
                p
            })
    }

    /// Canonical value of a linear functional, independent of the layout.
    fn scalar_image(p: &SdpProblem, terms: &[(VarRef, f64)]) -> Vec<(VarRef, f64)> {
        let nlp = p.nonneg_vars.len();
        let mut out = Vec::new();
        for (v, c) in merge_terms(terms) {
            match v {
                VarRef::Free(k) => {
                    out.push((VarRef::Nonneg(nlp + 2 * k), c));
                    out.push((VarRef::Nonneg(nlp + 2 * k + 1), -c));
                }
                other => out.push((other, c)),
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip(p in arb_problem()) {
            let back = read_sdpa(&write_sdpa(&p).unwrap()).unwrap();
            prop_assert_eq!(back.sense, p.sense);
            prop_assert_eq!(back.equalities.len(), p.equalities.len());
            prop_assert_eq!(&back.psd_blocks[0].dim, &p.psd_blocks[0].dim);
            for (a, b) in p.equalities.iter().zip(&back.equalities) {
                prop_assert_eq!(a.rhs, b.rhs);
                prop_assert_eq!(scalar_image(&p, &a.terms), scalar_image(&back, &b.terms));
            }
            prop_assert_eq!(scalar_image(&p, &p.objective), scalar_image(&back, &back.objective));
        }
    }
}
