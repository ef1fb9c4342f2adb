//! Plain-text snapshot of a realized system.
//!
//! ```text
//! hball-dyadic-snapshot 1
//! dim 2
//! eta 5.0000000000000000e-1
//! ...
//! level 1 9
//! <index> <parent> <observed_radius> <x_1> ... <x_n>
//! ```
//!
//! Floats carry 17 significant digits, which round-trips every `f64`.
//! Children lists are rebuilt from the parent links on load.

use std::fmt::Write as _;

use super::{Children, Cube, DyadicConfig, DyadicError, Inner};
use crate::geometry::BallPoint;

const MAGIC: &str = "hball-dyadic-snapshot 1";

pub(super) fn write(inner: &Inner) -> String {
    let cfg = &inner.cfg;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dim {}", cfg.dim);
    let _ = writeln!(out, "eta {:.16e}", cfg.eta);
    let _ = writeln!(out, "kappa0 {:.16e}", cfg.kappa0);
    let _ = writeln!(out, "kappa1 {:.16e}", cfg.kappa1);
    let _ = writeln!(out, "max_level {}", cfg.max_level);
    let _ = writeln!(out, "net_resolution {}", cfg.net_resolution);
    let _ = writeln!(out, "seed {}", cfg.seed);
    for (k, level) in inner.levels.iter().enumerate() {
        let _ = writeln!(out, "level {k} {}", level.len());
        for (i, cube) in level.iter().enumerate() {
            let _ = write!(out, "{} {} {:.16e}", i + 1, cube.parent, cube.observed_radius);
            for c in cube.center.coords() {
                let _ = write!(out, " {c:.16e}");
            }
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, DyadicError> {
        for (i, l) in self.it.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.trim());
            }
        }
        Err(self.err("unexpected end of snapshot"))
    }

    fn err(&self, message: impl Into<String>) -> DyadicError {
        DyadicError::Snapshot {
            line: self.line,
            message: message.into(),
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, DyadicError> {
        let l = self.next()?;
        let value = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key}`")))?;
        value
            .trim()
            .parse()
            .map_err(|_| self.err(format!("cannot parse `{key}` value `{value}`")))
    }
}

fn num<T: std::str::FromStr>(lines: &Lines<'_>, tok: Option<&str>, what: &str) -> Result<T, DyadicError> {
    tok.ok_or_else(|| lines.err(format!("missing {what}")))?
        .parse()
        .map_err(|_| lines.err(format!("cannot parse {what}")))
}

pub(super) fn read(text: &str) -> Result<Inner, DyadicError> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a dyadic snapshot"));
    }
    let cfg = DyadicConfig {
        dim: lines.field("dim")?,
        eta: lines.field("eta")?,
        kappa0: lines.field("kappa0")?,
        kappa1: lines.field("kappa1")?,
        max_level: lines.field("max_level")?,
        net_resolution: lines.field("net_resolution")?,
        seed: lines.field("seed")?,
    };
    cfg.validate().map_err(|e| lines.err(e.to_string()))?;

    let mut levels: Vec<Vec<Cube>> = Vec::new();
    while let Ok(header) = lines.next() {
        let mut tok = header.split_whitespace();
        if tok.next() != Some("level") {
            return Err(lines.err("expected `level`"));
        }
        let k: usize = num(&lines, tok.next(), "level number")?;
        let count: usize = num(&lines, tok.next(), "cube count")?;
        if k != levels.len() {
            return Err(lines.err(format!("level {k} out of order")));
        }
        if k > cfg.max_level as usize {
            return Err(lines.err(format!("level {k} exceeds max_level")));
        }
        let mut cubes = Vec::with_capacity(count);
        for i in 1..=count {
            let l = lines.next()?;
            let mut tok = l.split_whitespace();
            let index: usize = num(&lines, tok.next(), "cube index")?;
            if index != i {
                return Err(lines.err(format!("expected cube index {i}, found {index}")));
            }
            let parent: u32 = num(&lines, tok.next(), "parent index")?;
            let observed_radius: f64 = num(&lines, tok.next(), "observed radius")?;
            let coords = tok
                .map(|t| t.parse::<f64>().map_err(|_| lines.err("cannot parse coordinate")))
                .collect::<Result<Vec<_>, _>>()?;
            if coords.len() != cfg.dim {
                return Err(lines.err(format!("expected {} coordinates, found {}", cfg.dim, coords.len())));
            }
            let center = BallPoint::new(coords).map_err(|e| lines.err(e.to_string()))?;
            let parent_ok = if k == 0 {
                parent == 0
            } else {
                parent >= 1 && parent as usize <= levels[k - 1].len()
            };
            if !parent_ok {
                return Err(lines.err(format!("parent {parent} does not exist")));
            }
            cubes.push(Cube {
                center,
                parent,
                observed_radius,
                children: None,
            });
        }
        levels.push(cubes);
    }
    if levels.first().is_none_or(|l| l.len() != 1) {
        return Err(lines.err("level 0 must hold exactly the root"));
    }

    let mut inner = Inner { cfg, levels };
    for k in 1..inner.levels.len() {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); inner.levels[k - 1].len()];
        for (i, cube) in inner.levels[k].iter().enumerate() {
            lists[cube.parent as usize - 1].push(i as u32 + 1);
        }
        for (p, ids) in lists.into_iter().enumerate() {
            if !ids.is_empty() {
                let entry: Children = inner.children_entry(k as u32, ids);
                inner.levels[k - 1][p].children = Some(entry);
            }
        }
    }
    Ok(inner)
}
