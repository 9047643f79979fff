//! LP-format text output (CPLEX dialect) and a reader for the same subset.

use std::collections::BTreeMap;
use std::io::Write;

use super::{Constraint, MilpBlock, MilpError, Sense, VarKind, Variable};

fn num(v: f64) -> String {
    format!("{}", v + 0.0)
}

fn bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        num(v)
    }
}

fn write_terms<W: Write>(out: &mut W, terms: &[(String, f64)]) -> std::io::Result<()> {
    for (i, (name, c)) in terms.iter().enumerate() {
        let sign = if *c < 0.0 { "-" } else { "+" };
        if i == 0 {
            if *c < 0.0 {
                write!(out, "- ")?;
            }
        } else {
            write!(out, " {sign} ")?;
        }
        write!(out, "{} {name}", num(c.abs()))?;
    }
    Ok(())
}

/// Writes the blocks as one LP problem with a zero objective.
pub fn emit_lp<W: Write>(blocks: &[MilpBlock], mut out: W) -> std::io::Result<()> {
    writeln!(out, "\\ blocks: {}", blocks.len())?;
    writeln!(out, "Minimize")?;
    writeln!(out, " obj: 0")?;
    writeln!(out, "Subject To")?;
    for b in blocks {
        for c in &b.constraints {
            write!(out, " {}: ", c.name)?;
            write_terms(&mut out, &c.terms)?;
            writeln!(out, " {} {}", c.sense.symbol(), num(c.rhs))?;
        }
    }
    writeln!(out, "Bounds")?;
    for b in blocks {
        for v in b.features.iter().chain(&b.variables) {
            if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
                writeln!(out, " {} free", v.name)?;
            } else {
                writeln!(out, " {} <= {} <= {}", bound(v.lower), v.name, bound(v.upper))?;
            }
        }
    }
    let bins: Vec<&str> = blocks.iter().flat_map(|b| b.binaries()).collect();
    if !bins.is_empty() {
        writeln!(out, "Binaries")?;
        for chunk in bins.chunks(8) {
            writeln!(out, " {}", chunk.join(" "))?;
        }
    }
    writeln!(out, "End")
}

/// One line per observation: id, prefix, output variable, sizes, and the
/// feature symbols a host model must bind.
pub fn write_manifest<W: Write>(blocks: &[MilpBlock], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# observation prefix output constraints binaries continuous features")?;
    for (i, b) in blocks.iter().enumerate() {
        let s = b.stats();
        let feats: Vec<&str> = b.features.iter().map(|v| v.name.as_str()).collect();
        writeln!(
            out,
            "{i} {} {} {} {} {} {}",
            b.prefix,
            b.output_var,
            s.n_constraints,
            s.n_binary,
            s.n_continuous,
            feats.join(",")
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpFile {
    pub constraints: Vec<Constraint>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub binaries: Vec<String>,
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

fn parse_num(tok: &str, line: usize) -> Result<f64, MilpError> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| MilpError::Parse {
            line,
            msg: format!("expected a number, found {tok:?}"),
        }),
    }
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

/// Splits `2 x + 3.5 y - z` into tokens, keeping signs separate.
fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        if !cur.is_empty() {
            out.push(std::mem::take(cur));
        }
    };
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            flush(&mut cur, &mut out);
        } else if c == '<' || c == '>' || c == '=' {
            flush(&mut cur, &mut out);
            let mut op = c.to_string();
            if i + 1 < chars.len() && matches!(chars[i + 1], '<' | '>' | '=') {
                op.push(chars[i + 1]);
                i += 1;
            }
            out.push(op);
        } else if (c == '+' || c == '-') && !cur.ends_with(['e', 'E']) {
            flush(&mut cur, &mut out);
            out.push(c.to_string());
        } else {
            cur.push(c);
        }
        i += 1;
    }
    flush(&mut cur, &mut out);
    out
}

fn parse_expr(toks: &[String], line: usize) -> Result<Vec<(String, f64)>, MilpError> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for t in toks {
        match t.as_str() {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(v) = t.parse::<f64>() {
                    if coef.is_some() {
                        return Err(MilpError::Parse {
                            line,
                            msg: "two coefficients in a row".into(),
                        });
                    }
                    coef = Some(v);
                } else {
                    terms.push((t.clone(), sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                }
            }
        }
    }
    if coef.is_some() {
        return Err(MilpError::Parse {
            line,
            msg: "constant term in expression".into(),
        });
    }
    Ok(terms)
}

fn parse_constraint(text: &str, line: usize) -> Result<Constraint, MilpError> {
    let (name, body) = text.split_once(':').ok_or_else(|| MilpError::Parse {
        line,
        msg: "constraint without a name".into(),
    })?;
    let toks = tokens(body);
    let at = toks.iter().position(|t| parse_sense(t).is_some()).ok_or_else(|| MilpError::Parse {
        line,
        msg: "constraint without a sense".into(),
    })?;
    let rhs_toks = &toks[at + 1..];
    let rhs = match rhs_toks {
        [v] => parse_num(v, line)?,
        [s, v] if s == "-" => -parse_num(v, line)?,
        [s, v] if s == "+" => parse_num(v, line)?,
        _ => {
            return Err(MilpError::Parse {
                line,
                msg: "right-hand side must be a single number".into(),
            })
        }
    };
    Ok(Constraint {
        name: name.trim().to_string(),
        terms: parse_expr(&toks[..at], line)?,
        sense: parse_sense(&toks[at]).expect("position found a sense"),
        rhs,
    })
}

fn parse_bound(text: &str, line: usize, bounds: &mut BTreeMap<String, (f64, f64)>) -> Result<(), MilpError> {
    let toks = tokens(text);
    // re-join signed numbers split by the tokenizer
    let mut t: Vec<String> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if (toks[i] == "-" || toks[i] == "+") && i + 1 < toks.len() {
            t.push(format!("{}{}", toks[i], toks[i + 1]));
            i += 2;
        } else {
            t.push(toks[i].clone());
            i += 1;
        }
    }
    let bad = || MilpError::Parse {
        line,
        msg: format!("unrecognized bound {text:?}"),
    };
    match t.as_slice() {
        [v, free] if free.eq_ignore_ascii_case("free") => {
            bounds.insert(v.clone(), (f64::NEG_INFINITY, f64::INFINITY));
        }
        [lo, s1, v, s2, hi] if parse_sense(s1) == Some(Sense::Le) && parse_sense(s2) == Some(Sense::Le) => {
            bounds.insert(v.clone(), (parse_num(lo, line)?, parse_num(hi, line)?));
        }
        [v, s, val] => {
            let val = parse_num(val, line)?;
            let e = bounds.entry(v.clone()).or_insert((0.0, f64::INFINITY));
            match parse_sense(s).ok_or_else(bad)? {
                Sense::Le => e.1 = val,
                Sense::Ge => e.0 = val,
                Sense::Eq => *e = (val, val),
            }
        }
        _ => return Err(bad()),
    }
    Ok(())
}

pub fn parse_lp(text: &str) -> Result<LpFile, MilpError> {
    let mut lp = LpFile::default();
    let mut section = Section::Preamble;
    let mut pending = String::new();
    let mut pending_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('\\').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let lower = body.to_ascii_lowercase();
        let header = match lower.as_str() {
            "minimize" | "minimise" | "min" | "maximize" | "maximise" | "max" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(h) = header {
            if !pending.is_empty() {
                return Err(MilpError::Parse {
                    line: pending_line,
                    msg: "unterminated constraint".into(),
                });
            }
            section = h;
            continue;
        }
        match section {
            Section::Preamble | Section::End => {
                return Err(MilpError::Parse {
                    line,
                    msg: format!("unexpected text {body:?}"),
                })
            }
            Section::Objective => {}
            Section::Constraints => {
                if pending.is_empty() {
                    pending_line = line;
                }
                pending.push(' ');
                pending.push_str(body);
                let toks = tokens(&pending);
                let complete = toks
                    .iter()
                    .position(|t| parse_sense(t).is_some())
                    .is_some_and(|at| toks[at + 1..].iter().any(|t| t != "+" && t != "-"));
                if complete {
                    lp.constraints.push(parse_constraint(pending.trim(), pending_line)?);
                    pending.clear();
                }
            }
            Section::Bounds => parse_bound(body, line, &mut lp.bounds)?,
            Section::Binaries => lp.binaries.extend(body.split_whitespace().map(str::to_string)),
        }
    }
    if section != Section::End {
        return Err(MilpError::Parse {
            line: text.lines().count(),
            msg: "missing End".into(),
        });
    }
    Ok(lp)
}

impl LpFile {
    /// Rebuilds the block with the given prefix; feature symbols are the
    /// prefixed names from [`super::feature_names`].
    pub fn extract_block(&self, prefix: &str, n_features: usize) -> Result<MilpBlock, MilpError> {
        let constraints: Vec<Constraint> =
            self.constraints.iter().filter(|c| c.name.starts_with(prefix)).cloned().collect();
        if constraints.is_empty() {
            return Err(MilpError::MissingBlock(prefix.to_string()));
        }
        let feature_names: Vec<String> =
            super::feature_names(n_features).iter().map(|n| format!("{prefix}{n}")).collect();
        let bound_of = |n: &str| self.bounds.get(n).copied().unwrap_or((0.0, f64::INFINITY));
        let features = feature_names
            .iter()
            .map(|n| {
                let (lower, upper) = bound_of(n);
                Variable {
                    name: n.clone(),
                    kind: VarKind::Continuous,
                    lower,
                    upper,
                }
            })
            .collect();
        let mut seen = Vec::<String>::new();
        for c in &constraints {
            for (n, _) in &c.terms {
                if !feature_names.contains(n) && !seen.contains(n) {
                    seen.push(n.clone());
                }
            }
        }
        let mut variables: Vec<Variable> = seen
            .into_iter()
            .map(|n| {
                let binary = self.binaries.contains(&n);
                let (lower, upper) = if binary { (0.0, 1.0) } else { bound_of(&n) };
                Variable {
                    name: n,
                    kind: if binary { VarKind::Binary } else { VarKind::Continuous },
                    lower,
                    upper,
                }
            })
            .collect();
        variables.sort_by_key(|v| v.kind != VarKind::Binary);
        Ok(MilpBlock {
            prefix: prefix.to_string(),
            variables,
            features,
            constraints,
            output_var: format!("{prefix}yhat"),
        })
    }
}
