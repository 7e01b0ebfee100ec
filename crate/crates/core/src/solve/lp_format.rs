//! LP-file export and import (CPLEX/Gurobi dialect subset).
//!
//! The writer emits a canonical minimization file: explicit coefficients
//! on every term, one bounds line per non-default column, a `Binary`
//! section, `End`. Variable names are the family tokens with bracketed
//! indices (`ysc[3]`, `P[3,2,1]`) and survive a round trip through the
//! parser unchanged. A nonzero objective offset is carried by a fixed
//! auxiliary column `__const` so any mainstream reader reproduces the same
//! optimum without objective-constant support.

use std::fmt::Write as _;
use std::path::Path;

use crate::model::{MipModel, Sense};
use crate::scalar::Scalar;

use super::SolveError;

fn num<T: Scalar>(v: T) -> String {
    format!("{:?}", v.f64())
}

/// Render a model in LP format.
pub fn write_lp<T: Scalar>(model: &MipModel<T>) -> Result<String, SolveError> {
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    let mut first = true;
    let term = |out: &mut String, coeff: f64, name: &str, first: &mut bool| {
        if coeff == 0.0 {
            return;
        }
        if *first {
            if coeff < 0.0 {
                let _ = write!(out, " - {:?} {}", -coeff, name);
            } else {
                let _ = write!(out, " {:?} {}", coeff, name);
            }
            *first = false;
        } else if coeff < 0.0 {
            let _ = write!(out, " - {:?} {}", -coeff, name);
        } else {
            let _ = write!(out, " + {:?} {}", coeff, name);
        }
    };
    for c in &model.cols {
        term(&mut out, c.objective.f64(), &c.name, &mut first);
    }
    let offset = model.objective_offset.f64();
    if offset != 0.0 {
        term(&mut out, offset, "__const", &mut first);
    }
    if first {
        // objective identically zero: reference a column so readers accept it
        if let Some(c) = model.cols.first() {
            let _ = write!(out, " 0.0 {}", c.name);
        }
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for row in &model.rows {
        if row.terms.is_empty() {
            return Err(SolveError::BadModel(format!(
                "row {} has no terms; cannot export",
                row.name
            )));
        }
        let _ = write!(out, " {}:", row.name);
        let mut row_first = true;
        for &(col, coeff) in &row.terms {
            term(&mut out, coeff.f64(), &model.cols[col].name, &mut row_first);
        }
        let _ = writeln!(out, " {} {}", row.sense, num(row.rhs));
    }

    let mut bounds = String::new();
    for c in &model.cols {
        let lo = c.lower.f64();
        let hi = c.upper.f64();
        if c.binary && lo == 0.0 && hi == 1.0 {
            continue;
        }
        if lo == hi {
            let _ = writeln!(bounds, " {} = {:?}", c.name, lo);
        } else if lo.is_infinite() && hi.is_infinite() {
            let _ = writeln!(bounds, " {} free", c.name);
        } else if lo.is_infinite() {
            let _ = writeln!(bounds, " -infinity <= {} <= {:?}", c.name, hi);
        } else if hi.is_infinite() {
            if lo != 0.0 {
                let _ = writeln!(bounds, " {} >= {:?}", c.name, lo);
            }
        } else if !(c.binary && lo == 0.0 && hi == 1.0) {
            let _ = writeln!(bounds, " {:?} <= {} <= {:?}", lo, c.name, hi);
        }
    }
    if model.objective_offset.f64() != 0.0 {
        let _ = writeln!(bounds, " __const = 1.0");
    }
    if !bounds.is_empty() {
        out.push_str("Bounds\n");
        out.push_str(&bounds);
    }

    let binaries: Vec<&str> = model
        .cols
        .iter()
        .filter(|c| c.binary)
        .map(|c| c.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for name in binaries {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    Ok(out)
}

/// Write a model to a file in LP format.
pub fn write_lp_file<T: Scalar>(model: &MipModel<T>, path: &Path) -> Result<(), SolveError> {
    let text = write_lp(model)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Objective,
    Rows,
    Bounds,
    Binary,
    Done,
}

/// Parse an LP-format document into a model.
///
/// Supports the dialect produced by [`write_lp`] plus the common
/// variations: implicit coefficient 1, `Maximize` (converted to
/// minimization by negation), `<`/`>` senses and `inf`/`infinity`
/// spellings.
pub fn read_lp<T: Scalar>(text: &str) -> Result<MipModel<T>, SolveError> {
    let mut model = MipModel::<T>::new();
    let mut col_of = std::collections::HashMap::<String, usize>::new();
    let mut explicit_bounds = std::collections::HashSet::<usize>::new();
    let mut maximize = false;
    let mut section = None::<Section>;
    // pending row accumulation (rows may wrap over lines)
    let mut pending = String::new();
    let mut row_count = 0usize;

    let mut intern = |model: &mut MipModel<T>, name: &str| -> usize {
        if let Some(&c) = col_of.get(name) {
            c
        } else {
            let c = model.add_column(name, T::zero(), T::infinity(), false, T::zero());
            col_of.insert(name.to_string(), c);
            c
        }
    };

    fn parse_num(tok: &str) -> Option<f64> {
        let t = tok.to_ascii_lowercase();
        match t.as_str() {
            "inf" | "infinity" | "+inf" | "+infinity" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            _ => tok.parse::<f64>().ok(),
        }
    }

    /// Parse `[name:] terms [sense rhs]` into (name, terms, sense, rhs).
    #[allow(clippy::type_complexity)]
    fn parse_expr(
        text: &str,
    ) -> Result<(Option<String>, Vec<(String, f64)>, Option<(Sense, f64)>), SolveError> {
        let mut rest = text.trim();
        let mut name = None;
        if let Some(colon) = rest.find(':') {
            name = Some(rest[..colon].trim().to_string());
            rest = rest[colon + 1..].trim();
        }
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        let mut terms = Vec::new();
        let mut relation = None;
        let mut sign = 1.0f64;
        let mut coeff: Option<f64> = None;
        let mut i = 0;
        while i < tokens.len() {
            let tok = tokens[i];
            match tok {
                "+" => {}
                "-" => sign = -sign,
                "<=" | "<" | ">=" | ">" | "=" => {
                    let sense = match tok {
                        "<=" | "<" => Sense::Le,
                        ">=" | ">" => Sense::Ge,
                        _ => Sense::Eq,
                    };
                    let rhs_tok = tokens.get(i + 1).ok_or_else(|| {
                        SolveError::Format(format!("missing right-hand side after {tok}"))
                    })?;
                    let mut rhs = parse_num(rhs_tok)
                        .ok_or_else(|| SolveError::Format(format!("bad number {rhs_tok}")))?;
                    if i + 2 < tokens.len() {
                        return Err(SolveError::Format(format!(
                            "unexpected tokens after right-hand side in {text:?}"
                        )));
                    }
                    // a dangling numeric term before the sense is a constant
                    if let Some(c) = coeff.take() {
                        rhs -= sign * c;
                    }
                    relation = Some((sense, rhs));
                    i += 2;
                    continue;
                }
                _ => {
                    if let Some(v) = parse_num(tok) {
                        if let Some(prev) = coeff.take() {
                            // two numbers in a row: previous was a constant
                            terms.push((String::new(), sign * prev));
                            sign = 1.0;
                        }
                        coeff = Some(v);
                        i += 1;
                        continue;
                    }
                    let c = coeff.take().unwrap_or(1.0);
                    terms.push((tok.to_string(), sign * c));
                    sign = 1.0;
                }
            }
            i += 1;
        }
        if let Some(c) = coeff {
            terms.push((String::new(), sign * c));
        }
        Ok((name, terms, relation))
    }

    let flush_row = |model: &mut MipModel<T>,
                         pending: &mut String,
                         intern: &mut dyn FnMut(&mut MipModel<T>, &str) -> usize,
                         row_count: &mut usize|
     -> Result<(), SolveError> {
        if pending.trim().is_empty() {
            return Ok(());
        }
        let (name, terms, relation) = parse_expr(pending)?;
        let (sense, rhs) =
            relation.ok_or_else(|| SolveError::Format(format!("row without sense: {pending}")))?;
        let mut resolved = Vec::new();
        let mut constant = 0.0;
        for (tok, c) in terms {
            if tok.is_empty() {
                constant += c;
            } else {
                resolved.push((intern(model, &tok), T::c(c)));
            }
        }
        let name = name.unwrap_or_else(|| format!("r{row_count}"));
        model.add_row(name, "imported", sense, T::c(rhs - constant), resolved);
        *row_count += 1;
        pending.clear();
        Ok(())
    };

    for raw in text.lines() {
        let line = match raw.find('\\') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let lower = line.trim().to_ascii_lowercase();
        let new_section = match lower.as_str() {
            "minimize" | "min" | "minimise" => Some((Section::Objective, false)),
            "maximize" | "max" | "maximise" => Some((Section::Objective, true)),
            "subject to" | "st" | "s.t." | "such that" => Some((Section::Rows, maximize)),
            "bounds" | "bound" => Some((Section::Bounds, maximize)),
            "binary" | "binaries" | "bin" => Some((Section::Binary, maximize)),
            "general" | "generals" | "gen" => {
                return Err(SolveError::Format(
                    "general integer variables are not supported".into(),
                ))
            }
            "end" => Some((Section::Done, maximize)),
            _ => None,
        };
        if let Some((s, is_max)) = new_section {
            if section == Some(Section::Rows) {
                flush_row(&mut model, &mut pending, &mut intern, &mut row_count)?;
            }
            maximize = is_max;
            section = Some(s);
            continue;
        }
        match section {
            Some(Section::Objective) => {
                let (_, terms, relation) = parse_expr(line)?;
                if relation.is_some() {
                    return Err(SolveError::Format("objective must not carry a sense".into()));
                }
                for (tok, c) in terms {
                    if tok.is_empty() {
                        model.objective_offset += T::c(c);
                    } else {
                        let col = intern(&mut model, &tok);
                        model.cols[col].objective += T::c(c);
                    }
                }
            }
            Some(Section::Rows) => {
                // rows may wrap; a new row starts when a name: prefix appears
                if line.contains(':') && !pending.trim().is_empty() {
                    flush_row(&mut model, &mut pending, &mut intern, &mut row_count)?;
                }
                pending.push(' ');
                pending.push_str(line);
                if line.split_whitespace().any(|t| matches!(t, "<=" | ">=" | "=" | "<" | ">")) {
                    flush_row(&mut model, &mut pending, &mut intern, &mut row_count)?;
                }
            }
            Some(Section::Bounds) => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                match tokens.as_slice() {
                    [name, kw] if kw.eq_ignore_ascii_case("free") => {
                        let col = intern(&mut model, name);
                        model.cols[col].lower = T::neg_infinity();
                        model.cols[col].upper = T::infinity();
                        explicit_bounds.insert(col);
                    }
                    [lo, "<=", name, "<=", hi] => {
                        let col = intern(&mut model, name);
                        model.cols[col].lower = T::c(parse_num(lo).ok_or_else(|| {
                            SolveError::Format(format!("bad bound {lo}"))
                        })?);
                        model.cols[col].upper = T::c(parse_num(hi).ok_or_else(|| {
                            SolveError::Format(format!("bad bound {hi}"))
                        })?);
                        explicit_bounds.insert(col);
                    }
                    [name, "<=", hi] => {
                        let col = intern(&mut model, name);
                        model.cols[col].upper = T::c(parse_num(hi).ok_or_else(|| {
                            SolveError::Format(format!("bad bound {hi}"))
                        })?);
                        explicit_bounds.insert(col);
                    }
                    [name, ">=", lo] => {
                        let col = intern(&mut model, name);
                        model.cols[col].lower = T::c(parse_num(lo).ok_or_else(|| {
                            SolveError::Format(format!("bad bound {lo}"))
                        })?);
                        explicit_bounds.insert(col);
                    }
                    [name, "=", v] => {
                        let col = intern(&mut model, name);
                        let val = T::c(parse_num(v).ok_or_else(|| {
                            SolveError::Format(format!("bad bound {v}"))
                        })?);
                        model.cols[col].lower = val;
                        model.cols[col].upper = val;
                        explicit_bounds.insert(col);
                    }
                    _ => {
                        return Err(SolveError::Format(format!("bad bounds line: {line}")));
                    }
                }
            }
            Some(Section::Binary) => {
                for name in line.split_whitespace() {
                    let col = intern(&mut model, name);
                    model.cols[col].binary = true;
                    if !explicit_bounds.contains(&col) {
                        model.cols[col].lower = T::zero();
                        model.cols[col].upper = T::one();
                    }
                }
            }
            Some(Section::Done) | None => {
                if !line.trim().is_empty() && section.is_none() {
                    return Err(SolveError::Format(format!(
                        "content before the objective section: {line}"
                    )));
                }
            }
        }
    }
    if section == Some(Section::Rows) {
        flush_row(&mut model, &mut pending, &mut intern, &mut row_count)?;
    }
    if maximize {
        for c in &mut model.cols {
            c.objective = -c.objective;
        }
        model.objective_offset = -model.objective_offset;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MipModel, Sense};
    use crate::solve::{solve_mip, SolveOptions};
    use approx::assert_relative_eq;

    #[test]
    fn golden_single_binary_single_row() {
        let mut m = MipModel::<f64>::new();
        let x = m.add_column("ysc[0]", 0.0, 1.0, true, 2.0);
        m.add_row("r0", "t", Sense::Ge, 1.0, vec![(x, 1.0)]);
        let text = write_lp(&m).unwrap();
        let expected = "Minimize\n obj: 2.0 ysc[0]\nSubject To\n r0: 1.0 ysc[0] >= 1.0\nBinary\n ysc[0]\nEnd\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn index_tuple_naming() {
        use crate::model::{ScopedVar, Var};
        use crate::network::EdgeId;
        let v = ScopedVar::stage2(
            1,
            Var::FlowP {
                edge: EdgeId(3),
                period: 2,
            },
        );
        assert_eq!(v.lp_name(), "P[3,2,1]");
    }

    #[test]
    fn round_trip_preserves_optimum() {
        let mut m = MipModel::<f64>::new();
        let x = m.add_column("x", 0.0, 1.0, true, -2.0);
        let y = m.add_column("y", -1.0, 4.0, false, -1.0);
        let z = m.add_column("z", f64::NEG_INFINITY, f64::INFINITY, false, 0.5);
        m.add_row("cap", "t", Sense::Le, 4.5, vec![(x, 2.0), (y, 1.0)]);
        m.add_row("tie", "t", Sense::Eq, 0.0, vec![(y, 1.0), (z, -1.0)]);
        m.add_row("floor", "t", Sense::Ge, -2.0, vec![(z, 1.0), (x, 0.5)]);
        m.objective_offset = 3.25;

        let text = write_lp(&m).unwrap();
        let back: MipModel<f64> = read_lp(&text).unwrap();

        let orig = solve_mip(&m, &SolveOptions::default()).unwrap();
        let reread = solve_mip(&back, &SolveOptions::default()).unwrap();
        assert_relative_eq!(
            orig.objective.unwrap(),
            reread.objective.unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn parses_implicit_coefficients_and_max() {
        let text = "Maximize\n obj: x + 2 y\nSubject To\n c1: x + y <= 3\n c2: x - y >= -1\nBounds\n x <= 2\nEnd\n";
        let m: MipModel<f64> = read_lp(text).unwrap();
        // maximization converted to minimization by negation
        let sol = crate::solve::solve_lp(&m).unwrap();
        // optimum of max x + 2y: y as large as possible: x=1 y=2 -> 5
        assert_relative_eq!(-sol.objective, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn offset_survives_round_trip_via_const_column() {
        let mut m = MipModel::<f64>::new();
        let x = m.add_column("x", 0.0, 2.0, false, 1.0);
        m.add_row("lo", "t", Sense::Ge, 1.0, vec![(x, 1.0)]);
        m.objective_offset = 7.5;
        let text = write_lp(&m).unwrap();
        assert!(text.contains("__const"));
        let back: MipModel<f64> = read_lp(&text).unwrap();
        let orig = crate::solve::solve_lp(&m).unwrap();
        let reread = crate::solve::solve_lp(&back).unwrap();
        assert_relative_eq!(orig.objective, reread.objective, epsilon = 1e-9);
    }

    #[test]
    fn rejects_general_integers() {
        let text = "Minimize\n obj: x\nSubject To\n r: x >= 1\nGeneral\n x\nEnd\n";
        assert!(read_lp::<f64>(text).is_err());
    }
}
