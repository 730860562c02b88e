//! Sectioned plain-text model files.
//!
//! ```text
//! # comment
//! [states]
//! x1, x2
//! [params]
//! k
//! [inputs_measured]
//! [inputs_unmeasured]
//! [constants]
//! c = 0.05          # a value for a parameter is its design value
//! [dynamics]
//! x1 = x2           # right-hand side of d(x1)/dt
//! [outputs]
//! y1 = x1
//! [benchmark]
//! case = two-dof
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use super::ModelDef;
use crate::error::{Error, Result};
use crate::symbolic::{parse_expr_at, Expr, Sym};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    States,
    Params,
    InputsMeasured,
    InputsUnmeasured,
    Constants,
    Dynamics,
    Outputs,
    Benchmark,
}

impl Section {
    fn from_name(name: &str) -> Option<Section> {
        Some(match name {
            "states" => Section::States,
            "params" => Section::Params,
            "inputs_measured" => Section::InputsMeasured,
            "inputs_unmeasured" => Section::InputsUnmeasured,
            "constants" => Section::Constants,
            "dynamics" => Section::Dynamics,
            "outputs" => Section::Outputs,
            "benchmark" => Section::Benchmark,
            _ => return None,
        })
    }
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Split `name = rhs`, returning the rhs byte offset within the line.
fn split_assignment(line: &str, lineno: usize) -> Result<(&str, &str, usize)> {
    let Some(eq) = line.find('=') else {
        return Err(syntax(lineno, 1, "expected `name = expression`"));
    };
    let name = line[..eq].trim();
    if !is_identifier(name) {
        let col = line.len() - line.trim_start().len() + 1;
        return Err(syntax(lineno, col, format!("invalid name `{name}`")));
    }
    Ok((name, &line[eq + 1..], eq + 1))
}

/// Parse a model file and resolve every symbol.
pub fn parse_model(text: &str) -> Result<ModelDef> {
    let mut m = ModelDef {
        states: Vec::new(),
        params: Vec::new(),
        inputs_measured: Vec::new(),
        inputs_unmeasured: Vec::new(),
        constants: Vec::new(),
        dynamics: Vec::new(),
        output_names: Vec::new(),
        outputs: Vec::new(),
        benchmark: Vec::new(),
    };
    let mut dynamics: Vec<(Sym, Expr, usize)> = Vec::new();
    let mut section: Option<Section> = None;
    let mut constant_values: HashMap<Sym, Expr> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) else {
                return Err(syntax(lineno, 1, "unterminated section header"));
            };
            section = Some(
                Section::from_name(name.trim())
                    .ok_or_else(|| syntax(lineno, 2, format!("unknown section `{name}`")))?,
            );
            continue;
        }
        let Some(sec) = section else {
            return Err(syntax(lineno, 1, "content before the first section header"));
        };
        match sec {
            Section::States | Section::Params | Section::InputsMeasured | Section::InputsUnmeasured => {
                let target = match sec {
                    Section::States => &mut m.states,
                    Section::Params => &mut m.params,
                    Section::InputsMeasured => &mut m.inputs_measured,
                    _ => &mut m.inputs_unmeasured,
                };
                for name in trimmed.split(|c: char| c == ',' || c.is_whitespace()) {
                    if name.is_empty() {
                        continue;
                    }
                    if !is_identifier(name) {
                        let col = line.find(name).unwrap_or(0) + 1;
                        return Err(syntax(lineno, col, format!("invalid name `{name}`")));
                    }
                    target.push(Sym::new(name));
                }
            }
            Section::Constants => {
                let (name, rhs, offset) = split_assignment(line, lineno)?;
                let e = parse_expr_at(rhs, lineno, offset)?
                    .substitute(&constant_values)
                    .simplify();
                let Some(value) = e.as_const().cloned() else {
                    return Err(syntax(
                        lineno,
                        offset + 1,
                        format!("constant `{name}` must reduce to a rational number"),
                    ));
                };
                let s = Sym::new(name);
                if m.constants.iter().any(|(c, _)| *c == s) {
                    return Err(Error::DuplicateSymbol(name.to_string()));
                }
                constant_values.insert(s, Expr::constant(value.clone()));
                m.constants.push((s, value));
            }
            Section::Dynamics => {
                let (name, rhs, offset) = split_assignment(line, lineno)?;
                let e = parse_expr_at(rhs, lineno, offset)?.simplify();
                dynamics.push((Sym::new(name), e, lineno));
            }
            Section::Outputs => {
                let (name, rhs, offset) = split_assignment(line, lineno)?;
                let e = parse_expr_at(rhs, lineno, offset)?.simplify();
                m.output_names.push(name.to_string());
                m.outputs.push(e);
            }
            Section::Benchmark => {
                let (name, rhs, _) = split_assignment(line, lineno)?;
                m.benchmark.push((name.to_string(), rhs.trim().to_string()));
            }
        }
    }

    if dynamics.len() != m.states.len() {
        return Err(Error::ArityMismatch {
            dynamics: dynamics.len(),
            states: m.states.len(),
        });
    }
    let mut ordered: Vec<Option<Expr>> = vec![None; m.states.len()];
    for (s, e, lineno) in dynamics {
        let Some(idx) = m.state_index(s) else {
            return Err(Error::UndeclaredSymbol(format!("{} (dynamics, line {lineno})", s.name())));
        };
        if ordered[idx].is_some() {
            return Err(Error::DuplicateSymbol(s.name()));
        }
        ordered[idx] = Some(e);
    }
    m.dynamics = ordered.into_iter().map(|e| e.expect("one equation per state")).collect();
    m.validate()?;
    Ok(m)
}

fn write_names(out: &mut String, header: &str, names: &[Sym]) {
    let _ = writeln!(out, "[{header}]");
    for s in names {
        let _ = writeln!(out, "{s}");
    }
}

/// Render a model in the file format; `parse_model` inverts it exactly.
pub fn serialize_model(m: &ModelDef) -> String {
    let mut out = String::new();
    write_names(&mut out, "states", &m.states);
    write_names(&mut out, "params", &m.params);
    write_names(&mut out, "inputs_measured", &m.inputs_measured);
    write_names(&mut out, "inputs_unmeasured", &m.inputs_unmeasured);
    out.push_str("[constants]\n");
    for (s, v) in &m.constants {
        let _ = writeln!(out, "{s} = {v}");
    }
    out.push_str("[dynamics]\n");
    for (s, e) in m.states.iter().zip(&m.dynamics) {
        let _ = writeln!(out, "{s} = {e}");
    }
    out.push_str("[outputs]\n");
    for (n, e) in m.output_names.iter().zip(&m.outputs) {
        let _ = writeln!(out, "{n} = {e}");
    }
    if !m.benchmark.is_empty() {
        out.push_str("[benchmark]\n");
        for (k, v) in &m.benchmark {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}
