//! Line-oriented circuit text format.
//!
//! ```text
//! # qubits 4
//! RX q0 @8 [enc]
//! RZ q1 1.5707963267948966 [enc]
//! CPHASE q1 c0 0.7853981633974483 [mix[0]]
//! ROT3 q0 @0 @1 @2 [mix[0]]
//! MCX q3 c0,1,2 [ff[0]]
//! ```
//!
//! `@i*s+o` binds to `s·params[i] + o`; scale and offset are omitted when
//! they are 1 and 0. The trailing bracketed token is the layer tag.

use std::fmt::Write;

use super::{Angle, Circuit, ParamRef};
use crate::error::{Error, Result};
use crate::sim::GateKind;

fn join(qs: &[usize]) -> String {
    qs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",")
}

fn write_angle(out: &mut String, angle: &Angle) {
    match angle {
        Angle::Const(v) => write!(out, " {v}").unwrap(),
        Angle::Param(r) => {
            write!(out, " @{}", r.index).unwrap();
            if r.scale != 1.0 {
                write!(out, "*{}", r.scale).unwrap();
            }
            if r.offset != 0.0 {
                write!(out, "+{}", r.offset).unwrap();
            }
        }
    }
}

pub(super) fn write_dump(circuit: &Circuit) -> String {
    let mut out = format!("# qubits {}\n", circuit.num_qubits());
    for op in circuit.ops() {
        write!(out, "{} q{}", op.kind, join(&op.targets)).unwrap();
        if !op.controls.is_empty() || op.kind == GateKind::Mcx {
            write!(out, " c{}", join(&op.controls)).unwrap();
        }
        for a in &op.angles {
            write_angle(&mut out, a);
        }
        if let Some(tag) = circuit.tag_of(op) {
            write!(out, " [{tag}]").unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_list(s: &str, line: usize) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::data_at(line, format!("bad qubit index `{t}`")))
        })
        .collect()
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::data_at(line, format!("bad number `{s}`")))
}

fn parse_angle(tok: &str, line: usize) -> Result<Angle> {
    let Some(body) = tok.strip_prefix('@') else {
        return Ok(Angle::Const(parse_f64(tok, line)?));
    };
    let (head, offset) = match body.find('+') {
        Some(i) => (&body[..i], parse_f64(&body[i + 1..], line)?),
        None => (body, 0.0),
    };
    let (index, scale) = match head.find('*') {
        Some(i) => (&head[..i], parse_f64(&head[i + 1..], line)?),
        None => (head, 1.0),
    };
    let index = index
        .parse()
        .map_err(|_| Error::data_at(line, format!("bad parameter index `{index}`")))?;
    Ok(Angle::Param(ParamRef {
        index,
        scale,
        offset,
    }))
}

/// Parses the text produced by [`Circuit::dump`]. Without a `# qubits`
/// header the register is sized to the largest index used.
pub fn parse_dump(text: &str) -> Result<Circuit> {
    struct Line {
        no: usize,
        kind: GateKind,
        targets: Vec<usize>,
        controls: Vec<usize>,
        angles: Vec<Angle>,
        tag: Option<String>,
    }

    let mut declared = None;
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("qubits") {
                let n = words
                    .next()
                    .ok_or_else(|| Error::data_at(no, "missing qubit count"))?;
                declared = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::data_at(no, format!("bad qubit count `{n}`")))?,
                );
            }
            continue;
        }
        let mut toks: Vec<&str> = raw.split_whitespace().collect();
        let mut tag = None;
        if let Some(last) = toks.last() {
            if last.starts_with('[') && last.ends_with(']') && last.len() >= 2 {
                tag = Some(last[1..last.len() - 1].to_string());
                toks.pop();
            }
        }
        let kind: GateKind = toks[0]
            .parse()
            .map_err(|_| Error::data_at(no, format!("unknown gate `{}`", toks[0])))?;
        let mut rest = toks[1..].iter().peekable();
        let targets = match rest.next().and_then(|t| t.strip_prefix('q')) {
            Some(t) => parse_list(t, no)?,
            None => return Err(Error::data_at(no, "missing target list")),
        };
        let mut controls = Vec::new();
        if let Some(c) = rest.peek().and_then(|t| t.strip_prefix('c')) {
            controls = parse_list(c, no)?;
            rest.next();
        }
        let angles = rest.map(|t| parse_angle(t, no)).collect::<Result<Vec<_>>>()?;
        lines.push(Line {
            no,
            kind,
            targets,
            controls,
            angles,
            tag,
        });
    }

    let inferred = lines
        .iter()
        .flat_map(|l| l.targets.iter().chain(&l.controls))
        .map(|q| q + 1)
        .max()
        .unwrap_or(1);
    let mut circuit = Circuit::new(declared.unwrap_or(inferred))?;
    for l in lines {
        circuit.set_tag(l.tag.as_deref());
        circuit
            .push(l.kind, l.targets, l.controls, l.angles)
            .map_err(|e| Error::data_at(l.no, e.to_string()))?;
    }
    circuit.set_tag(None);
    Ok(circuit)
}
