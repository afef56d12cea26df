use std::fmt::Write as _;

use crate::circuit::{cnot_matrix, zyz_reparameterize, Circuit, Gate};
use crate::error::{Error, Result};

/// Parse the supported OpenQASM 2.0 subset: one quantum register, `u3` and
/// `cx` statements, `//` comments. Anything else is rejected with the line
/// it appeared on.
pub fn parse_qasm(text: &str) -> Result<Circuit> {
    let tokens = tokenize(text)?;
    let mut statements = tokens.split(|t| matches!(t.tok, Tok::Semi)).peekable();

    expect_header(statements.next())?;
    expect_include(statements.next())?;
    let (reg_name, reg_size, qreg_line) = expect_qreg(statements.next())?;
    if reg_size == 0 {
        return Err(Error::Parse {
            line: qreg_line,
            msg: "quantum register must have at least one qubit".into(),
        });
    }

    let mut circuit = Circuit::new(reg_size);
    for stmt in statements {
        if stmt.is_empty() {
            continue;
        }
        let gate = parse_gate_statement(stmt, &reg_name, reg_size)?;
        circuit.push(gate).expect("operand bounds already checked");
    }
    Ok(circuit)
}

/// Serialize a circuit back to the OpenQASM subset. Variable single-qubit
/// gates are re-parameterized as `u3` (the dropped global phase is kept in a
/// trailing comment); fixed two-qubit gates must be CNOTs.
pub fn write_qasm(circuit: &Circuit) -> Result<String> {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\n");
    out.push_str("include \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", circuit.qubits());

    for (i, gate) in circuit.gates().iter().enumerate() {
        if gate.is_variable() {
            if gate.arity() != 1 {
                return Err(Error::UnsupportedExport(format!(
                    "gate {i} is a {}-qubit variable gate; decompose to u3/cx before export",
                    gate.arity()
                )));
            }
            let (theta, phi, lambda, gamma) = zyz_reparameterize(gate.unitary())?;
            let _ = writeln!(
                out,
                "u3({theta},{phi},{lambda}) q[{}]; // global phase {gamma}",
                gate.location()[0]
            );
        } else {
            let (a, b) = match gate.location() {
                [a, b] => (*a, *b),
                _ => {
                    return Err(Error::UnsupportedExport(format!(
                        "fixed gate {i} on {} qubits has no QASM form",
                        gate.arity()
                    )))
                }
            };
            let low_ctrl = cnot_matrix(true);
            let high_ctrl = cnot_matrix(false);
            if gate.unitary().sub(&low_ctrl)?.max_abs() <= 1e-9 {
                let _ = writeln!(out, "cx q[{a}],q[{b}];");
            } else if gate.unitary().sub(&high_ctrl)?.max_abs() <= 1e-9 {
                let _ = writeln!(out, "cx q[{b}],q[{a}];");
            } else {
                return Err(Error::UnsupportedExport(format!(
                    "fixed gate {i} is not a CNOT; only u3/cx can be exported"
                )));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Semi,
    Punct(char),
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
}

fn tokenize(text: &str) -> Result<Vec<SpannedTok>> {
    let mut tokens = Vec::new();
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw_line.split("//").next().unwrap_or("");
        let mut chars = line.char_indices().peekable();
        while let Some(&(start, ch)) = chars.peek() {
            match ch {
                c if c.is_whitespace() => {
                    chars.next();
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = start;
                    while let Some(&(i, c)) = chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            end = i + c.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    tokens.push(SpannedTok {
                        tok: Tok::Ident(line[start..end].to_string()),
                        line: line_no,
                    });
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let mut end = start;
                    let mut seen_exp = false;
                    while let Some(&(i, c)) = chars.peek() {
                        let take = c.is_ascii_digit()
                            || c == '.'
                            || c == 'e'
                            || c == 'E'
                            || ((c == '+' || c == '-')
                                && seen_exp
                                && line[..i].ends_with(['e', 'E']));
                        if take {
                            if c == 'e' || c == 'E' {
                                seen_exp = true;
                            }
                            end = i + c.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    tokens.push(SpannedTok {
                        tok: Tok::Number(line[start..end].to_string()),
                        line: line_no,
                    });
                }
                '"' => {
                    chars.next();
                    let content_start = start + 1;
                    let mut content_end = None;
                    for (i, c) in chars.by_ref() {
                        if c == '"' {
                            content_end = Some(i);
                            break;
                        }
                    }
                    let Some(end) = content_end else {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "unterminated string literal".into(),
                        });
                    };
                    tokens.push(SpannedTok {
                        tok: Tok::Str(line[content_start..end].to_string()),
                        line: line_no,
                    });
                }
                ';' => {
                    chars.next();
                    tokens.push(SpannedTok {
                        tok: Tok::Semi,
                        line: line_no,
                    });
                }
                '(' | ')' | '[' | ']' | ',' | '*' | '/' | '-' => {
                    chars.next();
                    tokens.push(SpannedTok {
                        tok: Tok::Punct(ch),
                        line: line_no,
                    });
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unexpected character '{other}'"),
                    });
                }
            }
        }
    }
    Ok(tokens)
}

fn stmt_line(stmt: &[SpannedTok]) -> usize {
    stmt.first().map_or(0, |t| t.line)
}

fn expect_header(stmt: Option<&[SpannedTok]>) -> Result<()> {
    let stmt = stmt.unwrap_or(&[]);
    match stmt {
        [a, b] if ident_is(a, "OPENQASM") && number_is(b, "2.0") => Ok(()),
        _ => Err(Error::Parse {
            line: stmt_line(stmt).max(1),
            msg: "expected 'OPENQASM 2.0;' header".into(),
        }),
    }
}

fn expect_include(stmt: Option<&[SpannedTok]>) -> Result<()> {
    let stmt = stmt.unwrap_or(&[]);
    match stmt {
        [a, b] if ident_is(a, "include") && matches!(&b.tok, Tok::Str(s) if s == "qelib1.inc") => {
            Ok(())
        }
        _ => Err(Error::Parse {
            line: stmt_line(stmt).max(1),
            msg: "expected 'include \"qelib1.inc\";'".into(),
        }),
    }
}

fn expect_qreg(stmt: Option<&[SpannedTok]>) -> Result<(String, usize, usize)> {
    let stmt = stmt.unwrap_or(&[]);
    match stmt {
        [kw, name, lb, size, rb]
            if ident_is(kw, "qreg")
                && matches!(&lb.tok, Tok::Punct('['))
                && matches!(&rb.tok, Tok::Punct(']')) =>
        {
            let Tok::Ident(reg) = &name.tok else {
                return Err(Error::Parse {
                    line: name.line,
                    msg: "expected register name".into(),
                });
            };
            let n = parse_index(size)?;
            Ok((reg.clone(), n, kw.line))
        }
        _ => Err(Error::Parse {
            line: stmt_line(stmt).max(1),
            msg: "expected 'qreg <id>[<int>];' declaration".into(),
        }),
    }
}

fn parse_gate_statement(stmt: &[SpannedTok], reg: &str, reg_size: usize) -> Result<Gate> {
    let line = stmt_line(stmt);
    let Some(head) = stmt.first() else {
        return Err(Error::Parse {
            line,
            msg: "empty statement".into(),
        });
    };
    let Tok::Ident(name) = &head.tok else {
        return Err(Error::Parse {
            line,
            msg: "expected a gate name".into(),
        });
    };
    match name.as_str() {
        "u3" => parse_u3(&stmt[1..], line, reg, reg_size),
        "cx" => parse_cx(&stmt[1..], line, reg, reg_size),
        "qreg" => Err(Error::Parse {
            line,
            msg: "only one quantum register is supported".into(),
        }),
        other => Err(Error::Parse {
            line,
            msg: format!("unknown gate '{other}'"),
        }),
    }
}

fn parse_u3(rest: &[SpannedTok], line: usize, reg: &str, reg_size: usize) -> Result<Gate> {
    let mut cur = rest;
    if !matches!(cur.first().map(|t| &t.tok), Some(Tok::Punct('('))) {
        return Err(Error::Parse {
            line,
            msg: "u3 requires a parenthesized parameter list".into(),
        });
    }
    cur = &cur[1..];
    let close = cur
        .iter()
        .position(|t| matches!(t.tok, Tok::Punct(')')))
        .ok_or(Error::Parse {
            line,
            msg: "unclosed u3 parameter list".into(),
        })?;
    let params: Vec<&[SpannedTok]> = cur[..close]
        .split(|t| matches!(t.tok, Tok::Punct(',')))
        .collect();
    if params.len() != 3 {
        return Err(Error::Parse {
            line,
            msg: format!("u3 takes 3 parameters, got {}", params.len()),
        });
    }
    let theta = eval_expr(params[0], line)?;
    let phi = eval_expr(params[1], line)?;
    let lambda = eval_expr(params[2], line)?;
    let qubit = parse_operand(&cur[close + 1..], line, reg, reg_size, true)?;
    Ok(Gate::u3(qubit, theta, phi, lambda))
}

fn parse_cx(rest: &[SpannedTok], line: usize, reg: &str, reg_size: usize) -> Result<Gate> {
    let comma = rest
        .iter()
        .position(|t| matches!(t.tok, Tok::Punct(',')))
        .ok_or(Error::Parse {
            line,
            msg: "cx takes two comma-separated operands".into(),
        })?;
    let control = parse_operand(&rest[..comma], line, reg, reg_size, true)?;
    let target = parse_operand(&rest[comma + 1..], line, reg, reg_size, true)?;
    if control == target {
        return Err(Error::Parse {
            line,
            msg: "cx control and target must differ".into(),
        });
    }
    Gate::cnot(control, target)
}

/// `<id>[<int>]`, checked against the declared register.
fn parse_operand(
    toks: &[SpannedTok],
    line: usize,
    reg: &str,
    reg_size: usize,
    exhaustive: bool,
) -> Result<usize> {
    match toks {
        [name, lb, idx, rb, ..]
            if matches!(&lb.tok, Tok::Punct('[')) && matches!(&rb.tok, Tok::Punct(']')) =>
        {
            if exhaustive && toks.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: "trailing tokens after qubit operand".into(),
                });
            }
            let Tok::Ident(n) = &name.tok else {
                return Err(Error::Parse {
                    line,
                    msg: "expected register name in operand".into(),
                });
            };
            if n != reg {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown register '{n}' (declared register is '{reg}')"),
                });
            }
            let q = parse_index(idx)?;
            if q >= reg_size {
                return Err(Error::Bounds {
                    line,
                    msg: format!("qubit index {q} exceeds register size {reg_size}"),
                });
            }
            Ok(q)
        }
        _ => Err(Error::Parse {
            line,
            msg: "expected qubit operand '<id>[<int>]'".into(),
        }),
    }
}

fn parse_index(tok: &SpannedTok) -> Result<usize> {
    let Tok::Number(text) = &tok.tok else {
        return Err(Error::Parse {
            line: tok.line,
            msg: "expected an integer".into(),
        });
    };
    text.parse::<usize>().map_err(|_| Error::Parse {
        line: tok.line,
        msg: format!("'{text}' is not a valid index"),
    })
}

/// Parameter expression: floating literal or `pi`, combined with `*`, `/`
/// and unary `-`.
fn eval_expr(toks: &[SpannedTok], line: usize) -> Result<f64> {
    if toks.is_empty() {
        return Err(Error::Parse {
            line,
            msg: "empty parameter expression".into(),
        });
    }
    let mut pos = 0usize;
    let mut acc = eval_value(toks, &mut pos, line)?;
    while pos < toks.len() {
        match &toks[pos].tok {
            Tok::Punct('*') => {
                pos += 1;
                acc *= eval_value(toks, &mut pos, line)?;
            }
            Tok::Punct('/') => {
                pos += 1;
                let denom = eval_value(toks, &mut pos, line)?;
                if denom == 0.0 {
                    return Err(Error::Parse {
                        line,
                        msg: "division by zero in parameter".into(),
                    });
                }
                acc /= denom;
            }
            _ => {
                return Err(Error::Parse {
                    line: toks[pos].line,
                    msg: "malformed parameter expression".into(),
                })
            }
        }
    }
    Ok(acc)
}

fn eval_value(toks: &[SpannedTok], pos: &mut usize, line: usize) -> Result<f64> {
    let mut sign = 1.0;
    while let Some(t) = toks.get(*pos) {
        if matches!(t.tok, Tok::Punct('-')) {
            sign = -sign;
            *pos += 1;
        } else {
            break;
        }
    }
    let Some(t) = toks.get(*pos) else {
        return Err(Error::Parse {
            line,
            msg: "parameter expression ends unexpectedly".into(),
        });
    };
    *pos += 1;
    match &t.tok {
        Tok::Number(text) => text
            .parse::<f64>()
            .map(|v| sign * v)
            .map_err(|_| Error::Parse {
                line: t.line,
                msg: format!("'{text}' is not a valid number"),
            }),
        Tok::Ident(name) if name == "pi" => Ok(sign * std::f64::consts::PI),
        Tok::Ident(name) => Err(Error::Parse {
            line: t.line,
            msg: format!("unknown symbol '{name}' in parameter"),
        }),
        _ => Err(Error::Parse {
            line: t.line,
            msg: "malformed parameter expression".into(),
        }),
    }
}

fn ident_is(t: &SpannedTok, s: &str) -> bool {
    matches!(&t.tok, Tok::Ident(i) if i == s)
}

fn number_is(t: &SpannedTok, s: &str) -> bool {
    matches!(&t.tok, Tok::Number(n) if n == s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::numerics::ComplexMatrix;
    use num_complex::Complex64;

    const HEADER: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\n";

    fn parse(body: &str) -> Circuit {
        parse_qasm(&format!("{HEADER}{body}")).unwrap()
    }

    #[test]
    fn u3_zero_angles_is_identity() {
        let circ = parse("u3(0,0,0) q[0];\n");
        assert_eq!(circ.len(), 1);
        assert!(circ.gate(0).is_variable());
        let err = circ
            .gate(0)
            .unitary()
            .sub(&ComplexMatrix::identity(2))
            .unwrap()
            .max_abs();
        assert!(err < 1e-15);
    }

    #[test]
    fn u3_pi_angles_is_pauli_x() {
        let circ = parse("u3(pi,0,pi) q[1];\n");
        let u = circ.gate(0).unitary();
        let x = ComplexMatrix::new(
            2,
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        assert!(u.sub(&x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn statement_order_and_kinds_preserved() {
        let circ = parse("u3(0.5,-0.25,3*pi/4) q[0];\ncx q[0],q[1];\n");
        assert_eq!(circ.len(), 2);
        assert_eq!(circ.variable_count(), 1);
        assert_eq!(circ.gate(0).kind(), GateKind::Variable);
        assert_eq!(circ.gate(1).kind(), GateKind::Fixed);
        assert_eq!(circ.gate(1).location(), &[0, 1]);
    }

    #[test]
    fn cx_operand_order_matters() {
        let a = parse("cx q[0],q[1];\n");
        let b = parse("cx q[1],q[0];\n");
        let diff = a
            .gate(0)
            .unitary()
            .sub(b.gate(0).unitary())
            .unwrap()
            .max_abs();
        assert!(diff > 0.5);
    }

    #[test]
    fn comments_and_whitespace_ignored() {
        let circ = parse("// a comment with ; semicolons\nu3(1,0,0)   q[2]; // trailing\n");
        assert_eq!(circ.len(), 1);
    }

    #[test]
    fn unknown_gate_reports_line() {
        let err = parse_qasm(&format!("{HEADER}h q[0];\n")).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("unknown gate 'h'"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_qubit_is_bounds_error() {
        let err = parse_qasm(&format!("{HEADER}u3(0,0,0) q[3];\n")).unwrap_err();
        assert!(matches!(err, Error::Bounds { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn malformed_parameters_rejected() {
        for body in ["u3(1,2) q[0];\n", "u3(1,,2) q[0];\n", "u3(1+2,0,0) q[0];\n"] {
            let err = parse_qasm(&format!("{HEADER}{body}")).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{body}: {err:?}");
        }
    }

    #[test]
    fn missing_header_rejected() {
        assert!(parse_qasm("qreg q[2];\n").is_err());
    }

    #[test]
    fn roundtrip_preserves_structure_and_unitaries() {
        let src = format!(
            "{HEADER}u3(0.3,1.5,-0.7) q[0];\ncx q[2],q[0];\nu3(pi/2,0,pi) q[1];\ncx q[1],q[2];\n"
        );
        let first = parse_qasm(&src).unwrap();
        let text = write_qasm(&first).unwrap();
        let second = parse_qasm(&text).unwrap();
        assert_eq!(first.len(), second.len());
        for (a, b) in first.gates().iter().zip(second.gates()) {
            assert_eq!(a.location(), b.location());
            assert_eq!(a.kind(), b.kind());
            // Equal up to the per-gate global phase dropped by the writer.
            let phase_err = gate_phase_distance(a.unitary(), b.unitary());
            assert!(phase_err < 1e-9, "phase-aligned distance {phase_err}");
        }
    }

    #[test]
    fn identity_u3_roundtrips_to_zero_angles() {
        let mut circ = Circuit::new(1);
        circ.push(Gate::u3(0, 0.0, 0.0, 0.0)).unwrap();
        let text = write_qasm(&circ).unwrap();
        let reparsed = parse_qasm(&text).unwrap();
        let err = reparsed
            .gate(0)
            .unitary()
            .sub(&ComplexMatrix::identity(2))
            .unwrap()
            .max_abs();
        assert!(err < 1e-12);
    }

    #[test]
    fn multi_qubit_variable_gate_rejected_on_export() {
        let mut circ = Circuit::new(2);
        circ.push(Gate::variable(vec![0, 1], ComplexMatrix::identity(4)).unwrap())
            .unwrap();
        assert!(matches!(
            write_qasm(&circ),
            Err(Error::UnsupportedExport(_))
        ));
    }

    /// Max-entry distance after aligning global phase.
    pub(crate) fn gate_phase_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        let mut best_idx = 0;
        let mut best = 0.0f64;
        for (i, z) in a.entries().iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                best_idx = i;
            }
        }
        let pa = a.entries()[best_idx];
        let pb = b.entries()[best_idx];
        if pb.norm() < 1e-12 {
            return 2.0;
        }
        let phase = pa / pa.norm() * (pb / pb.norm()).conj();
        a.sub(&b.scale(phase)).unwrap().max_abs()
    }
}
