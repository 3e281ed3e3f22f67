//! Sampling-mode export: the trained model as a qubit gate sequence.
//!
//! Under Jordan-Wigner with mode `j` on qubit `j`, `m_{2j} m_{2j+1} = iZ_j` and
//! `m_{2j+1} m_{2j+2} = iX_j X_{j+1}`, so every Givens rotation of the ansatz
//! is a single `rz(−θ)` or a nearest-neighbour `rxx(−θ)`. Each register's
//! input state is `ry(2α)` followed by a CNOT ladder.
//!
//! Gate conventions: `rz(λ) = exp(−iλZ/2)`, `ry(λ) = exp(−iλY/2)`,
//! `rxx(λ) = exp(−iλX⊗X/2)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::FbmModel;
use crate::error::{invalid, Error, Result};
use crate::flo::FloAnsatz;
use crate::magic::{MagicAngles, REGISTER_MODES};

/// One gate of an exported circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Ry {
        qubit: usize,
        angle: f64,
    },
    Rz {
        qubit: usize,
        angle: f64,
    },
    Rxx {
        first: usize,
        second: usize,
        angle: f64,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    /// Only produced by parsing expanded OpenQASM.
    H {
        qubit: usize,
    },
    Measure {
        qubit: usize,
    },
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::Ry { .. } => "ry",
            Gate::Rz { .. } => "rz",
            Gate::Rxx { .. } => "rxx",
            Gate::Cnot { .. } => "cnot",
            Gate::H { .. } => "h",
            Gate::Measure { .. } => "measure",
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Ry { angle, .. } | Gate::Rz { angle, .. } | Gate::Rxx { angle, .. } => Some(angle),
            _ => None,
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } | Gate::H { qubit } | Gate::Measure { qubit } => {
                vec![qubit]
            }
            Gate::Rxx { first, second, .. } => vec![first, second],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }
}

/// Ordered gate sequence on a fixed number of qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateList {
    pub qubits: usize,
    pub gates: Vec<Gate>,
}

impl GateList {
    pub fn new(qubits: usize) -> Self {
        Self {
            qubits,
            gates: Vec::new(),
        }
    }

    /// Checks qubit ranges, distinct two-qubit operands and that measurements
    /// only trail the circuit.
    pub fn validate(&self) -> Result<()> {
        let mut measuring = false;
        for (i, g) in self.gates.iter().enumerate() {
            let qs = g.qubits();
            if let Some(&q) = qs.iter().find(|&&q| q >= self.qubits) {
                return Err(invalid(format!(
                    "gate {i} ({}) uses qubit {q} of {}",
                    g.name(),
                    self.qubits
                )));
            }
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(invalid(format!("gate {i} ({}) repeats qubit {}", g.name(), qs[0])));
            }
            match g {
                Gate::Measure { .. } => measuring = true,
                _ if measuring => {
                    return Err(invalid(format!("gate {i} ({}) follows a measurement", g.name())));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: GateList) {
        self.gates.extend(other.gates);
    }

    pub fn measured_qubits(&self) -> Vec<usize> {
        self.gates
            .iter()
            .filter_map(|g| match *g {
                Gate::Measure { qubit } => Some(qubit),
                _ => None,
            })
            .collect()
    }

    pub fn count(&self, name: &str) -> usize {
        self.gates.iter().filter(|g| g.name() == name).count()
    }
}

/// `ry(2α_j)` on qubit `4j` followed by CNOTs `4j→4j+1→4j+2→4j+3`.
pub fn compile_input_prep(magic: &MagicAngles) -> GateList {
    let mut list = GateList::new(REGISTER_MODES * magic.registers());
    for (j, &alpha) in magic.alpha().iter().enumerate() {
        let q = REGISTER_MODES * j;
        list.gates.push(Gate::Ry {
            qubit: q,
            angle: 2.0 * alpha,
        });
        for t in 0..3 {
            list.gates.push(Gate::Cnot {
                control: q + t,
                target: q + t + 1,
            });
        }
    }
    list
}

/// Matchgate sequence realizing the ansatz, one gate per Givens rotation.
pub fn compile_flo(ansatz: &FloAnsatz) -> GateList {
    let mut list = GateList::new(ansatz.modes());
    for (p, theta) in ansatz.rotations() {
        let j = p / 2;
        let gate = if p % 2 == 0 {
            Gate::Rz {
                qubit: j,
                angle: -theta,
            }
        } else {
            Gate::Rxx {
                first: j,
                second: j + 1,
                angle: -theta,
            }
        };
        list.gates.push(gate);
    }
    list
}

/// Full sampling circuit: input preparation, FLO gates, measurements of the
/// measured modes.
pub fn compile_model(model: &FbmModel) -> GateList {
    let mut list = compile_input_prep(model.magic());
    list.extend(compile_flo(model.ansatz()));
    for q in model.measured_modes() {
        list.gates.push(Gate::Measure { qubit: q });
    }
    list
}

/// Export formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Native,
    OpenQasm2,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Self::Native),
            "openqasm2" | "qasm" => Ok(Self::OpenQasm2),
            other => Err(invalid(format!("unknown export format '{other}'"))),
        }
    }
}

pub fn export(model: &FbmModel, format: ExportFormat) -> String {
    let list = compile_model(model);
    match format {
        ExportFormat::Native => to_native(&list),
        ExportFormat::OpenQasm2 => to_qasm2(&list),
    }
}

/// Native text: `qubits <n>` then one `<name> [angle] <q0> [q1]` per line.
pub fn to_native(list: &GateList) -> String {
    let mut out = format!("qubits {}\n", list.qubits);
    for g in &list.gates {
        out.push_str(g.name());
        if let Some(a) = g.angle() {
            let _ = write!(out, " {a}");
        }
        for q in g.qubits() {
            let _ = write!(out, " {q}");
        }
        out.push('\n');
    }
    out
}

fn parse_qubit(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad qubit index '{tok}'"),
    })
}

fn parse_angle(tok: &str, line: usize) -> Result<f64> {
    let a: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad angle '{tok}'"),
    })?;
    if !a.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite angle '{tok}'"),
        });
    }
    Ok(a)
}

/// Parses the native format. `#` starts a comment.
pub fn parse_native(text: &str) -> Result<GateList> {
    let mut qubits: Option<usize> = None;
    let mut gates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let arity_err = || Error::Parse {
            line,
            message: format!("wrong number of operands for '{}'", toks[0]),
        };
        if qubits.is_none() {
            if toks.len() != 2 || toks[0] != "qubits" {
                return Err(Error::Parse {
                    line,
                    message: "expected 'qubits <count>' header".into(),
                });
            }
            qubits = Some(parse_qubit(toks[1], line)?);
            continue;
        }
        let gate = match toks[0] {
            "ry" | "rz" => {
                if toks.len() != 3 {
                    return Err(arity_err());
                }
                let angle = parse_angle(toks[1], line)?;
                let qubit = parse_qubit(toks[2], line)?;
                if toks[0] == "ry" {
                    Gate::Ry { qubit, angle }
                } else {
                    Gate::Rz { qubit, angle }
                }
            }
            "rxx" => {
                if toks.len() != 4 {
                    return Err(arity_err());
                }
                Gate::Rxx {
                    angle: parse_angle(toks[1], line)?,
                    first: parse_qubit(toks[2], line)?,
                    second: parse_qubit(toks[3], line)?,
                }
            }
            "cnot" => {
                if toks.len() != 3 {
                    return Err(arity_err());
                }
                Gate::Cnot {
                    control: parse_qubit(toks[1], line)?,
                    target: parse_qubit(toks[2], line)?,
                }
            }
            "h" | "measure" => {
                if toks.len() != 2 {
                    return Err(arity_err());
                }
                let qubit = parse_qubit(toks[1], line)?;
                if toks[0] == "h" {
                    Gate::H { qubit }
                } else {
                    Gate::Measure { qubit }
                }
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown gate '{other}'"),
                })
            }
        };
        gates.push(gate);
    }
    let qubits = qubits.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing 'qubits' header".into(),
    })?;
    let list = GateList { qubits, gates };
    list.validate()?;
    Ok(list)
}

/// OpenQASM 2.0 with `rxx(λ)` expanded as `(H⊗H)·CX·(I⊗rz(λ))·CX·(H⊗H)`.
pub fn to_qasm2(list: &GateList) -> String {
    let measured = list.measured_qubits();
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", list.qubits);
    if !measured.is_empty() {
        let _ = writeln!(out, "creg c[{}];", measured.len());
    }
    let mut clbit = 0;
    for g in &list.gates {
        match *g {
            Gate::Ry { qubit, angle } => {
                let _ = writeln!(out, "ry({angle}) q[{qubit}];");
            }
            Gate::Rz { qubit, angle } => {
                let _ = writeln!(out, "rz({angle}) q[{qubit}];");
            }
            Gate::H { qubit } => {
                let _ = writeln!(out, "h q[{qubit}];");
            }
            Gate::Cnot { control, target } => {
                let _ = writeln!(out, "cx q[{control}],q[{target}];");
            }
            Gate::Rxx { first, second, angle } => {
                let _ = writeln!(out, "h q[{first}];\nh q[{second}];");
                let _ = writeln!(out, "cx q[{first}],q[{second}];");
                let _ = writeln!(out, "rz({angle}) q[{second}];");
                let _ = writeln!(out, "cx q[{first}],q[{second}];");
                let _ = writeln!(out, "h q[{first}];\nh q[{second}];");
            }
            Gate::Measure { qubit } => {
                let _ = writeln!(out, "measure q[{qubit}] -> c[{clbit}];");
                clbit += 1;
            }
        }
    }
    out
}

fn qasm_operand(tok: &str, line: usize) -> Result<usize> {
    let tok = tok.trim();
    let inner = tok
        .strip_prefix("q[")
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("expected q[<index>], got '{tok}'"),
        })?;
    parse_qubit(inner, line)
}

/// Parses the OpenQASM 2.0 subset written by [`to_qasm2`].
pub fn parse_qasm2(text: &str) -> Result<GateList> {
    let mut qubits = None;
    let mut gates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split("//").next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let stmt = content.strip_suffix(';').ok_or_else(|| Error::Parse {
            line,
            message: "missing ';'".into(),
        })?;
        if stmt.starts_with("OPENQASM") || stmt.starts_with("include") || stmt.starts_with("creg") {
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("qreg") {
            let rest = rest.trim();
            let n = rest
                .strip_prefix("q[")
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("bad qreg declaration '{rest}'"),
                })?;
            qubits = Some(parse_qubit(n, line)?);
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("measure") {
            let target = rest.split("->").next().unwrap_or("");
            gates.push(Gate::Measure {
                qubit: qasm_operand(target, line)?,
            });
            continue;
        }
        let (head, operands) = match stmt.find(" q[") {
            Some(pos) => (&stmt[..pos], &stmt[pos + 1..]),
            None => {
                return Err(Error::Parse {
                    line,
                    message: format!("cannot parse statement '{stmt}'"),
                })
            }
        };
        let (name, angle) = match head.find('(') {
            Some(open) => {
                let close = head.rfind(')').ok_or_else(|| Error::Parse {
                    line,
                    message: "unbalanced parenthesis".into(),
                })?;
                (&head[..open], Some(parse_angle(&head[open + 1..close], line)?))
            }
            None => (head, None),
        };
        let ops: Vec<usize> = operands
            .split(',')
            .map(|t| qasm_operand(t, line))
            .collect::<Result<_>>()?;
        let gate = match (name.trim(), angle, ops.as_slice()) {
            ("ry", Some(angle), &[qubit]) => Gate::Ry { qubit, angle },
            ("rz", Some(angle), &[qubit]) => Gate::Rz { qubit, angle },
            ("h", None, &[qubit]) => Gate::H { qubit },
            ("cx", None, &[control, target]) => Gate::Cnot { control, target },
            (other, _, _) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unsupported statement '{other}'"),
                })
            }
        };
        gates.push(gate);
    }
    let qubits = qubits.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing qreg declaration".into(),
    })?;
    let list = GateList { qubits, gates };
    list.validate()?;
    Ok(list)
}
