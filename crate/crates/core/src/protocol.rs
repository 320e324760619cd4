//! Synthesis of the two scale-free protocols.
//!
//! Protocol 1 (full-state coupling, `C = I`) runs one observer-like state per
//! agent,
//!
//! ```text
//! χ̇ᵢ = Aχᵢ + Buᵢ + ρζᵢ − ρζ̂ᵢ,   uᵢ = −ρBᵀPχᵢ,
//! ```
//!
//! with `P` the stabilizing solution of `AᵀP + PA − PBBᵀP + I = 0`.
//! Protocol 2 (partial-state coupling) adds a filter state `x̂ᵢ`,
//!
//! ```text
//! x̂̇ᵢ = Ax̂ᵢ − ρBBᵀPζ̂ᵢ + δ⁻²QCᵀ(ζᵢ − Cx̂ᵢ)
//! χ̇ᵢ = Aχᵢ + Buᵢ + ρx̂ᵢ − ρζ̂ᵢ,   uᵢ = −ρBᵀPχᵢ,
//! ```
//!
//! with `Q` from the filter Riccati equation. Agents exchange `ξᵢ = χᵢ`, so
//! `ζ̂ᵢ = Σⱼ aᵢⱼ(χᵢ − χⱼ)`. Nothing here depends on the graph or on `N`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::conditions::{
    check_clhp, check_detectable, check_disturbance_match, check_minphase_leftinv,
    check_stabilizable,
};
use crate::error::{Error, Result};
use crate::linalg::{block, solve_care_standard, solve_filter_riccati, Mat};
use crate::model::{AgentModel, CouplingKind};

/// Smallest δ tried by the automatic search.
pub const DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    P1,
    P2,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::P1 => "p1",
            ProtocolKind::P2 => "p2",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(ProtocolKind::P1),
            "p2" => Ok(ProtocolKind::P2),
            other => Err(Error::ConfigInvalid(format!("unknown protocol '{other}' (expected p1 or p2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRealization {
    pub kind: ProtocolKind,
    pub rho: f64,
    /// Filter parameter; `None` for protocol 1.
    pub delta: Option<f64>,
    pub p: Mat,
    /// Filter Riccati solution; `None` for protocol 1.
    pub q: Option<Mat>,
    pub controller_state_dim: usize,
}

/// `ẋ_c = Ac x_c + Bc ζ + Cc ζ̂`, `u = Fc x_c`, `ξ = Hc x_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMatrices {
    pub ac: Mat,
    pub bc: Mat,
    pub cc: Mat,
    pub fc: Mat,
    pub hc: Mat,
}

fn validate_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 1.0 {
        Ok(())
    } else {
        Err(Error::RhoOutOfRange(rho))
    }
}

fn precondition(ok: bool, condition: char, description: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::PreconditionFailed {
            condition,
            description: description.into(),
        })
    }
}

/// Protocol 1 for a full-state coupled model.
pub fn synthesize_p1(model: &AgentModel, rho: f64) -> Result<ProtocolRealization> {
    validate_rho(rho)?;
    if model.coupling() != CouplingKind::FullState {
        return Err(Error::ConfigInvalid(
            "protocol 1 requires full-state coupling (C = I)".into(),
        ));
    }
    precondition(check_stabilizable(&model.a, &model.b)?, 'a', "(A,B) is not stabilizable")?;
    precondition(check_clhp(&model.a)?, 'b', "A has eigenvalues in the open right half plane")?;
    precondition(
        check_disturbance_match(&model.b, &model.e)?.0,
        'd',
        "im E is not contained in im B",
    )?;
    let care = solve_care_standard(&model.a, &model.b)?;
    Ok(ProtocolRealization {
        kind: ProtocolKind::P1,
        rho,
        delta: None,
        p: care.solution,
        q: None,
        controller_state_dim: model.n(),
    })
}

/// Protocol 2. With `delta_hint` the filter equation is solved at that δ only;
/// otherwise δ = 1, 1/2, 1/4, … is tried down to [`DELTA_FLOOR`] and the first
/// (largest) passing value is kept.
pub fn synthesize_p2(model: &AgentModel, rho: f64, delta_hint: Option<f64>) -> Result<ProtocolRealization> {
    validate_rho(rho)?;
    precondition(
        check_stabilizable(&model.a, &model.b)? && check_detectable(&model.a, &model.c)?,
        'a',
        "(A,B) not stabilizable or (C,A) not detectable",
    )?;
    precondition(check_clhp(&model.a)?, 'b', "A has eigenvalues in the open right half plane")?;
    let minphase = match check_minphase_leftinv(&model.a, &model.e, &model.c) {
        Ok((ok, _)) => ok,
        Err(Error::RankDeficientEverywhere) => false,
        Err(e) => return Err(e),
    };
    precondition(minphase, 'c', "(A,E,C,0) is not minimum phase and left invertible")?;
    precondition(
        check_disturbance_match(&model.b, &model.e)?.0,
        'e',
        "im E is not contained in im B",
    )?;

    let care = solve_care_standard(&model.a, &model.b)?;
    let (delta, q) = match delta_hint {
        Some(delta) => {
            let sol = solve_filter_riccati(&model.a, &model.e, &model.c, rho, delta)?;
            (delta, sol.solution)
        }
        None => search_delta(model, rho)?,
    };
    Ok(ProtocolRealization {
        kind: ProtocolKind::P2,
        rho,
        delta: Some(delta),
        p: care.solution,
        q: Some(q),
        controller_state_dim: 2 * model.n(),
    })
}

fn search_delta(model: &AgentModel, rho: f64) -> Result<(f64, Mat)> {
    let mut attempts = Vec::new();
    let mut delta = 1.0;
    while delta >= DELTA_FLOOR {
        match solve_filter_riccati(&model.a, &model.e, &model.c, rho, delta) {
            Ok(sol) => return Ok((delta, sol.solution)),
            Err(e) => attempts.push((delta, e.to_string())),
        }
        delta *= 0.5;
    }
    Err(Error::DeltaSearchExhausted { attempts })
}

/// Synthesizes the protocol matching `kind`.
pub fn synthesize(
    model: &AgentModel,
    kind: ProtocolKind,
    rho: f64,
    delta_hint: Option<f64>,
) -> Result<ProtocolRealization> {
    match kind {
        ProtocolKind::P1 => synthesize_p1(model, rho),
        ProtocolKind::P2 => synthesize_p2(model, rho, delta_hint),
    }
}

impl ProtocolRealization {
    /// State feedback `F = −ρBᵀP`.
    pub fn feedback_gain(&self, model: &AgentModel) -> Mat {
        -(model.b.transpose() * &self.p) * self.rho
    }

    /// `δ⁻²QCᵀ` (protocol 2 only).
    pub fn filter_gain(&self, model: &AgentModel) -> Option<Mat> {
        let q = self.q.as_ref()?;
        let delta = self.delta?;
        Some(q * model.c.transpose() / (delta * delta))
    }

    /// The protocol in its canonical parameterized form.
    pub fn controller_matrices(&self, model: &AgentModel) -> ControllerMatrices {
        let n = model.n();
        let rho = self.rho;
        let eye = Mat::identity(n, n);
        let bbtp = &model.b * model.b.transpose() * &self.p;
        let f = self.feedback_gain(model);
        let a_lqr = &model.a - &bbtp * rho;
        match self.kind {
            ProtocolKind::P1 => ControllerMatrices {
                ac: a_lqr,
                bc: &eye * rho,
                cc: &eye * -rho,
                fc: f,
                hc: eye,
            },
            ProtocolKind::P2 => {
                let k = self.filter_gain(model).expect("protocol 2 carries a filter");
                let a_filter = &model.a - &k * &model.c;
                let zero = Mat::zeros(n, n);
                let p = model.c.nrows();
                ControllerMatrices {
                    ac: block(&[&[&a_filter, &zero], &[&(&eye * rho), &a_lqr]]),
                    bc: block(&[&[&k], &[&Mat::zeros(n, p)]]),
                    cc: block(&[&[&(&bbtp * -rho)], &[&(&eye * -rho)]]),
                    fc: block(&[&[&Mat::zeros(f.nrows(), n), &f]]),
                    hc: block(&[&[&zero, &eye]]),
                }
            }
        }
    }

    /// Flat text with every float written to 17 significant digits, so that
    /// [`ProtocolRealization::parse`] restores it bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "rho {:.16e}", self.rho);
        match self.delta {
            Some(d) => {
                let _ = writeln!(s, "delta {d:.16e}");
            }
            None => s.push_str("delta none\n"),
        }
        let _ = writeln!(s, "controller_state_dim {}", self.controller_state_dim);
        write_matrix(&mut s, "P", &self.p);
        if let Some(q) = &self.q {
            write_matrix(&mut s, "Q", q);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = crate::graph::data_lines(text).peekable();
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (ln, l) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing '{key}'"),
            })?;
            let mut it = l.splitn(2, char::is_whitespace);
            let k = it.next().unwrap_or("");
            if k != key {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected '{key}', found '{k}'"),
                });
            }
            Ok((ln, it.next().unwrap_or("").trim().to_string()))
        };
        let num = |ln: usize, t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line: ln,
                message: format!("invalid number '{t}'"),
            })
        };
        let (ln, kind) = field("kind")?;
        let kind: ProtocolKind = kind.parse().map_err(|e: Error| Error::Parse {
            line: ln,
            message: e.to_string(),
        })?;
        let (ln, rho) = field("rho")?;
        let rho = num(ln, &rho)?;
        let (ln, delta) = field("delta")?;
        let delta = if delta == "none" { None } else { Some(num(ln, &delta)?) };
        let (ln, dim) = field("controller_state_dim")?;
        let controller_state_dim = dim.parse::<usize>().map_err(|_| Error::Parse {
            line: ln,
            message: format!("invalid dimension '{dim}'"),
        })?;
        let mut read_matrix = |key: &str| -> Result<Mat> {
            let (ln, dims) = field(key)?;
            let d: Vec<usize> = dims.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            if d.len() != 2 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected '{key} rows cols'"),
                });
            }
            let mut data = Vec::with_capacity(d[0] * d[1]);
            for _ in 0..d[0] {
                let (ln, row) = field("row")?;
                for t in row.split_whitespace() {
                    data.push(num(ln, t)?);
                }
            }
            if data.len() != d[0] * d[1] {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("{key}: expected {} entries, got {}", d[0] * d[1], data.len()),
                });
            }
            Ok(Mat::from_row_slice(d[0], d[1], &data))
        };
        let p = read_matrix("P")?;
        let q = match kind {
            ProtocolKind::P1 => None,
            ProtocolKind::P2 => Some(read_matrix("Q")?),
        };
        Ok(Self {
            kind,
            rho,
            delta,
            p,
            q,
            controller_state_dim,
        })
    }
}

fn write_matrix(s: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(s, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        let _ = writeln!(s, "row {}", row.join(" "));
    }
}
