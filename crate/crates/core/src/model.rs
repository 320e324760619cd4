//! Identical-agent model `ẋ = Ax + Bu + Eω, y = Cx` and its text format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::data_lines;
use crate::linalg::{ensure_finite, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// `C = I`: agents exchange full relative states.
    FullState,
    PartialState,
}

impl CouplingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CouplingKind::FullState => "full-state",
            CouplingKind::PartialState => "partial-state",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub e: Mat,
}

impl AgentModel {
    pub fn new(a: Mat, b: Mat, c: Mat, e: Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::DimensionMismatch(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.nrows() != n || c.ncols() != n || e.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent model: A {:?}, B {:?}, C {:?}, E {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                e.shape()
            )));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&e, "E")] {
            ensure_finite(m, name)?;
        }
        Ok(Self { a, b, c, e })
    }

    /// Same dynamics with `C = I`.
    pub fn with_full_state(&self) -> Self {
        let n = self.n();
        Self {
            c: Mat::identity(n, n),
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn w(&self) -> usize {
        self.e.ncols()
    }

    pub fn coupling(&self) -> CouplingKind {
        let n = self.n();
        if self.c.shape() == (n, n) && self.c == Mat::identity(n, n) {
            CouplingKind::FullState
        } else {
            CouplingKind::PartialState
        }
    }

    /// Parses `n m p w` followed by the entries of A, B, C and E in row-major
    /// order. Line breaks are free-form; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = data_lines(text)
            .flat_map(|(ln, l)| l.split_whitespace().map(move |t| (ln, t)));
        let mut last_line = 1;
        let mut next_num = |what: &str| -> Result<f64> {
            let (ln, t) = tokens.next().ok_or_else(|| Error::Parse {
                line: last_line,
                message: format!("unexpected end of file while reading {what}"),
            })?;
            last_line = ln;
            t.parse::<f64>().map_err(|_| Error::Parse {
                line: ln,
                message: format!("invalid number '{t}' in {what}"),
            })
        };
        let mut dims = [0usize; 4];
        for (k, d) in dims.iter_mut().enumerate() {
            let v = next_num("header")?;
            if v.fract() != 0.0 || v < 0.0 || (k == 0 && v < 1.0) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("header dimension {v} must be a nonnegative integer"),
                });
            }
            *d = v as usize;
        }
        let [n, m, p, w] = dims;
        let mut read = |rows: usize, cols: usize, name: &str| -> Result<Mat> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(next_num(name)?);
            }
            Ok(Mat::from_row_slice(rows, cols, &data))
        };
        let a = read(n, n, "A")?;
        let b = read(n, m, "B")?;
        let c = read(p, n, "C")?;
        let e = read(n, w, "E")?;
        if let Some((ln, t)) = tokens.next() {
            return Err(Error::Parse {
                line: ln,
                message: format!("trailing data '{t}' after E"),
            });
        }
        Self::new(a, b, c, e).map_err(|err| Error::Parse {
            line: 1,
            message: err.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {} {}\n", self.n(), self.m(), self.p(), self.w());
        for (m, name) in [(&self.a, "A"), (&self.b, "B"), (&self.c, "C"), (&self.e, "E")] {
            let _ = writeln!(s, "# {name}");
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }
}
