//! Plain-text snapshot of a pair history: a header line `n m gamma seed`
//! followed by `S` and then `Y` in column-major order, whitespace separated,
//! each value printed with 17 significant digits.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compact::LSR1Factors;
use crate::error::{Result, TrsError};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub gamma: f64,
    pub seed: u64,
    pub s: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Snapshot {
    pub fn new(gamma: f64, seed: u64, s: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if s.shape() != y.shape() {
            return Err(TrsError::Parse(format!("S is {:?} but Y is {:?}", s.shape(), y.shape())));
        }
        Ok(Self { gamma, seed, s, y })
    }

    /// Standard-normal pairs drawn from `seed`.
    pub fn random(n: usize, m: usize, gamma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let y = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        Self { gamma, seed, s, y }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn pairs(&self) -> usize {
        self.s.ncols()
    }

    pub fn factors(&self) -> Result<LSR1Factors> {
        LSR1Factors::from_pairs(self.gamma, &self.s, &self.y)
    }

    /// Gradient paired with this snapshot: standard normal from `seed + 1`,
    /// so it is independent of the pair stream.
    pub fn gradient(&self) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(&mut rng))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {:.16e} {}\n", self.dim(), self.pairs(), self.gamma, self.seed);
        for mat in [&self.s, &self.y] {
            for col in mat.column_iter() {
                let line: Vec<String> = col.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| tokens.next().ok_or_else(|| TrsError::Parse(format!("missing {what}")));
        let bad = |what: &str, tok: &str| TrsError::Parse(format!("invalid {what}: {tok:?}"));

        let tok = next("n")?;
        let n: usize = tok.parse().map_err(|_| bad("n", tok))?;
        let tok = next("m")?;
        let m: usize = tok.parse().map_err(|_| bad("m", tok))?;
        let tok = next("gamma")?;
        let gamma: f64 = tok.parse().map_err(|_| bad("gamma", tok))?;
        let tok = next("seed")?;
        let seed: u64 = tok.parse().map_err(|_| bad("seed", tok))?;

        let mut values = Vec::with_capacity(2 * n * m);
        for k in 0..2 * n * m {
            let tok = next("matrix entry")?;
            values.push(tok.parse::<f64>().map_err(|_| bad(&format!("entry {k}"), tok))?);
        }
        if tokens.next().is_some() {
            return Err(TrsError::Parse(format!("trailing data after {} entries", 2 * n * m)));
        }
        let s = DMatrix::from_column_slice(n, m, &values[..n * m]);
        let y = DMatrix::from_column_slice(n, m, &values[n * m..]);
        Ok(Self { gamma, seed, s, y })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| TrsError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| TrsError::Io { path: path.to_path_buf(), source })
    }
}
