//! Discrete memoryless channels, per-symbol information density and the
//! channel statistics used by the bounds (mutual information and lautum
//! information under the stored input distribution).
//!
//! Densities are in bits. Pairs with `P(y|x) = 0` are *unreachable*: they
//! have no density and are skipped rather than carried as `-inf`.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

const ROW_TOL: f64 = 1e-12;

/// Per-symbol information density table plus the induced output marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    /// `values[x][y]` is `log2(P(y|x) / P_Y(y))`, or `None` when the pair is
    /// unreachable.
    values: Vec<Vec<Option<f64>>>,
    output_marginal: Vec<f64>,
}

impl DensityTable {
    fn build(transition: &[Vec<f64>], input_dist: &[f64]) -> Self {
        let ny = transition[0].len();
        let output_marginal: Vec<f64> = (0..ny)
            .map(|y| {
                transition
                    .iter()
                    .zip(input_dist)
                    .map(|(row, &px)| px * row[y])
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect();
        let values = transition
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&output_marginal)
                    .map(|(&pyx, &py)| (pyx > 0.0 && py > 0.0).then(|| (pyx / py).log2()))
                    .collect()
            })
            .collect();
        Self {
            values,
            output_marginal,
        }
    }

    /// Density of the pair `(x, y)`, `None` when unreachable.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values.get(x)?.get(y).copied().flatten()
    }

    pub fn output_marginal(&self) -> &[f64] {
        &self.output_marginal
    }
}

/// A DMC `P(y|x)` together with the input distribution `P_X` the random
/// codebook is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    transition: Vec<Vec<f64>>,
    input_dist: Vec<f64>,
    crossover: Option<f64>,
    density: DensityTable,
}

impl ChannelModel {
    /// Builds a channel from a row-stochastic transition matrix and an input
    /// distribution.
    pub fn new(transition: Vec<Vec<f64>>, input_dist: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        if transition.is_empty() {
            return Err(Error::domain("transition matrix has no rows"));
        }
        let ny = transition[0].len();
        if ny == 0 {
            return Err(Error::domain("transition matrix has no columns"));
        }
        if input_dist.len() != transition.len() {
            problems.push(format!(
                "input_dist has {} entries but the transition matrix has {} rows",
                input_dist.len(),
                transition.len()
            ));
        }
        for (x, row) in transition.iter().enumerate() {
            if row.len() != ny {
                problems.push(format!(
                    "transition row {x} has {} entries, expected {ny}",
                    row.len()
                ));
                continue;
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                problems.push(format!("transition row {x} has an entry outside [0,1]"));
            }
            let s: CompensatedSum = row.iter().copied().collect();
            if (s.value() - 1.0).abs() > ROW_TOL {
                problems.push(format!("transition row {x} sums to {}", s.value()));
            }
        }
        if input_dist.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            problems.push("input_dist has an entry outside [0,1]".to_string());
        }
        let s: CompensatedSum = input_dist.iter().copied().collect();
        if (s.value() - 1.0).abs() > ROW_TOL {
            problems.push(format!("input_dist sums to {}", s.value()));
        }
        if !problems.is_empty() {
            return Err(Error::Domain(problems.join("; ")));
        }
        let density = DensityTable::build(&transition, &input_dist);
        Ok(Self {
            transition,
            input_dist,
            crossover: None,
            density,
        })
    }

    /// Binary symmetric channel with crossover `p` and uniform input.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("BSC crossover {p} outside [0,1]")));
        }
        let mut ch = Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]], vec![0.5, 0.5])?;
        ch.crossover = Some(p);
        Ok(ch)
    }

    pub fn input_alphabet_size(&self) -> usize {
        self.transition.len()
    }

    pub fn output_alphabet_size(&self) -> usize {
        self.transition[0].len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn input_dist(&self) -> &[f64] {
        &self.input_dist
    }

    /// Crossover probability when the channel was built with [`ChannelModel::bsc`].
    pub fn crossover(&self) -> Option<f64> {
        self.crossover
    }

    pub fn density(&self) -> &DensityTable {
        &self.density
    }

    /// `true` when some input with positive probability cannot produce some
    /// output that occurs with positive probability. The information density
    /// is then not essentially bounded.
    pub fn has_unbounded_density(&self) -> bool {
        let py = self.density.output_marginal();
        self.transition
            .iter()
            .zip(&self.input_dist)
            .any(|(row, &px)| {
                px > 0.0 && row.iter().zip(py).any(|(&pyx, &p)| p > 0.0 && pyx == 0.0)
            })
    }

    /// Information density `i(x^n; y^n)` in bits.
    pub fn information_density(&self, x_seq: &[usize], y_seq: &[usize]) -> Result<f64> {
        if x_seq.len() != y_seq.len() {
            return Err(Error::domain(format!(
                "sequence lengths differ ({} vs {})",
                x_seq.len(),
                y_seq.len()
            )));
        }
        let nx = self.input_alphabet_size();
        let ny = self.output_alphabet_size();
        let mut sum = CompensatedSum::new();
        for (pos, (&x, &y)) in x_seq.iter().zip(y_seq).enumerate() {
            if x >= nx || y >= ny {
                return Err(Error::domain(format!(
                    "symbol pair ({x},{y}) at {pos} out of alphabet"
                )));
            }
            match self.density.get(x, y) {
                Some(d) => sum.add(d),
                None => {
                    return Err(Error::domain(format!(
                        "pair ({x},{y}) at position {pos} is unreachable; density undefined"
                    )))
                }
            }
        }
        Ok(sum.value())
    }

    /// Mutual information `E[i(X;Y)]` under the stored input distribution.
    pub fn capacity(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for (x, (row, &px)) in self.transition.iter().zip(&self.input_dist).enumerate() {
            for (y, &pyx) in row.iter().enumerate() {
                if let Some(d) = self.density.get(x, y) {
                    s.add(px * pyx * d);
                }
            }
        }
        s.value().max(0.0)
    }

    /// Lautum information `-E[i(Xbar;Y)]` with `Xbar ~ P_X` independent of
    /// `Y`. Returns `f64::INFINITY` when a pair with `P_X(x) P_Y(y) > 0` is
    /// unreachable.
    pub fn lautum(&self) -> f64 {
        let py = self.density.output_marginal();
        let mut s = CompensatedSum::new();
        for (x, &px) in self.input_dist.iter().enumerate() {
            for (y, &pyv) in py.iter().enumerate() {
                let w = px * pyv;
                if w == 0.0 {
                    continue;
                }
                match self.density.get(x, y) {
                    Some(d) => s.add(-w * d),
                    None => return f64::INFINITY,
                }
            }
        }
        s.value().max(0.0)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}
