//! Coupling matrices and the structural hypotheses on them: the block sign
//! pattern, connectivity of the cooperative graph inside each block, and the
//! dominance inequality of intra-block over cross-block coupling.

use std::collections::VecDeque;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groundstate::RadialProfile;
use crate::linalg::SquareMatrix;
use crate::scalar::{close, Real};

/// Indices are stored 0-based and displayed 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("coupling matrix is empty")]
    Empty,
    #[error("row {} has {len} entries, expected {expected}", .row + 1)]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("entry ({}, {}) is not finite", .0 + 1, .1 + 1)]
    NonFinite(usize, usize),
    #[error("matrix is not symmetric at ({}, {})", .0 + 1, .1 + 1)]
    NotSymmetric(usize, usize),
    #[error("diagonal entry ({i}, {i}) must be positive", i = .0 + 1)]
    DiagonalNotPositive(usize),
    #[error("intra-block entry ({}, {}) must be nonnegative", .0 + 1, .1 + 1)]
    IntraBlockNegative(usize, usize),
    #[error("cross-block entry ({}, {}) must be negative", .0 + 1, .1 + 1)]
    CrossBlockNonNegative(usize, usize),
    #[error("bad block boundaries: {0}")]
    BadBoundaries(String),
    #[error("{signs} sign labels given for {blocks} blocks")]
    SignCount { blocks: usize, signs: usize },
    #[error("block {} has at least two components but no positive coupling", .0 + 1)]
    EmptyEdgeSet(usize),
    #[error("exponent must exceed 1")]
    InvalidExponent,
    #[error("C_* must be positive and finite")]
    InvalidCstar,
    #[error("profile exponent {profile} does not match p = {p}")]
    ProfileMismatch { profile: f64, p: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Symmetric real `ℓ × ℓ` matrix of coupling strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>", bound = "T: Real")]
pub struct CouplingMatrix<T> {
    entries: SquareMatrix<T>,
}

impl<T: Real> CouplingMatrix<T> {
    /// Symmetry is checked to `1e-12` relative.
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, CouplingError> {
        let ell = rows.len();
        if ell == 0 {
            return Err(CouplingError::Empty);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ell {
                return Err(CouplingError::NotSquare {
                    row: i,
                    len: row.len(),
                    expected: ell,
                });
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(CouplingError::NonFinite(i, j));
            }
        }
        let tol = T::lit(1e-12);
        for i in 0..ell {
            for j in i + 1..ell {
                if !close(rows[i][j], rows[j][i], tol) {
                    return Err(CouplingError::NotSymmetric(i, j));
                }
            }
        }
        let entries = SquareMatrix::from_fn(ell, |i, j| {
            if i <= j {
                rows[i][j]
            } else {
                rows[j][i]
            }
        });
        Ok(Self { entries })
    }

    /// Whitespace-separated rows; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self, CouplingError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let row = body
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map(T::lit).map_err(|e| CouplingError::Parse {
                        line: lineno + 1,
                        msg: format!("`{tok}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn ell(&self) -> usize {
        self.entries.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries.get(i, j)
    }

    pub fn entries(&self) -> &SquareMatrix<T> {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.entries.rows()
    }

    /// Principal submatrix on the given components.
    pub fn submatrix(&self, idx: &[usize]) -> SquareMatrix<T> {
        self.entries.submatrix(idx)
    }

    /// Relabels components: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            entries: self.entries.submatrix(perm),
        }
    }
}

impl<T: Real> TryFrom<Vec<Vec<T>>> for CouplingMatrix<T> {
    type Error = CouplingError;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl<T: Real> From<CouplingMatrix<T>> for Vec<Vec<T>> {
    fn from(m: CouplingMatrix<T>) -> Self {
        m.rows()
    }
}

/// Whether a block seeks positive (`Plus`) or sign-changing (`Minus`) components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockSign {
    Plus,
    Minus,
}

impl fmt::Display for BlockSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockSign::Plus => "+",
            BlockSign::Minus => "-",
        })
    }
}

impl std::str::FromStr for BlockSign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+" | "plus" | "Q+" => Ok(BlockSign::Plus),
            "-" | "minus" | "Q-" => Ok(BlockSign::Minus),
            other => Err(format!("unknown block sign `{other}`")),
        }
    }
}

/// Sign label per block, in block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignPartition(pub Vec<BlockSign>);

impl SignPartition {
    pub fn all_plus(q: usize) -> Self {
        Self(vec![BlockSign::Plus; q])
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn sign(&self, h: usize) -> BlockSign {
        self.0[h]
    }

    pub fn count_plus(&self) -> usize {
        self.0.iter().filter(|s| **s == BlockSign::Plus).count()
    }

    pub fn count_minus(&self) -> usize {
        self.q() - self.count_plus()
    }
}

/// Consecutive index blocks `I_h = [ℓ_{h−1}, ℓ_h)` with their sign labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    boundaries: Vec<usize>,
    signs: SignPartition,
}

impl BlockDecomposition {
    /// Checks only the shape of the boundaries, not the matrix.
    pub fn new(boundaries: Vec<usize>, signs: SignPartition) -> Result<Self, CouplingError> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(CouplingError::BadBoundaries(
                "need at least two boundaries starting at 0".into(),
            ));
        }
        if let Some(w) = boundaries.windows(2).find(|w| w[1] <= w[0]) {
            return Err(CouplingError::BadBoundaries(format!(
                "not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let q = boundaries.len() - 1;
        if signs.q() != q {
            return Err(CouplingError::SignCount {
                blocks: q,
                signs: signs.q(),
            });
        }
        Ok(Self { boundaries, signs })
    }

    /// One block per component.
    pub fn singletons(ell: usize, signs: SignPartition) -> Result<Self, CouplingError> {
        Self::new((0..=ell).collect(), signs)
    }

    pub fn q(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn ell(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn signs(&self) -> &SignPartition {
        &self.signs
    }

    pub fn sign(&self, h: usize) -> BlockSign {
        self.signs.sign(h)
    }

    pub fn block(&self, h: usize) -> Range<usize> {
        self.boundaries[h]..self.boundaries[h + 1]
    }

    pub fn block_indices(&self, h: usize) -> Vec<usize> {
        self.block(h).collect()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= i) - 1
    }
}

/// Checks the sign pattern: positive diagonal, nonnegative inside blocks,
/// negative across blocks. Errors name the first offending entry in row-major
/// order of the upper triangle.
pub fn validate_block_structure<T: Real>(
    matrix: &CouplingMatrix<T>,
    boundaries: &[usize],
    signs: SignPartition,
) -> Result<BlockDecomposition, CouplingError> {
    let decomp = BlockDecomposition::new(boundaries.to_vec(), signs)?;
    let ell = matrix.ell();
    if decomp.ell() != ell {
        return Err(CouplingError::BadBoundaries(format!(
            "last boundary {} differs from matrix size {ell}",
            decomp.ell()
        )));
    }
    for i in 0..ell {
        for j in i..ell {
            let b = matrix.get(i, j);
            if i == j {
                if b <= T::zero() {
                    return Err(CouplingError::DiagonalNotPositive(i));
                }
            } else if decomp.block_of(i) == decomp.block_of(j) {
                if b < T::zero() {
                    return Err(CouplingError::IntraBlockNegative(i, j));
                }
            } else if b >= T::zero() {
                return Err(CouplingError::CrossBlockNonNegative(i, j));
            }
        }
    }
    Ok(decomp)
}

/// Breadth-first search over the positive off-diagonal couplings of block `h`.
pub fn check_graph_connected<T: Real>(
    decomp: &BlockDecomposition,
    matrix: &CouplingMatrix<T>,
    h: usize,
) -> bool {
    let idx = decomp.block_indices(h);
    let n = idx.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(a) = queue.pop_front() {
        for b in 0..n {
            if !seen[b] && a != b && matrix.get(idx[a], idx[b]) > T::zero() {
                seen[b] = true;
                reached += 1;
                queue.push_back(b);
            }
        }
    }
    reached == n
}

/// Where the constant used in the dominance check came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CstarSource {
    UserSupplied,
    ExactTrivialCase,
    EstimatedUpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct B3BlockResult<T> {
    /// 0-based block index.
    pub block: usize,
    pub size: usize,
    /// Absent for single-component blocks.
    pub lhs: Option<T>,
    pub rhs: T,
    pub pass: bool,
    pub vacuous: bool,
    /// Both sides agree to `1e-12`; reported as a failure.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct B3Report<T> {
    pub exponent: T,
    pub cstar: T,
    pub cstar_source: CstarSource,
    pub per_block: Vec<B3BlockResult<T>>,
}

impl<T: Real> B3Report<T> {
    pub fn all_pass(&self) -> bool {
        self.per_block.iter().all(|b| b.pass)
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.per_block.iter().find(|b| !b.pass).map(|b| b.block)
    }
}

/// Evaluates the dominance inequality
/// `min_{E_h} β_ij · [min_k max_{I_k} β_ii / Σ_{I_h×I_h} β_ij]^{p/(p−1)} > C_* Σ_{I_h×I_h^c} |β_ij|`
/// for every block with at least two components.
pub fn check_b3<T: Real>(
    decomp: &BlockDecomposition,
    matrix: &CouplingMatrix<T>,
    p: T,
    cstar: T,
    cstar_source: CstarSource,
) -> Result<B3Report<T>, CouplingError> {
    if !(p > T::one()) {
        return Err(CouplingError::InvalidExponent);
    }
    if !(cstar > T::zero()) || !cstar.is_finite() {
        return Err(CouplingError::InvalidCstar);
    }
    let q = decomp.q();
    let ell = matrix.ell();
    let min_max_diag = (0..q)
        .map(|k| {
            decomp
                .block(k)
                .map(|i| matrix.get(i, i))
                .fold(T::neg_infinity(), T::max)
        })
        .fold(T::infinity(), T::min);
    let power = p / (p - T::one());
    let mut per_block = Vec::with_capacity(q);
    for h in 0..q {
        let block = decomp.block(h);
        let rhs = cstar
            * block
                .clone()
                .flat_map(|i| (0..ell).map(move |j| (i, j)))
                .filter(|&(_, j)| decomp.block_of(j) != h)
                .map(|(i, j)| matrix.get(i, j).abs())
                .sum::<T>();
        if block.len() < 2 {
            per_block.push(B3BlockResult {
                block: h,
                size: block.len(),
                lhs: None,
                rhs,
                pass: true,
                vacuous: true,
                tie: false,
            });
            continue;
        }
        let mut min_edge = T::infinity();
        let mut total = T::zero();
        for i in block.clone() {
            for j in block.clone() {
                let b = matrix.get(i, j);
                total += b;
                if i != j && b > T::zero() {
                    min_edge = min_edge.min(b);
                }
            }
        }
        if !min_edge.is_finite() {
            return Err(CouplingError::EmptyEdgeSet(h));
        }
        let lhs = min_edge * (min_max_diag / total).powf(power);
        let tie = close(lhs, rhs, T::lit(1e-12));
        per_block.push(B3BlockResult {
            block: h,
            size: block.len(),
            lhs: Some(lhs),
            rhs,
            pass: lhs > rhs && !tie,
            vacuous: false,
            tie,
        });
    }
    Ok(B3Report {
        exponent: p,
        cstar,
        cstar_source,
        per_block,
    })
}

/// Exact or upper-bound value of `C_* = (p d / ((p−1) S^{p/(p−1)}))^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CstarEstimate<T> {
    pub exponent: T,
    pub s_phi: T,
    pub d_phi: T,
    pub cstar: T,
    pub mode: CstarSource,
    /// Human-readable caveat; non-empty whenever the value is not exact.
    pub note: String,
}

impl<T: Real> CstarEstimate<T> {
    pub fn formula(p: T, s_phi: T, d_phi: T) -> T {
        (p * d_phi / ((p - T::one()) * s_phi.powf(p / (p - T::one())))).powf(p)
    }

    pub fn recompute(&self) -> T {
        Self::formula(self.exponent, self.s_phi, self.d_phi)
    }

    pub fn is_rigorous(&self) -> bool {
        self.mode == CstarSource::ExactTrivialCase
    }
}

/// Closed form for a single positive block; otherwise an upper bound built from
/// the unconstrained Sobolev quotient (a lower bound for `S_φ`) and disjointly
/// supported truncated bumps placed on the symmetry orbits (an upper bound for
/// `d_φ`). `m` is the rotation order of the symmetry group.
pub fn estimate_cstar<T: Real>(
    p: T,
    signs: &SignPartition,
    m: usize,
    omega: &RadialProfile<T>,
) -> Result<CstarEstimate<T>, CouplingError> {
    if !(p > T::one()) {
        return Err(CouplingError::InvalidExponent);
    }
    if !close(omega.exponent, p, T::lit(1e-12)) {
        return Err(CouplingError::ProfileMismatch {
            profile: omega.exponent.as_f64(),
            p: p.as_f64(),
        });
    }
    let energy = (p - T::one()) / (T::lit(2.0) * p);
    let s_phi = omega.norm_sq.powf((p - T::one()) / p);
    if signs.q() == 1 && signs.sign(0) == BlockSign::Plus {
        let d_phi = energy * omega.norm_sq;
        return Ok(CstarEstimate {
            exponent: p,
            s_phi,
            d_phi,
            cstar: CstarEstimate::formula(p, s_phi, d_phi),
            mode: CstarSource::ExactTrivialCase,
            note: String::new(),
        });
    }
    let plus = signs.count_plus();
    let minus = signs.count_minus();
    let bumps = if plus > 0 { 1 + (plus - 1) * m } else { 0 } + 2 * m * minus;
    let cutoff = omega.r_max().min(T::lit(30.0));
    let single = omega.truncated_nehari_energy(cutoff);
    let d_phi = energy * T::from_count(bumps) * single;
    Ok(CstarEstimate {
        exponent: p,
        s_phi,
        d_phi,
        cstar: CstarEstimate::formula(p, s_phi, d_phi),
        mode: CstarSource::EstimatedUpperBound,
        note: format!(
            "non-rigorous upper estimate: d_phi from {bumps} disjoint truncated bumps, \
             S_phi replaced by the unconstrained Sobolev quotient"
        ),
    })
}
