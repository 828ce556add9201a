use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One upper-triangular entry of a block-diagonal symmetric matrix (0-based).
/// Off-diagonal entries stand for both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Sparse block-diagonal symmetric matrix stored as sorted upper-triangular entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockSym {
    pub entries: Vec<Entry>,
}

impl BlockSym {
    pub fn from_entries(entries: impl IntoIterator<Item = Entry>) -> Self {
        let mut m = BlockSym { entries: entries.into_iter().collect() };
        m.canonicalize();
        m
    }

    /// Sorts by `(block, i, j)`, folds `(j, i)` onto `(i, j)`, merges duplicates and drops zeros.
    pub fn canonicalize(&mut self) {
        for e in &mut self.entries {
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
        }
        self.entries.sort_by_key(|e| (e.block, e.i, e.j));
        let mut merged: Vec<Entry> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.block, last.i, last.j) == (e.block, e.i, e.j) => last.value += e.value,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.value != 0.0);
        self.entries = merged;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Standard-form primal SDP:
/// minimize `⟨C, X⟩` subject to `⟨A_k, X⟩ = b_k` and `X ⪰ 0` blockwise.
///
/// `blocks` follows the SDPA convention: a positive entry `d` is a `d×d` PSD block,
/// a negative entry `-d` is a diagonal block of `d` nonnegative scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<i64>,
    pub cost: BlockSym,
    pub constraints: Vec<BlockSym>,
    pub rhs: Vec<f64>,
    /// Constant added to `⟨C, X⟩` when reporting objective values. Not part of the SDPA file.
    #[serde(default)]
    pub offset: f64,
}

impl SdpProblem {
    pub fn new(blocks: Vec<i64>, cost: BlockSym, constraints: Vec<BlockSym>, rhs: Vec<f64>) -> Result<Self> {
        let p = SdpProblem { blocks, cost, constraints, rhs, offset: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn block_dim(&self, b: usize) -> usize {
        self.blocks[b].unsigned_abs() as usize
    }

    pub fn is_lp_block(&self, b: usize) -> bool {
        self.blocks[b] < 0
    }

    /// Sum of absolute block dimensions.
    pub fn total_dim(&self) -> usize {
        (0..self.blocks.len()).map(|b| self.block_dim(b)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("block sizes must be nonzero".into()));
        }
        if self.constraints.len() != self.rhs.len() {
            return Err(Error::DimMismatch { expected: self.constraints.len(), found: self.rhs.len() });
        }
        let check = |m: &BlockSym| -> Result<()> {
            for e in &m.entries {
                if e.block >= self.blocks.len() {
                    return Err(Error::InvalidInput(format!("entry refers to block {} of {}", e.block, self.blocks.len())));
                }
                let d = self.block_dim(e.block);
                if e.i >= d || e.j >= d || e.i > e.j {
                    return Err(Error::InvalidInput(format!("entry ({}, {}) outside block {} of size {}", e.i, e.j, e.block, d)));
                }
                if self.is_lp_block(e.block) && e.i != e.j {
                    return Err(Error::InvalidInput("off-diagonal entry in a diagonal block".into()));
                }
                if !e.value.is_finite() {
                    return Err(Error::NonFinite);
                }
            }
            Ok(())
        };
        check(&self.cost)?;
        for c in &self.constraints {
            check(c)?;
        }
        if self.rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}
