//! Linear maps between mode-space fields.

use crate::scalar::{CMat, CVec, Real};

#[derive(Clone, Debug)]
pub enum Blocks<R: Real> {
    /// One block per Fourier slot (θ-independent coefficients).
    PerSlot(Vec<CMat<R>>),
    /// A single matrix coupling all slots.
    Coupled(CMat<R>),
}

/// Map whose rows and columns are both grouped by Fourier slot, with
/// `rows` resp. `cols` entries per slot.
#[derive(Clone, Debug)]
pub struct ModeOp<R: Real> {
    pub n_slots: usize,
    pub rows: usize,
    pub cols: usize,
    pub blocks: Blocks<R>,
}

impl<R: Real> ModeOp<R> {
    pub fn per_slot(blocks: Vec<CMat<R>>) -> Self {
        let (rows, cols) = blocks[0].shape();
        Self {
            n_slots: blocks.len(),
            rows,
            cols,
            blocks: Blocks::PerSlot(blocks),
        }
    }

    pub fn coupled(n_slots: usize, rows: usize, cols: usize, m: CMat<R>) -> Self {
        assert_eq!(m.shape(), (n_slots * rows, n_slots * cols));
        Self {
            n_slots,
            rows,
            cols,
            blocks: Blocks::Coupled(m),
        }
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.blocks, Blocks::Coupled(_))
    }

    pub fn nrows(&self) -> usize {
        self.n_slots * self.rows
    }

    pub fn ncols(&self) -> usize {
        self.n_slots * self.cols
    }

    /// Diagonal block of slot `s` (for a coupled map, the slot-to-slot
    /// restriction).
    pub fn slot_block(&self, s: usize) -> CMat<R> {
        match &self.blocks {
            Blocks::PerSlot(b) => b[s].clone(),
            Blocks::Coupled(m) => m
                .view((s * self.rows, s * self.cols), (self.rows, self.cols))
                .into_owned(),
        }
    }

    pub fn apply(&self, v: &CVec<R>) -> CVec<R> {
        assert_eq!(v.len(), self.ncols());
        match &self.blocks {
            Blocks::Coupled(m) => m * v,
            Blocks::PerSlot(b) => {
                let mut out = CVec::<R>::zeros(self.nrows());
                for (s, blk) in b.iter().enumerate() {
                    let seg = blk * v.rows(s * self.cols, self.cols);
                    out.rows_mut(s * self.rows, self.rows).copy_from(&seg);
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> CMat<R> {
        match &self.blocks {
            Blocks::Coupled(m) => m.clone(),
            Blocks::PerSlot(b) => {
                let mut out = CMat::<R>::zeros(self.nrows(), self.ncols());
                for (s, blk) in b.iter().enumerate() {
                    out.view_mut((s * self.rows, s * self.cols), (self.rows, self.cols))
                        .copy_from(blk);
                }
                out
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        match &self.blocks {
            Blocks::Coupled(m) => Self::coupled(self.n_slots, self.cols, self.rows, m.adjoint()),
            Blocks::PerSlot(b) => Self::per_slot(b.iter().map(|m| m.adjoint()).collect()),
        }
    }

    pub fn scale(&self, a: R) -> Self {
        let c = crate::scalar::creal(a);
        match &self.blocks {
            Blocks::Coupled(m) => Self::coupled(self.n_slots, self.rows, self.cols, m * c),
            Blocks::PerSlot(b) => Self::per_slot(b.iter().map(|m| m * c).collect()),
        }
    }
}
