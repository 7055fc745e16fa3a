//! Flat parameter vectors with a named-layer layout, and index-group
//! partitions over them.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

impl LayerSlot {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Ordered, contiguous, non-overlapping slots covering `[0, dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    slots: Vec<LayerSlot>,
}

impl Layout {
    pub fn new(slots: Vec<LayerSlot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::structural("layout has no slots"));
        }
        let mut next = 0;
        for slot in &slots {
            if slot.range.start != next {
                return Err(Error::structural(format!(
                    "slot `{}` starts at {} but previous slot ended at {next}",
                    slot.name, slot.range.start
                )));
            }
            if slot.range.is_empty() {
                return Err(Error::structural(format!("slot `{}` is empty", slot.name)));
            }
            let numel: usize = slot.shape.iter().product();
            if numel != slot.range.len() {
                return Err(Error::structural(format!(
                    "slot `{}` has shape {:?} ({numel} entries) but range length {}",
                    slot.name,
                    slot.shape,
                    slot.range.len()
                )));
            }
            next = slot.range.end;
        }
        Ok(Self { slots })
    }

    /// Builds a layout by laying out `(name, shape)` pairs back to back.
    pub fn from_shapes<S: Into<String>>(shapes: impl IntoIterator<Item = (S, Vec<usize>)>) -> Result<Self> {
        let mut start = 0;
        let slots = shapes
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let slot = LayerSlot { name: name.into(), shape, range: start..start + len };
                start += len;
                slot
            })
            .collect();
        Self::new(slots)
    }

    /// Single unnamed slot of length `dim`.
    pub fn flat(dim: usize) -> Result<Self> {
        Self::from_shapes([("w", vec![dim])])
    }

    pub fn dim(&self) -> usize {
        self.slots.last().map_or(0, |s| s.range.end)
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&LayerSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Real parameter vector (weights, iterates, anchors) with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::structural(format!(
                "{} values for a layout of dimension {}",
                values.len(),
                layout.dim()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite parameter at index {i}")));
        }
        Ok(Self { values, layout })
    }

    /// Convenience constructor with a single flat slot.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let layout = Arc::new(Layout::flat(values.len())?);
        Self::new(values, layout)
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self { values: vec![0.0; layout.dim()], layout }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn slot_values(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| &self.values[s.range.clone()])
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Disjoint weighted index groups over a vector of dimension `dim`.
///
/// Indices not covered by any group are left out of every group term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    dim: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl GroupPartition {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if groups.len() != weights.len() {
            return Err(Error::structural(format!(
                "{} groups but {} weights",
                groups.len(),
                weights.len()
            )));
        }
        let mut seen = vec![false; dim];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::structural(format!("group {g} is empty")));
            }
            for &i in group {
                if i >= dim {
                    return Err(Error::structural(format!(
                        "group {g} index {i} out of range for dimension {dim}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::structural(format!("index {i} appears in more than one group")));
                }
            }
        }
        if let Some(g) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::structural(format!("group {g} weight must be positive and finite")));
        }
        Ok(Self { dim, groups, weights })
    }

    /// Groups weighted by `sqrt(|I_g|)`.
    pub fn with_size_weights(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let weights = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
        Self::new(dim, groups, weights)
    }

    /// Contiguous blocks of `size` coordinates (the last may be shorter).
    pub fn contiguous(dim: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::structural("block size must be positive"));
        }
        let groups = (0..dim).step_by(size).map(|s| (s..(s + size).min(dim)).collect()).collect();
        Self::with_size_weights(dim, groups)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.groups.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// `true` at every coordinate that belongs to some group.
    pub fn covered(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dim];
        for &i in self.groups.iter().flatten() {
            mask[i] = true;
        }
        mask
    }

    pub fn covered_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::structural(format!(
                "partition over dimension {} applied to a vector of length {len}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Same groups with the group order permuted.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let groups = order.iter().map(|&g| self.groups[g].clone()).collect();
        let weights = order.iter().map(|&g| self.weights[g]).collect();
        Self::new(self.dim, groups, weights)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn group_norm(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
}
