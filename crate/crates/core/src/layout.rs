//! Ordered registry of the canonical variables carried by a Gaussian state.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    /// Oscillator quadratures.
    Quantum,
    /// Classical perturbation coordinates (position-like only).
    Classical,
    /// Quadratures of the current probe light segment.
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Position,
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableEntry {
    pub label: String,
    pub sector: Sector,
    pub quadrature: Quadrature,
    pub mode_id: u32,
}

impl VariableEntry {
    pub fn new(label: impl Into<String>, sector: Sector, quadrature: Quadrature, mode_id: u32) -> Self {
        Self { label: label.into(), sector, quadrature, mode_id }
    }

    pub fn quantum(label: impl Into<String>, quadrature: Quadrature, mode_id: u32) -> Self {
        Self::new(label, Sector::Quantum, quadrature, mode_id)
    }

    pub fn probe(label: impl Into<String>, quadrature: Quadrature, mode_id: u32) -> Self {
        Self::new(label, Sector::Probe, quadrature, mode_id)
    }

    pub fn classical(label: impl Into<String>, mode_id: u32) -> Self {
        Self::new(label, Sector::Classical, Quadrature::Position, mode_id)
    }
}

/// Position/momentum index pair of one oscillator (or probe) mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndices {
    pub sector: Sector,
    pub mode_id: u32,
    pub position: usize,
    pub momentum: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VariableEntry>", into = "Vec<VariableEntry>")]
pub struct VariableLayout {
    // Shared so that cloning a state per filter step stays cheap.
    entries: Arc<Vec<VariableEntry>>,
    #[serde(skip)]
    index: Arc<HashMap<String, usize>>,
}

impl TryFrom<Vec<VariableEntry>> for VariableLayout {
    type Error = Error;

    fn try_from(entries: Vec<VariableEntry>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<VariableLayout> for Vec<VariableEntry> {
    fn from(layout: VariableLayout) -> Self {
        Arc::unwrap_or_clone(layout.entries)
    }
}

impl VariableLayout {
    /// Validates labels, conjugate pairing of quantum/probe modes and the
    /// absence of conjugate entries for classical coordinates.
    pub fn new(entries: Vec<VariableEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.label.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(e.label.clone()));
            }
        }

        let mut seen: HashMap<(Sector, u32), (u32, u32)> = HashMap::new();
        for e in &entries {
            let counts = seen.entry((e.sector, e.mode_id)).or_default();
            match e.quadrature {
                Quadrature::Position => counts.0 += 1,
                Quadrature::Momentum => counts.1 += 1,
            }
        }
        for ((sector, mode), (nx, np)) in seen {
            match sector {
                Sector::Classical => {
                    if np != 0 || nx != 1 {
                        return Err(Error::InvalidLayout(format!(
                            "classical mode {mode} must have exactly one position-like entry and no conjugate"
                        )));
                    }
                }
                Sector::Quantum | Sector::Probe => {
                    if nx != 1 || np != 1 {
                        return Err(Error::InvalidLayout(format!(
                            "{sector:?} mode {mode} needs exactly one position and one momentum entry"
                        )));
                    }
                }
            }
        }
        Ok(Self { entries: Arc::new(entries), index: Arc::new(index) })
    }

    pub fn empty() -> Self {
        Self { entries: Arc::new(Vec::new()), index: Arc::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VariableEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &VariableEntry {
        &self.entries[i]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::UnknownLabel(label.to_owned()))
    }

    pub fn indices_of<'a, I>(&self, labels: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        labels.into_iter().map(|l| self.index_of(l)).collect()
    }

    /// Indices of all entries belonging to `sector`, in layout order.
    pub fn sector_indices(&self, sector: Sector) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| e.sector == sector).map(|(i, _)| i).collect()
    }

    /// Layout restricted to the given indices (in the given order).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices
            .iter()
            .map(|&i| {
                self.entries
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Dimension(format!("index {i} out of range for layout of {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut entries = (*self.entries).clone();
        entries.extend(other.entries.iter().cloned());
        Self::new(entries)
    }

    /// Conjugate index pairs of every quantum and probe mode.
    pub fn modes(&self) -> Vec<ModeIndices> {
        let mut out: Vec<ModeIndices> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.sector == Sector::Classical {
                continue;
            }
            let slot = match out.iter_mut().find(|m| m.sector == e.sector && m.mode_id == e.mode_id) {
                Some(m) => m,
                None => {
                    out.push(ModeIndices { sector: e.sector, mode_id: e.mode_id, position: usize::MAX, momentum: usize::MAX });
                    out.last_mut().unwrap()
                }
            };
            match e.quadrature {
                Quadrature::Position => slot.position = i,
                Quadrature::Momentum => slot.momentum = i,
            }
        }
        out
    }

    pub fn quantum_modes(&self) -> Vec<ModeIndices> {
        self.modes().into_iter().filter(|m| m.sector == Sector::Quantum).collect()
    }
}
