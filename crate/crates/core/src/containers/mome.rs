//! Multi-objective grid: every cell keeps a bounded Pareto front.

use crate::containers::pareto::{crowding_distance, dominates_unchecked};
use crate::containers::{Container, ParentPool};
use crate::error::{QdError, Result};
use crate::metrics::hypervolume;
use crate::types::{CellId, Genotype, Improvement, ScoringResult};

#[derive(Clone, Debug, PartialEq)]
pub struct MoElite {
    pub genotype: Genotype,
    pub objectives: Vec<f64>,
    pub descriptor: Vec<f64>,
}

/// Offers `candidate` to one cell's front.
///
/// A candidate that is dominated by, or equal in objectives to, a member is
/// rejected. Otherwise it is appended, the members it dominates are removed,
/// and on overflow the member with the smallest crowding distance is evicted
/// (lowest index on ties).
pub fn mome_cell_add(front: &[MoElite], candidate: MoElite, cap: usize) -> Result<Vec<MoElite>> {
    Ok(cell_add(front, candidate, cap)?.0)
}

// Returns the new front and whether the candidate is part of it.
fn cell_add(front: &[MoElite], candidate: MoElite, cap: usize) -> Result<(Vec<MoElite>, bool)> {
    if cap < 1 {
        return Err(QdError::Config("front capacity must be at least 1".into()));
    }
    let rejected = front
        .iter()
        .any(|m| m.objectives == candidate.objectives || dominates_unchecked(&m.objectives, &candidate.objectives));
    if rejected {
        return Ok((front.to_vec(), false));
    }
    let mut next: Vec<MoElite> = front
        .iter()
        .filter(|m| !dominates_unchecked(&candidate.objectives, &m.objectives))
        .cloned()
        .collect();
    next.push(candidate);
    let mut candidate_pos = Some(next.len() - 1);
    while next.len() > cap {
        let objs: Vec<&[f64]> = next.iter().map(|m| m.objectives.as_slice()).collect();
        let crowd = crowding_distance(&objs);
        let mut worst = 0;
        for (i, &c) in crowd.iter().enumerate() {
            if c < crowd[worst] {
                worst = i;
            }
        }
        next.remove(worst);
        candidate_pos = match candidate_pos {
            Some(p) if p == worst => None,
            Some(p) if p > worst => Some(p - 1),
            other => other,
        };
    }
    Ok((next, candidate_pos.is_some()))
}

/// Grid or CVT archive whose cells hold Pareto fronts.
#[derive(Clone, Debug, PartialEq)]
pub struct MoRepertoire {
    container: Container,
    fronts: Vec<Vec<MoElite>>,
    capacity: usize,
    reference: Vec<f64>,
    flat: Vec<(CellId, usize)>,
}

impl MoRepertoire {
    /// `reference` is the hypervolume reference point (per-objective lower bounds).
    pub fn new(container: Container, capacity: usize, reference: Vec<f64>) -> Result<Self> {
        if capacity < 1 {
            return Err(QdError::Config("front capacity must be at least 1".into()));
        }
        if reference.len() < 2 {
            return Err(QdError::Config(
                "multi-objective archive needs at least two objectives".into(),
            ));
        }
        let n = container.n_cells();
        Ok(Self {
            container,
            fronts: vec![Vec::new(); n],
            capacity,
            reference,
            flat: Vec::new(),
        })
    }

    /// Rebuilds an archive from stored fronts (used by deserialization).
    pub fn from_fronts(
        container: Container,
        capacity: usize,
        reference: Vec<f64>,
        fronts: Vec<Vec<MoElite>>,
    ) -> Result<Self> {
        let mut r = Self::new(container, capacity, reference)?;
        if fronts.len() != r.fronts.len() {
            return Err(QdError::InvalidArgument(
                "front count does not match the container".into(),
            ));
        }
        r.fronts = fronts;
        r.reindex();
        Ok(r)
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn n_cells(&self) -> usize {
        self.fronts.len()
    }

    pub fn n_occupied(&self) -> usize {
        self.fronts.iter().filter(|f| !f.is_empty()).count()
    }

    pub fn front(&self, cell: CellId) -> &[MoElite] {
        &self.fronts[cell]
    }

    pub fn fronts(&self) -> impl Iterator<Item = (CellId, &[MoElite])> {
        self.fronts
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_empty())
            .map(|(c, f)| (c, f.as_slice()))
    }

    pub fn cell_of(&self, result: &ScoringResult) -> Result<CellId> {
        if result.descriptor.len() != self.container.d_dims() {
            return Err(QdError::Config(format!(
                "descriptor dimension {} does not match container dimension {}",
                result.descriptor.len(),
                self.container.d_dims()
            )));
        }
        if result.objectives.len() != self.reference.len() {
            return Err(QdError::Config(format!(
                "expected {} objectives, got {}",
                self.reference.len(),
                result.objectives.len()
            )));
        }
        self.container.cell_index(&result.descriptor)
    }

    /// The cell's front after offering `elite`, or `None` when the front stays
    /// as it is. Besides the [`mome_cell_add`] rule, an insertion whose
    /// capacity eviction would lower the cell hypervolume is refused, so the
    /// per-cell hypervolume never decreases.
    fn offer(&self, cell: CellId, elite: MoElite) -> Result<Option<Vec<MoElite>>> {
        let front = self
            .fronts
            .get(cell)
            .ok_or_else(|| QdError::InvalidArgument(format!("cell {cell} out of range")))?;
        let (updated, kept) = cell_add(front, elite, self.capacity)?;
        if !kept {
            return Ok(None);
        }
        let evicted = updated.len() == front.len() && front.len() == self.capacity && self.reference.len() == 2;
        if evicted {
            let hv = |f: &[MoElite]| {
                let pts: Vec<&[f64]> = f.iter().map(|m| m.objectives.as_slice()).collect();
                hypervolume(&pts, &self.reference)
            };
            if hv(&updated)? < hv(front)? {
                return Ok(None);
            }
        }
        Ok(Some(updated))
    }

    /// Whether offering `objectives` to `cell` would change its front. Kept
    /// candidates in an occupied cell report a zero delta.
    pub fn classify(&self, cell: CellId, objectives: &[f64]) -> Result<Improvement> {
        let was_empty = self
            .fronts
            .get(cell)
            .ok_or_else(|| QdError::InvalidArgument(format!("cell {cell} out of range")))?
            .is_empty();
        let probe = MoElite {
            genotype: Vec::new(),
            objectives: objectives.to_vec(),
            descriptor: Vec::new(),
        };
        Ok(match self.offer(cell, probe)? {
            Some(_) if was_empty => Improvement::NewCell,
            Some(_) => Improvement::Improved { delta: 0.0 },
            None => Improvement::NotImproved,
        })
    }

    /// Inserts into a known cell; returns whether the candidate was kept.
    pub fn insert(&mut self, cell: CellId, elite: MoElite) -> Result<bool> {
        match self.offer(cell, elite)? {
            Some(updated) => {
                self.fronts[cell] = updated;
                self.reindex();
                Ok(true)
            }
            None => Ok(false),
        }
    }

    pub fn add(&mut self, genotype: &[f64], result: &ScoringResult) -> Result<bool> {
        let cell = self.cell_of(result)?;
        self.insert(
            cell,
            MoElite {
                genotype: genotype.to_vec(),
                objectives: result.objectives.clone(),
                descriptor: result.descriptor.clone(),
            },
        )
    }

    fn reindex(&mut self) {
        self.flat.clear();
        for (c, f) in self.fronts.iter().enumerate() {
            for p in 0..f.len() {
                self.flat.push((c, p));
            }
        }
    }
}

impl ParentPool for MoRepertoire {
    fn n_elites(&self) -> usize {
        self.flat.len()
    }

    fn elite_genotype(&self, i: usize) -> &[f64] {
        let (c, p) = self.flat[i];
        &self.fronts[c][p].genotype
    }

    fn elite_descriptor(&self, i: usize) -> &[f64] {
        let (c, p) = self.flat[i];
        &self.fronts[c][p].descriptor
    }

    fn elite_cell(&self, i: usize) -> CellId {
        self.flat[i].0
    }
}
