use rand::Rng;

use crate::containers::Container;
use crate::error::{invalid, QdError, Result};
use crate::rng::RngStream;
use crate::types::{CellId, Genotype, Improvement, ScoringResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Elite {
    pub genotype: Genotype,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
}

/// Source of parents for emitters.
pub trait ParentPool: Sync {
    fn n_elites(&self) -> usize;

    /// The `i`-th elite in canonical (cell id, then front position) order.
    fn elite_genotype(&self, i: usize) -> &[f64];

    fn elite_descriptor(&self, i: usize) -> &[f64];

    fn elite_cell(&self, i: usize) -> CellId;

    fn is_empty(&self) -> bool {
        self.n_elites() == 0
    }

    /// Uniform draw with replacement; returns the elite index.
    fn sample_index(&self, rng: &mut RngStream) -> Result<usize> {
        let n = self.n_elites();
        if n == 0 {
            return Err(QdError::Emitter("cannot sample from an empty archive".into()));
        }
        Ok(rng.random_range(0..n))
    }

    fn sample_one(&self, rng: &mut RngStream) -> Result<&[f64]> {
        Ok(self.elite_genotype(self.sample_index(rng)?))
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> Result<Vec<Genotype>> {
        if count > 0 && self.is_empty() {
            return Err(QdError::Emitter("cannot sample from an empty archive".into()));
        }
        (0..count).map(|_| self.sample_one(rng).map(|g| g.to_vec())).collect()
    }
}

/// Single-objective archive holding at most one elite per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Repertoire {
    container: Container,
    cells: Vec<Option<Elite>>,
    // occupied cell ids, ascending
    occupied: Vec<CellId>,
}

impl Repertoire {
    pub fn new(container: Container) -> Self {
        let n = container.n_cells();
        Self {
            container,
            cells: vec![None; n],
            occupied: Vec::new(),
        }
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_occupied(&self) -> usize {
        self.occupied.len()
    }

    pub fn get(&self, cell: CellId) -> Option<&Elite> {
        self.cells.get(cell).and_then(|c| c.as_ref())
    }

    /// Occupied cells in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (CellId, &Elite)> {
        self.occupied
            .iter()
            .map(move |&c| (c, self.cells[c].as_ref().expect("occupied cell")))
    }

    pub fn cell_of(&self, result: &ScoringResult) -> Result<CellId> {
        self.check_descriptor(&result.descriptor)?;
        self.container.cell_index(&result.descriptor)
    }

    fn check_descriptor(&self, descriptor: &[f64]) -> Result<()> {
        if descriptor.len() != self.container.d_dims() {
            return Err(QdError::Config(format!(
                "descriptor dimension {} does not match container dimension {}",
                descriptor.len(),
                self.container.d_dims()
            )));
        }
        Ok(())
    }

    /// How a candidate with `fitness` landing in `cell` would change the archive.
    pub fn classify(&self, cell: CellId, fitness: f64) -> Improvement {
        match self.get(cell) {
            None => Improvement::NewCell,
            Some(e) if fitness > e.fitness => Improvement::Improved {
                delta: fitness - e.fitness,
            },
            Some(_) => Improvement::NotImproved,
        }
    }

    /// Inserts into an already-computed cell. Returns whether the candidate was stored.
    pub fn insert(&mut self, cell: CellId, elite: Elite) -> Result<bool> {
        if cell >= self.cells.len() {
            return invalid(format!("cell {cell} out of range"));
        }
        match &self.cells[cell] {
            Some(e) if elite.fitness <= e.fitness => Ok(false),
            Some(_) => {
                self.cells[cell] = Some(elite);
                Ok(true)
            }
            None => {
                let pos = self.occupied.partition_point(|&c| c < cell);
                self.occupied.insert(pos, cell);
                self.cells[cell] = Some(elite);
                Ok(true)
            }
        }
    }

    /// Offers one scored candidate.
    pub fn add(&mut self, genotype: &[f64], result: &ScoringResult) -> Result<bool> {
        let cell = self.cell_of(result)?;
        if let Some(e) = self.get(cell) {
            if result.fitness() <= e.fitness {
                return Ok(false);
            }
        }
        self.insert(
            cell,
            Elite {
                genotype: genotype.to_vec(),
                fitness: result.fitness(),
                descriptor: result.descriptor.clone(),
            },
        )
    }

    /// Offers a batch in order; strict improvement replaces, ties keep the incumbent.
    pub fn add_batch(&mut self, batch: &[(Genotype, ScoringResult)]) -> Result<usize> {
        let mut stored = 0;
        for (g, r) in batch {
            if self.add(g, r)? {
                stored += 1;
            }
        }
        Ok(stored)
    }
}

impl ParentPool for Repertoire {
    fn n_elites(&self) -> usize {
        self.occupied.len()
    }

    fn elite_genotype(&self, i: usize) -> &[f64] {
        &self.cells[self.occupied[i]].as_ref().expect("occupied cell").genotype
    }

    fn elite_descriptor(&self, i: usize) -> &[f64] {
        &self.cells[self.occupied[i]].as_ref().expect("occupied cell").descriptor
    }

    fn elite_cell(&self, i: usize) -> CellId {
        self.occupied[i]
    }
}
