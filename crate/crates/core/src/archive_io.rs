//! JSON archive files.
//!
//! ```json
//! {"format_version":1,
//!  "container":{"type":"grid","dims":[50,50],"lower":[0,0],"upper":[1,1]},
//!  "cells":[{"cell_id":0,"genotype":[...],"fitness":-1.5,"descriptor":[...]}]}
//! ```
//!
//! Multi-objective archives carry `objectives` instead of `fitness` and an
//! extra `multi_objective` block with the hypervolume reference point (and the
//! per-cell front capacity for grid/CVT containers).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::containers::pareto::dominates_unchecked;
use crate::containers::{Container, CvtSpec, Elite, GridSpec, MoElite, MoRepertoire, Repertoire};
use crate::error::{QdError, Result};
use crate::types::{Bounds, CellId};

pub const FORMAT_VERSION: u64 = 1;

/// Final population of a population-based optimizer (NSGA-II, SPEA2).
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationArchive {
    pub members: Vec<MoElite>,
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Archive {
    Elites(Repertoire),
    Fronts(MoRepertoire),
    Population(PopulationArchive),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveDoc {
    format_version: u64,
    container: ContainerDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multi_objective: Option<MultiObjectiveDoc>,
    cells: Vec<CellDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ContainerDoc {
    Grid {
        dims: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Cvt {
        centroids: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Population {
        size: usize,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiObjectiveDoc {
    reference: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    front_capacity: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    cell_id: CellId,
    genotype: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fitness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objectives: Option<Vec<f64>>,
    descriptor: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn container_doc(c: &Container) -> ContainerDoc {
    match c {
        Container::Grid(g) => ContainerDoc::Grid {
            dims: g.dims.clone(),
            lower: g.lower.clone(),
            upper: g.upper.clone(),
        },
        Container::Cvt(c) => ContainerDoc::Cvt {
            centroids: c.centroids().to_vec(),
            lower: c.bounds().lower.clone(),
            upper: c.bounds().upper.clone(),
        },
    }
}

fn to_doc(archive: &Archive) -> ArchiveDoc {
    match archive {
        Archive::Elites(r) => ArchiveDoc {
            format_version: FORMAT_VERSION,
            container: container_doc(r.container()),
            multi_objective: None,
            cells: r
                .iter()
                .map(|(c, e)| CellDoc {
                    cell_id: c,
                    genotype: e.genotype.clone(),
                    fitness: Some(e.fitness),
                    objectives: None,
                    descriptor: e.descriptor.clone(),
                })
                .collect(),
        },
        Archive::Fronts(r) => ArchiveDoc {
            format_version: FORMAT_VERSION,
            container: container_doc(r.container()),
            multi_objective: Some(MultiObjectiveDoc {
                reference: r.reference().to_vec(),
                front_capacity: Some(r.capacity()),
            }),
            cells: r
                .fronts()
                .flat_map(|(c, front)| front.iter().map(move |m| mo_cell(c, m)))
                .collect(),
        },
        Archive::Population(p) => ArchiveDoc {
            format_version: FORMAT_VERSION,
            container: ContainerDoc::Population { size: p.members.len() },
            multi_objective: Some(MultiObjectiveDoc {
                reference: p.reference.clone(),
                front_capacity: None,
            }),
            cells: p.members.iter().enumerate().map(|(i, m)| mo_cell(i, m)).collect(),
        },
    }
}

fn mo_cell(cell_id: CellId, m: &MoElite) -> CellDoc {
    CellDoc {
        cell_id,
        genotype: m.genotype.clone(),
        fitness: None,
        objectives: Some(m.objectives.clone()),
        descriptor: m.descriptor.clone(),
    }
}

pub fn archive_to_string(archive: &Archive) -> String {
    serde_json::to_string(&to_doc(archive)).expect("archive serializes")
}

fn schema(msg: impl Into<String>) -> QdError {
    QdError::Parse {
        offset: 0,
        message: msg.into(),
    }
}

fn byte_offset(text: &str, err: &serde_json::Error) -> usize {
    if err.line() == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(err.line() - 1).map(str::len).sum();
    (line_start + err.column().saturating_sub(1)).min(text.len())
}

fn parse_error(text: &str, err: serde_json::Error) -> QdError {
    QdError::Parse {
        offset: byte_offset(text, &err),
        message: err.to_string(),
    }
}

pub fn archive_from_str(text: &str) -> Result<Archive> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_error(text, e))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(QdError::Version(probe.format_version));
    }
    let doc: ArchiveDoc = serde_json::from_str(text).map_err(|e| parse_error(text, e))?;
    from_doc(doc)
}

fn build_container(doc: ContainerDoc) -> Result<Option<Container>> {
    let map = |e: QdError| schema(format!("invalid container: {e}"));
    Ok(match doc {
        ContainerDoc::Grid { dims, lower, upper } => {
            Some(Container::Grid(GridSpec::new(dims, lower, upper).map_err(map)?))
        }
        ContainerDoc::Cvt {
            centroids,
            lower,
            upper,
        } => Some(Container::Cvt(
            CvtSpec::new(centroids, Bounds::new(lower, upper)).map_err(map)?,
        )),
        ContainerDoc::Population { .. } => None,
    })
}

fn check_cell(container: &Container, cell: &CellDoc) -> Result<()> {
    if cell.cell_id >= container.n_cells() {
        return Err(schema(format!("cell id {} out of range", cell.cell_id)));
    }
    let mapped = container
        .cell_index(&cell.descriptor)
        .map_err(|e| schema(format!("cell {}: {e}", cell.cell_id)))?;
    if mapped != cell.cell_id {
        return Err(schema(format!(
            "cell {} holds a descriptor that maps to cell {mapped}",
            cell.cell_id
        )));
    }
    Ok(())
}

fn from_doc(doc: ArchiveDoc) -> Result<Archive> {
    let population_size = match &doc.container {
        ContainerDoc::Population { size } => Some(*size),
        _ => None,
    };
    let container = build_container(doc.container)?;
    match (container, doc.multi_objective) {
        (Some(container), None) => {
            let mut r = Repertoire::new(container);
            for cell in doc.cells {
                check_cell(r.container(), &cell)?;
                let fitness = cell
                    .fitness
                    .ok_or_else(|| schema(format!("cell {} lacks fitness", cell.cell_id)))?;
                if cell.objectives.is_some() {
                    return Err(schema("single-objective cell carries objectives"));
                }
                if r.get(cell.cell_id).is_some() {
                    return Err(schema(format!("duplicate cell id {}", cell.cell_id)));
                }
                r.insert(
                    cell.cell_id,
                    Elite {
                        genotype: cell.genotype,
                        fitness,
                        descriptor: cell.descriptor,
                    },
                )?;
            }
            Ok(Archive::Elites(r))
        }
        (Some(container), Some(mo)) => {
            let cap = mo
                .front_capacity
                .ok_or_else(|| schema("multi_objective.front_capacity is required"))?;
            let mut fronts: Vec<Vec<MoElite>> = vec![Vec::new(); container.n_cells()];
            for cell in doc.cells {
                check_cell(&container, &cell)?;
                fronts[cell.cell_id].push(mo_elite(cell, mo.reference.len())?);
            }
            for (c, f) in fronts.iter().enumerate() {
                if f.len() > cap {
                    return Err(schema(format!("cell {c} exceeds front capacity")));
                }
                for a in f {
                    if f.iter().any(|b| dominates_unchecked(&b.objectives, &a.objectives)) {
                        return Err(schema(format!("cell {c} front has a dominated member")));
                    }
                }
            }
            let r =
                MoRepertoire::from_fronts(container, cap, mo.reference, fronts).map_err(|e| schema(e.to_string()))?;
            Ok(Archive::Fronts(r))
        }
        (None, Some(mo)) => {
            let size = population_size.unwrap_or_default();
            if doc.cells.len() != size {
                return Err(schema("population size does not match cell count"));
            }
            let mut members = Vec::with_capacity(size);
            for (i, cell) in doc.cells.into_iter().enumerate() {
                if cell.cell_id != i {
                    return Err(schema("population cells must be numbered 0..size"));
                }
                members.push(mo_elite(cell, mo.reference.len())?);
            }
            Ok(Archive::Population(PopulationArchive {
                members,
                reference: mo.reference,
            }))
        }
        (None, None) => Err(schema("population archive needs a multi_objective block")),
    }
}

fn mo_elite(cell: CellDoc, m: usize) -> Result<MoElite> {
    if cell.fitness.is_some() {
        return Err(schema("multi-objective cell carries a scalar fitness"));
    }
    let objectives = cell
        .objectives
        .ok_or_else(|| schema(format!("cell {} lacks objectives", cell.cell_id)))?;
    if objectives.len() != m {
        return Err(schema(format!(
            "cell {} has {} objectives",
            cell.cell_id,
            objectives.len()
        )));
    }
    Ok(MoElite {
        genotype: cell.genotype,
        objectives,
        descriptor: cell.descriptor,
    })
}

/// Writes the archive atomically: a temporary file in the target directory is
/// renamed over `path` once fully written.
pub fn save_archive(archive: &Archive, path: &Path) -> Result<()> {
    write_atomic(path, archive_to_string(archive).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| QdError::Io(e.error))?;
    Ok(())
}

pub fn load_archive(path: &Path) -> Result<Archive> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| QdError::Parse {
        offset: e.utf8_error().valid_up_to(),
        message: "archive is not valid UTF-8".into(),
    })?;
    archive_from_str(&text)
}
