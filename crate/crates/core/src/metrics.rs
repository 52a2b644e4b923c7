//! QD metrics, 2-D hypervolume and the metrics CSV sink.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::containers::pareto::dominates_unchecked;
use crate::containers::{MoRepertoire, Repertoire};
use crate::error::{invalid, QdError, Result};
use crate::types::MetricsRecord;

pub const METRICS_HEADER: &str = "iteration,evaluations,qd_score,coverage,max_fitness,wall_time_ms";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QdMetrics {
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
}

/// QD score (sum of `fitness - qd_offset`), coverage and max fitness.
pub fn compute_metrics(repertoire: &Repertoire, qd_offset: f64) -> QdMetrics {
    let mut qd_score = 0.0;
    let mut max_fitness: Option<f64> = None;
    for (_, e) in repertoire.iter() {
        qd_score += e.fitness - qd_offset;
        max_fitness = Some(max_fitness.map_or(e.fitness, |m| m.max(e.fitness)));
    }
    QdMetrics {
        qd_score,
        coverage: repertoire.n_occupied() as f64 / repertoire.n_cells() as f64,
        max_fitness,
    }
}

/// Multi-objective archive: QD score is the sum of per-cell hypervolumes
/// against the archive reference point; max fitness is the largest cell hypervolume.
pub fn compute_mome_metrics(repertoire: &MoRepertoire) -> Result<QdMetrics> {
    let mut qd_score = 0.0;
    let mut max_fitness: Option<f64> = None;
    for (_, front) in repertoire.fronts() {
        let points: Vec<&[f64]> = front.iter().map(|m| m.objectives.as_slice()).collect();
        let hv = hypervolume(&points, repertoire.reference())?;
        qd_score += hv;
        max_fitness = Some(max_fitness.map_or(hv, |m| m.max(hv)));
    }
    Ok(QdMetrics {
        qd_score,
        coverage: repertoire.n_occupied() as f64 / repertoire.n_cells() as f64,
        max_fitness,
    })
}

/// Population of objective vectors: hypervolume of its non-dominated subset,
/// the non-dominated fraction, and the best first objective.
pub fn compute_population_metrics<P: AsRef<[f64]>>(objectives: &[P], reference: &[f64]) -> Result<QdMetrics> {
    if objectives.is_empty() {
        return Ok(QdMetrics {
            qd_score: 0.0,
            coverage: 0.0,
            max_fitness: None,
        });
    }
    let front: Vec<&[f64]> = objectives
        .iter()
        .map(|p| p.as_ref())
        .filter(|p| !objectives.iter().any(|q| dominates_unchecked(q.as_ref(), p)))
        .collect();
    let max_fitness = objectives
        .iter()
        .map(|p| p.as_ref()[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(QdMetrics {
        qd_score: hypervolume(&front, reference)?,
        coverage: front.len() as f64 / objectives.len() as f64,
        max_fitness: Some(max_fitness),
    })
}

/// Area dominated by a 2-objective front above `reference` (maximization).
pub fn hypervolume<P: AsRef<[f64]>>(front: &[P], reference: &[f64]) -> Result<f64> {
    if reference.len() != 2 {
        return Err(QdError::UnsupportedDimension(reference.len()));
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(front.len());
    for p in front {
        let p = p.as_ref();
        if p.len() != 2 {
            return Err(QdError::UnsupportedDimension(p.len()));
        }
        if p[0] < reference[0] || p[1] < reference[1] {
            return invalid("front point lies below the reference point");
        }
        pts.push((p[0], p[1]));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut covered_y = reference[1];
    for (x, y) in pts {
        if y > covered_y {
            area += (x - reference[0]) * (y - covered_y);
            covered_y = y;
        }
    }
    Ok(area)
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x}")
}

/// Append-only CSV sink for [`MetricsRecord`]s.
pub struct MetricsCsv<W: Write> {
    out: W,
    header_written: bool,
    record_wall_time: bool,
}

impl<W: Write> MetricsCsv<W> {
    /// `header_written` should be true when the sink already holds a header.
    pub fn new(out: W, header_written: bool, record_wall_time: bool) -> Self {
        Self {
            out,
            header_written,
            record_wall_time,
        }
    }

    /// Writes one row, preceded by the header on the first call for this file.
    /// With wall-time recording off the last column is written as `0` so files
    /// stay byte-identical across machines.
    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{METRICS_HEADER}")?;
            self.header_written = true;
        }
        let wall = if self.record_wall_time {
            format_real(record.wall_time_ms)
        } else {
            "0".to_string()
        };
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            record.iteration,
            record.evaluations,
            format_real(record.qd_score),
            format_real(record.coverage),
            record.max_fitness.map(format_real).unwrap_or_default(),
            wall
        )?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl MetricsCsv<BufWriter<File>> {
    /// Opens `path` for appending; the header is written only if the file is empty.
    pub fn open(path: &Path, record_wall_time: bool) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let has_content = file.metadata()?.len() > 0;
        Ok(Self::new(BufWriter::new(file), has_content, record_wall_time))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{Container, GridSpec};
    use crate::types::ScoringResult;

    fn repertoire_with(fitnesses: &[f64]) -> Repertoire {
        let grid = GridSpec::new(vec![10], vec![0.0], vec![1.0]).unwrap();
        let mut r = Repertoire::new(Container::Grid(grid));
        for (i, f) in fitnesses.iter().enumerate() {
            let s = ScoringResult {
                objectives: vec![*f],
                descriptor: vec![i as f64 / 10.0 + 0.05],
                fitness_gradient: None,
                descriptor_gradients: None,
            };
            r.add(&[0.0], &s).unwrap();
        }
        r
    }

    #[test]
    fn metrics_examples() {
        let r = repertoire_with(&[1.0, 2.0, 3.0]);
        let m = compute_metrics(&r, 0.0);
        assert_eq!(m.qd_score, 6.0);
        assert_eq!(m.max_fitness, Some(3.0));
        assert!((m.coverage - 0.3).abs() < 1e-15);
        assert_eq!(compute_metrics(&r, -1.0).qd_score, 9.0);
        let empty = compute_metrics(&repertoire_with(&[]), 0.0);
        assert_eq!((empty.qd_score, empty.coverage, empty.max_fitness), (0.0, 0.0, None));
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&[[1.0, 1.0]], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&[[2.0, 1.0], [1.0, 2.0]], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(
            hypervolume(&[[2.0, 1.0], [1.0, 2.0], [0.5, 0.5]], &[0.0, 0.0]).unwrap(),
            3.0
        );
        assert!(matches!(
            hypervolume(&[[1.0, 1.0, 1.0]], &[0.0, 0.0, 0.0]),
            Err(QdError::UnsupportedDimension(3))
        ));
        assert!(matches!(
            hypervolume(&[[-1.0, 1.0]], &[0.0, 0.0]),
            Err(QdError::InvalidArgument(_))
        ));
    }

    fn record(i: u64) -> MetricsRecord {
        MetricsRecord {
            iteration: i,
            evaluations: 10 * (i + 1),
            qd_score: 1.5,
            coverage: 0.25,
            max_fitness: Some(-0.1),
            wall_time_ms: 12.5,
        }
    }

    #[test]
    fn csv_header_once_and_rows_in_order() {
        let mut csv = MetricsCsv::new(Vec::new(), false, false);
        csv.append(&record(0)).unwrap();
        csv.append(&record(1)).unwrap();
        let text = String::from_utf8(csv.into_inner()).unwrap();
        assert_eq!(
            text,
            "iteration,evaluations,qd_score,coverage,max_fitness,wall_time_ms\n\
             0,10,1.5,0.25,-0.1,0\n\
             1,20,1.5,0.25,-0.1,0\n"
        );
    }

    #[test]
    fn csv_file_appends_without_second_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        for i in 0..2 {
            let mut csv = MetricsCsv::open(&path, true).unwrap();
            csv.append(&record(i)).unwrap();
            csv.flush().unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("iteration").count(), 1);
        assert!(text.ends_with("1,20,1.5,0.25,-0.1,12.5\n"));
    }
}
