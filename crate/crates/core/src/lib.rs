//! Quality-diversity optimization: archives, emitters, benchmark tasks and
//! the loop that ties them together.
//!
//! ```no_run
//! use qdlab::{algorithms::map_elites_run, config::parse_config_str, exec::Executor};
//!
//! let config = parse_config_str(r#"{
//!     "task": {"name": "rastrigin", "n_params": 10},
//!     "algorithm": {"name": "map_elites"},
//!     "budget": {"total_evaluations": 20000},
//!     "seed": 1}"#).unwrap();
//! let (archive, metrics) = map_elites_run(&config, &Executor::new(4).unwrap()).unwrap();
//! println!("{} cells, qd score {}", archive.n_occupied(), metrics.last().unwrap().qd_score);
//! ```

pub mod algorithms;
pub mod archive_io;
pub mod cli;
pub mod config;
pub mod containers;
pub mod emitters;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod qd;
pub mod rng;
pub mod tasks;
pub mod types;

pub use error::{QdError, Result};
