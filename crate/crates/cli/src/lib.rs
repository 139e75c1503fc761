//! Command-line front end for the `beamcausal` pipeline.
//!
//! Stages hand files to each other through one output directory:
//!
//! | stage      | reads                               | writes                    |
//! |------------|-------------------------------------|---------------------------|
//! | `gen`      |                                     | `dataset.txt`             |
//! | `discover` | `dataset.txt`                       | `graph.txt`               |
//! | `select`   | `dataset.txt`, `graph.txt` (causal) | `selection.txt`           |
//! | `train`    | `dataset.txt`, `selection.txt`      | `model.txt`               |
//! | `eval`     | the three above                     | `eval.csv`, `eval.json`   |
//! | `bench`    | `dataset.txt`                       | `bench.csv`, `bench.json` |
//!
//! Every stage also writes `<stage>.manifest.json` with the full config echo,
//! the seed and SHA-256 digests of its inputs and outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, run_bench, Stage};
pub use config::{load, Profile, RunConfig, ENV_PREFIX};
pub use error::{exit, CliError, CliResult};
