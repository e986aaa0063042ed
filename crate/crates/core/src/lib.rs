//! Programmable memristive threshold-logic cells and the crossbar that hosts
//! them: device models, circuit solving, cell calibration, programming,
//! array evaluation, technology mapping and cost accounting.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod cell;
pub mod devices;
pub mod mapper;
pub mod metrics;
pub mod programmer;
pub mod solver;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Device(#[from] devices::DeviceError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Cell(#[from] cell::CellError),
    #[error(transparent)]
    Program(#[from] programmer::ProgramError),
    #[error(transparent)]
    Array(#[from] array::ArrayError),
    #[error(transparent)]
    Map(#[from] mapper::MapError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}
