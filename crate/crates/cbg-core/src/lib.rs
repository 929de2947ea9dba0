//! Modeling, simulation, and optimization of labyrinth circular Bragg
//! grating (CBG) cavities for quantum-dot single-photon sources.
//!
//! The crate is organized around the processing pipeline:
//!
//! - [`geometry`]: parametric device description and rasterization,
//! - [`fdtd`]: 3D Yee-grid time-domain Maxwell solver with CPML boundaries,
//! - [`emission`]: Purcell / upward-efficiency / far-field figures of merit,
//! - [`oracles`]: closed-form references used to judge the solver,
//! - [`optimizer`]: composite cost function and the two-stage PSO + local
//!   refinement pipeline,
//! - [`cli`]: the `cbg` command-line harness.

pub mod cli;
pub mod constants;
pub mod emission;
pub mod fdtd;
pub mod geometry;
pub mod optimizer;
pub mod oracles;
pub mod runner;
