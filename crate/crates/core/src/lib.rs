//! Simulation library for studying how the composition of design teams
//! affects an engineering organisation's output.
//!
//! The building blocks are layered: [`statechart`] gives agents their
//! behavioural skeleton, [`engine`] supplies the event queue, seeded random
//! streams and message routing, [`agent`] holds attributes and the
//! stimulus/rules/actions loop, and [`design_dept`] wires those into the
//! concrete department model (contracts, support sessions, meetings, cost).
//! On top sit [`experiment`] (replications and confidence intervals) and
//! [`calibration`] (inverse fitting of scenario constants to observed
//! metrics). [`config`] parses and validates the scenario file shared by all
//! entry points.

pub mod agent;
pub mod calibration;
pub mod config;
pub mod design_dept;
pub mod engine;
pub mod experiment;
pub mod statechart;
