//! Core algorithms for a track-extraction pre-processing pipeline.
//!
//! Everything in this crate is deterministic and allocation-only: "runtime"
//! is simulated through an explicit cost model, frames come from a synthetic
//! scene generator, and all randomness is derived from explicit seeds. The
//! companion CLI crate adds file formats, parallelism and the command-line
//! driver on top.
//!
//! The pipeline stages, bottom to top:
//!
//! * [`geometry`] - boxes, tracks, cell grids and resampling primitives.
//! * [`cost`] - the table-driven cost model behind every time estimate.
//! * [`sim`] - synthetic scenes plus simulated detector and proxy models.
//! * [`windows`] - grouping positive proxy cells into detector windows and
//!   selecting the fixed window-size set.
//! * [`tracker`] - reduced-rate multi-object tracking with a trainable
//!   match scorer and a heuristic overlap tracker.
//! * [`refine`] - track endpoint refinement from clustered reference tracks.
//! * [`metrics`] - count accuracy against spatial patterns and limit queries.
//! * [`pipeline`] - per-clip composition of the above with time accounting.
//! * [`tuner`] - best-accuracy configuration search, caching, and the greedy
//!   speed/accuracy tuning loop.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cost;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod sim;
pub mod tracker;
pub mod tuner;
pub mod windows;
