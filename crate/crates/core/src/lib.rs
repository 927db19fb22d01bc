//! Rubric-driven grading of short free-text answers.
//!
//! Each rubric point becomes an evaluation question with a gold answer
//! ([`rrag`]). A model backend ([`gateway`]) grades every response against
//! every question with a binary score and a justification ([`grading`]),
//! optionally guided by exemplar responses picked by clustering
//! ([`shots`]). Item grades are combined into weighted final scores
//! ([`scoring`]) and compared with human labels ([`agreement`]).
//!
//! Everything persists in a versioned on-disk [`workspace`]. [`service`]
//! ties the pieces together for the command line ([`cli`]) and the review
//! HTTP API ([`api`]).

pub mod agreement;
pub mod api;
pub mod cli;
pub mod config;
pub mod fixture;
pub mod gateway;
pub mod model;
pub mod rrag;
pub mod text;
pub mod workspace;
pub mod grading;
pub mod scoring;
pub mod service;
pub mod shots;
