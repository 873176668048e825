//! Closed-loop steering of catalytic Janus microrobots.
//!
//! The crate contains the simulated plant ([`sim`]), a synthetic camera and
//! blob tracker ([`imaging`]), the field-retargeting and waypoint controllers
//! ([`control`]), a linear coil model ([`coils`]) and the session loop that
//! ties them together ([`session`]), plus the wire types of the live operator
//! protocol ([`protocol`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod coils;
pub mod control;
pub mod geometry;
pub mod imaging;
pub mod sim;
pub mod protocol;
pub mod session;
