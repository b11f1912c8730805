//! Reference implementations that production code is checked against.
//! Nothing here is used outside of tests.

pub mod dialogs;
pub mod events;
pub mod zeroshot;
