//! Book chapters compiled as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/learning-model.md")]
mod learning_model {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}

#[doc = include_str!("../../../book/src/panel.md")]
mod panel {}

#[doc = include_str!("../../../book/src/group-time.md")]
mod group_time {}

#[doc = include_str!("../../../book/src/aggregation.md")]
mod aggregation {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
