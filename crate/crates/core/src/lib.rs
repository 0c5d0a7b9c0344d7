//! Guardrail-constrained weight selection for additive ranking formulas,
//! estimated offline from logged random pairs.
//!
//! ```
//! use act::domain::{GridSpec, GuardrailConfig, Item, PairDataset, RandomPair, WeightVector};
//! use act::selector::act_select;
//!
//! let item = |id: &str, base: f64, term: f64, label: f64| Item::new(id, base, vec![term], vec![label]);
//! let ds = PairDataset::new(
//!     "demo",
//!     vec!["likes".into()],
//!     vec![
//!         RandomPair { pair_id: "p0".into(), item_a: item("a", 1.0, 0.0, 0.0), item_b: item("b", 0.0, 2.0, 1.0) },
//!         RandomPair { pair_id: "p1".into(), item_a: item("c", 0.5, 1.0, 1.0), item_b: item("d", 0.0, 0.0, 0.0) },
//!     ],
//! );
//! let cfg = GuardrailConfig::new(vec![0.9], vec![vec![0]], vec![GridSpec::new(0, 0.0, 2.0, 0.25)]);
//! let sel = act_select(&ds, &cfg).unwrap();
//! assert!(sel.feasible);
//! assert_eq!(sel.weights, WeightVector::new(vec![0.5]));
//! ```

pub mod analysis;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod pipeline;
pub mod ranking;
pub mod selector;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/export.md")]
    mod export {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
