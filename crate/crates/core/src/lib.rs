//! Multifractal detrended fluctuation and cross-correlation analysis
//! (MF-DFA / MF-DXA), DCCA coefficients, mutual information with the global
//! correlation coefficient, and synthetic processes to validate them.
//!
//! The usual path is [`series::profile_of`] → [`fluctuation::fluctuation_surface`]
//! → [`fit::fit_scaling`] → [`spectrum::summarize`]; [`pipeline`] runs the
//! whole thing over a panel and writes CSV reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dcca;
pub mod error;
pub mod fit;
pub mod fluctuation;
pub mod generators;
pub mod mutual_info;
pub mod output;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod series;
pub mod spectrum;

pub use error::{Error, Result};
pub use fit::{fit_scaling, ExponentFit, ScalingFit};
pub use fluctuation::{fluctuation_surface, FluctuationSurface, Mode, QGrid, ScaleGrid};
pub use panel::{load_panel, Panel};
pub use series::{profile_of, MarketClass, Profile, Series};
