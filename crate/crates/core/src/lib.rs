pub mod augment;
pub mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod models;
pub mod reduce;
pub mod scan;
pub mod sphere;
pub mod support;
