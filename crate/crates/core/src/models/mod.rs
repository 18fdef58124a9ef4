pub mod entry;
pub mod interval;
pub mod location;
