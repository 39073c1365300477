pub mod ablate;
pub mod classify;
pub mod ensemble;
pub mod evaluate;
pub mod gen_corpus;
pub mod params;
pub mod prepare;
pub mod timing;
pub mod train;
pub mod translate;
