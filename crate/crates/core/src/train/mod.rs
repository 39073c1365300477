//! Optimization: Adam, the training loop, and fine-tuning.

pub mod adam;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use trainer::{
    average_checkpoints, corpus_perplexity, fine_tune, init_from_checkpoint, train, train_and_average,
    train_with, AveragedOutcome, CheckpointRecord, InitReport, LogEntry, PlateauSchedule,
    ScheduleStep, StopReason, TrainConfig, TrainOutcome,
};
