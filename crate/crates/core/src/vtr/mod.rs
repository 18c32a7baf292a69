pub mod bounds;
pub mod function_class;
pub mod history;
pub mod warmup;
pub mod regression;
pub mod learner;
pub mod probe;
