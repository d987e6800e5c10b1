pub mod equivalence;
pub mod invariants;
pub mod oracle;
