pub mod graph_oracle;
pub mod invariants;
