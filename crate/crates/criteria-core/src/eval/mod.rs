//! The F1/AUC evaluation harness.
