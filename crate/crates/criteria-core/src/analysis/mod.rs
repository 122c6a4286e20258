//! Matrix analyses: correlation clustering, summaries, and audits.
