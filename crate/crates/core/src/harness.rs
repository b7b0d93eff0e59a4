//! Verification campaign orchestration (stub).
