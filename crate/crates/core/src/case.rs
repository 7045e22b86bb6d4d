//! Case files: TOML descriptions of a floorplan, target, and optimizer
//! settings that drive the command-line runs.
