//! Every default used by the command line, in one place. Flags override them.

pub const S: f64 = 1.0;
pub const T: f64 = 2.0;
pub const X: f64 = 1.0;
pub const GRID: usize = 128;
pub const PATHS: usize = 100_000;
pub const SEED: u64 = 1;
pub const ALPHA_GRID: &str = "-2,-1,-0.5,0.5,1,2";
pub const MU_GRID: &str = "0,0.5,1,2,4";
pub const Z_GRID: &str = "-3,-2.5,-2,1.5,2,3";
pub const Y_GRID: &str = "-4,-2,-1,-0.5,-0.25,0";
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const INVERSION_ALPHA_MAX: f64 = 1024.0;
pub const INVERSION_TERMS: usize = 1 << 14;
pub const INVERSION_TOL: f64 = 1e-6;
pub const QUADRATURE_ERROR: f64 = 1e-6;

/// `(flag, default, meaning)`, printed by `mmexit defaults`.
pub const TABLE: &[(&str, &str, &str)] = &[
    ("--s", "1", "killing rate"),
    ("--T", "2", "interval length"),
    ("--x", "1", "upper barrier; the interval is (x - T, x)"),
    ("--grid", "128", "cells on [0, T]"),
    ("--paths", "100000", "Monte Carlo replications per starting state"),
    ("--seed", "1", "Monte Carlo seed"),
    ("--alpha", ALPHA_GRID, "frequencies"),
    ("--mu", MU_GRID, "dividend transform arguments"),
    ("--z", Z_GRID, "tail levels"),
    ("--y", Y_GRID, "levels of the post-supremum cdf"),
    ("fixed point tolerance", "1e-12", "positive-factor solve"),
    ("inversion alpha_max", "1024", "frequency cutoff of the half-line inversion"),
    ("inversion terms", "16384", "cosine terms of the half-line inversion"),
    ("inversion tolerance", "1e-6", "accepted folded tail of the inversion"),
    ("quadrature error", "1e-6", "accepted grid-halving error of the interval solve"),
    ("MMEXIT_THREADS", "all cores", "worker threads of the simulator"),
];
