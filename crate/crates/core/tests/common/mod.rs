#![allow(dead_code)]

use std::sync::OnceLock;

use wsdirac::ws::{solve_ws, LatticeParams, WsLadder};

pub fn ladder() -> &'static WsLadder {
    static LADDER: OnceLock<WsLadder> = OnceLock::new();
    LADDER.get_or_init(|| solve_ws(&LatticeParams::default()).expect("default lattice solves"))
}

pub fn tb() -> f64 {
    2.0 * std::f64::consts::PI
}
