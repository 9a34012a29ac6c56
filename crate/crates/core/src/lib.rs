//! Hybrid human/AGV warehouse order-picking simulation with neural approximate
//! dynamic programming for per-epoch task allocation.

pub mod allocation;
pub mod fleet;
pub mod grid;
pub mod menu;
pub mod net;
pub mod neuradp;
pub mod orders;
pub mod policies;
pub mod routing;
pub mod sim;
