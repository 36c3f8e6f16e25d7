pub mod codec;
pub mod dut;
pub mod kernel;
pub mod link;
pub mod runner;
pub mod uvm;
pub mod vip;
