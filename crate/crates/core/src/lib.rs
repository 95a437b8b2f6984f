pub mod control;
pub mod estimation;
pub mod forces;
pub mod multibody;
pub mod quat;
pub mod sim;
