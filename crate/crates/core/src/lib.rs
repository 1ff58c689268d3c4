pub mod analytics;
pub mod channel_plan;
pub mod frame_codec;
pub mod radio_sim;
pub mod scanner;
pub mod harness;
