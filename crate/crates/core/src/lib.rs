//! Deterministic simulator for event-camera space situational awareness.
//!
//! A synthetic high-dynamic-range orbital scene drives a DVS pixel model. An
//! onboard bandwidth monitor decides when the event stream is downlinked over
//! a framed, CRC-protected link to a ground station that accumulates event
//! frames and reconstructs log intensity.
//!
//! Numerical state is generic over [`num::Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type for common use.

pub mod accumulate;
pub mod error;
pub mod event;
pub mod image;
pub mod link;
pub mod metrics;
pub mod monitor;
pub mod num;
pub mod reconstruct;
pub mod scenario;
pub mod scene;
pub mod sensor;
pub mod station;

pub use accumulate::{accumulate, EventFrame};
pub use error::{Error, Result};
pub use event::{Event, Polarity};
pub use image::GrayImage;
pub use link::{decode, encode, Channel, ChannelConfig, DecodeError, EncodeError, Message, MessageReader, Payload};
pub use metrics::{aps_bandwidth, dvs_bandwidth, energy_report, EnergyReport, PowerModel};
pub use monitor::{LinkState, MonitorConfig, MonitorState};
pub use num::Real;
pub use reconstruct::{integrate, tonemap, InitMode, Integrator, LogImage, ReconstructConfig};
pub use scenario::{run_scenario, RunReport, ScenarioConfig};
pub use scene::{build_scene, render_irradiance, Frame, IlluminancePreset, Scene, SceneConfig};
pub use sensor::{aps_capture, init_sensor, ApsConfig, ApsImage, DvsConfig, SensorState};
pub use station::{replay_capture, StationConfig, StationState};

pub type Frame64 = Frame<f64>;
pub type Frame32 = Frame<f32>;
pub type Scene64 = Scene<f64>;
pub type Scene32 = Scene<f32>;
pub type SensorState64 = SensorState<f64>;
pub type SensorState32 = SensorState<f32>;
pub type LogImage64 = LogImage<f64>;
pub type LogImage32 = LogImage<f32>;
pub type Integrator64 = Integrator<f64>;
pub type Integrator32 = Integrator<f32>;
