//! HTTP front end for live sessions: JSON endpoints, a server-sent-event view
//! stream per seat, append-only event logs, and a robot client.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{own_history, run_robot, Client, ClientError, RobotPlan};
pub use server::{router, serve, AppState, ServiceConfig};
