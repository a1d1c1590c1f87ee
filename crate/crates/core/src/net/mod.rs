//! Vehicle-infrastructure sharing: wire format, transports and the two node roles.

pub mod codec;
pub mod node;
pub mod transport;

pub use codec::{BoxRecord, Payload, PerceptionMessage, WireError};
pub use node::{IngestOutcome, IngestStats, NodeError, ReceiveBuffer, RoadsideNode, VehicleNode, VehiclePerception};
pub use transport::{in_process, udp_loopback, DatagramSink, DatagramSource, SeveredSink, SilentSource, TransportError};
