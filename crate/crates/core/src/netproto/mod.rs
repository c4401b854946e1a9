//! Wire formats: the binary node-to-node frame codec and the JSON-lines
//! control channel.

mod codec;
pub mod control;

pub use codec::{
    decode, encode, encode_into, FrameDecoder, FrameError, FrameErrorKind, Message, PROTO_VERSION,
};
pub use control::{handle_line, parse_request, Notice, Request};
