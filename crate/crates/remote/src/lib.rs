//! Network-facing pieces: the chat-completion client used for generation and
//! self-annotation, the scorer-gateway client, and mock servers for both.

pub mod chat;
pub mod direct;
pub mod generate;
pub mod mock;
pub mod pairwise;
pub mod scorer;

pub use chat::{ChatClient, ChatConfig, ChatError};
pub use scorer::{ScorerClient, ScorerConfig, ScorerError};
