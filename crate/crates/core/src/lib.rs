//! Code-to-sequence toolkit: parse MiniJ methods into ASTs, represent each
//! method as a bag of terminal-to-terminal AST paths, and train an
//! attention-based encoder-decoder that generates subtoken sequences such as
//! method names.

pub mod ast;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod minij;
pub mod model;
pub mod numerics;
pub mod paths;
pub mod synth;
pub mod train;
