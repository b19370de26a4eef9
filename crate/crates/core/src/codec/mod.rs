//! Flat token encoding of dialog sessions.

mod encode;
mod parse;
mod vocab;
mod window;

pub use crate::dialog::{BeliefSlot, DialogAct, DialogSession, Turn};
pub use encode::{encode_session, encode_turn};
pub use parse::{parse_sequence, Diagnostic, ParseMode, ParsedSession};
pub use vocab::{build_vocab, TokenId, Vocabulary, PAD, PAD_ID, UNK, UNK_ID};
pub use window::{split_windows, split_windows_from, TokenWindow, DEFAULT_WINDOW};

pub(crate) use encode::is_bracketed;
pub(crate) use vocab::hex;

#[cfg(test)]
mod tests;
