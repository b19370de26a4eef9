use serde::{Deserialize, Serialize};

use super::vocab::TokenId;

pub const DEFAULT_WINDOW: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenWindow {
    pub ids: Vec<TokenId>,
    pub source_session: String,
    pub index: usize,
}

/// Greedy left-to-right split into windows of at most `limit` ids.
///
/// # Panics
///
/// Panics if `limit` is zero.
pub fn split_windows(ids: &[TokenId], limit: usize) -> Vec<TokenWindow> {
    split_windows_from(ids, limit, "")
}

pub fn split_windows_from(ids: &[TokenId], limit: usize, source: &str) -> Vec<TokenWindow> {
    assert!(limit >= 1, "window limit must be at least 1");
    ids.chunks(limit)
        .enumerate()
        .map(|(index, chunk)| TokenWindow {
            ids: chunk.to_vec(),
            source_session: source.to_string(),
            index,
        })
        .collect()
}
