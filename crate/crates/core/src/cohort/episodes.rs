use std::borrow::Borrow;

use super::RawNote;

/// Consecutive notes at most this many days apart share an episode.
pub const DEFAULT_GAP_DAYS: i64 = 30;

/// Split one patient's notes into episodes.
///
/// Notes are stably sorted by date first, so same-day notes keep their input
/// order. A new episode starts whenever the gap to the previous note exceeds
/// `gap_days`; a gap of exactly `gap_days` stays within the episode.
pub fn segment_episodes<N: Borrow<RawNote>>(mut notes: Vec<N>, gap_days: i64) -> Vec<Vec<N>> {
    notes.sort_by_key(|n| n.borrow().timestamp);
    let mut episodes: Vec<Vec<N>> = Vec::new();
    for note in notes {
        let starts_new = match episodes.last().and_then(|e| e.last()) {
            Some(prev) => (note.borrow().timestamp - prev.borrow().timestamp).num_days() > gap_days,
            None => true,
        };
        if starts_new {
            episodes.push(vec![note]);
        } else if let Some(current) = episodes.last_mut() {
            current.push(note);
        }
    }
    episodes
}
