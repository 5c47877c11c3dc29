//! Run persistence: JSONL episode traces and binary history snapshots.
//!
//! A trace file starts with one self-describing header line (format tag,
//! generator algorithm, seed, config hash, code version) followed by one JSON
//! object per episode: the start-of-episode value bounds at the initial state
//! and the visited sites. Nothing time-dependent is ever written, so repeated
//! runs produce byte-identical files.
//!
//! A snapshot is a versioned binary file that embeds the game tensors and
//! everything needed to replay certified policies from a finished run: the
//! per-site policy-row logs, the visit-episode lists, and the episode count.
//! Floating-point payloads are stored as raw IEEE-754 bits, so a decode
//! followed by an encode reproduces the file byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{GameError, MarkovGame, Side};
use crate::nash_q::HistoryQ;
use crate::nash_v::HistoryV;

/// Format tag of the JSONL trace header.
pub const TRACE_FORMAT: &str = "nashplay-trace-v1";

/// Magic prefix of snapshot files (doubles as the format version).
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NPSNAP01";

/// Version of this crate, recorded in every output.
pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Hex SHA-256 of a byte string; used to fingerprint configurations.
pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Failures while reading or writing traces and snapshots.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error("embedded game: {0}")]
    Game(#[from] GameError),
}

// ---------------------------------------------------------------------------
// JSONL episode traces
// ---------------------------------------------------------------------------

/// First line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub rng_algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub algorithm: String,
}

/// One episode line: start-of-episode value bounds at the initial state and
/// the sites visited during the episode (`[h, s, a, b]` for cell-keyed
/// learners, `[h, s]` for state-keyed ones), in step order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEpisode {
    pub k: u32,
    pub v_up1: f64,
    pub v_low1: f64,
    pub visited: Vec<Vec<u32>>,
}

/// Episode rows of a Q-learning history, visits keyed `[h, s, a, b]`.
pub fn episode_rows_q(hist: &HistoryQ) -> Vec<TraceEpisode> {
    let episodes = hist.episodes_run() as usize;
    let mut visited: Vec<Vec<Vec<u32>>> = vec![Vec::new(); episodes + 1];
    for h in 0..hist.horizon() {
        for s in 0..hist.states() {
            for a in 0..hist.max_actions() {
                for b in 0..hist.min_actions() {
                    for &e in hist.visit_episodes(h, s, a, b) {
                        visited[e as usize].push(vec![h as u32, s as u32, a as u32, b as u32]);
                    }
                }
            }
        }
    }
    let records = hist.episode_records();
    assert_eq!(records.len(), episodes, "one episode record per episode");
    (1..=episodes)
        .map(|k| TraceEpisode {
            k: k as u32,
            v_up1: records[k - 1].v_up_start,
            v_low1: records[k - 1].v_low_start,
            visited: std::mem::take(&mut visited[k]),
        })
        .collect()
}

/// Episode rows of a V-learning history, visits keyed `[h, s]`.
pub fn episode_rows_v(hist: &HistoryV) -> Vec<TraceEpisode> {
    let episodes = hist.episodes_run() as usize;
    let mut visited: Vec<Vec<Vec<u32>>> = vec![Vec::new(); episodes + 1];
    for h in 0..hist.horizon() {
        for s in 0..hist.states() {
            for &e in hist.visit_episodes(h, s) {
                visited[e as usize].push(vec![h as u32, s as u32]);
            }
        }
    }
    let records = hist.episode_records();
    assert_eq!(records.len(), episodes, "one episode record per episode");
    (1..=episodes)
        .map(|k| TraceEpisode {
            k: k as u32,
            v_up1: records[k - 1].v_up_start,
            v_low1: records[k - 1].v_low_start,
            visited: std::mem::take(&mut visited[k]),
        })
        .collect()
}

/// Writes a header line followed by one line per episode.
pub fn write_trace_jsonl<W: Write>(
    mut w: W,
    header: &TraceHeader,
    episodes: &[TraceEpisode],
) -> Result<(), TraceError> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for episode in episodes {
        serde_json::to_writer(&mut w, episode)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trace written by [`write_trace_jsonl`].
///
/// Evaluation reports appended after the episode lines — objects keyed
/// `"evaluation"` — are tolerated and skipped.
pub fn read_trace_jsonl<R: BufRead>(r: R) -> Result<(TraceHeader, Vec<TraceEpisode>), TraceError> {
    let mut lines = r.lines();
    let head_line = lines.next().ok_or_else(|| TraceError::Format("empty trace file".into()))??;
    let header: TraceHeader = serde_json::from_str(&head_line)?;
    if header.format != TRACE_FORMAT {
        return Err(TraceError::Format(format!("unknown trace format {:?}", header.format)));
    }
    let mut episodes = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&line) {
            if value.as_object().is_some_and(|obj| obj.contains_key("evaluation")) {
                continue;
            }
        }
        episodes.push(serde_json::from_str(&line)?);
    }
    Ok((header, episodes))
}

// ---------------------------------------------------------------------------
// Binary snapshots
// ---------------------------------------------------------------------------

/// Self-description stored inside a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub rng_algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
}

/// The replayable history carried by a snapshot.
pub enum SnapshotHistory {
    NashQ(HistoryQ),
    NashV(HistoryV),
}

impl SnapshotHistory {
    /// The algorithm tag written next to the history.
    pub fn algorithm(&self) -> &'static str {
        match self {
            SnapshotHistory::NashQ(_) => "nash_q",
            SnapshotHistory::NashV(_) => "nash_v",
        }
    }
}

/// A finished run: header, the exact game, and the replayable history.
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub game: MarkovGame,
    pub history: SnapshotHistory,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, data: &[u8]) {
    put_u32(out, data.len() as u32);
    out.extend_from_slice(data);
}

fn put_rows<'a>(out: &mut Vec<u8>, width: usize, log: impl Iterator<Item = (u32, &'a [f64])>) {
    // The initial uniform row at episode 0 is implied by construction; only
    // recorded rows are written.
    let rows: Vec<(u32, &[f64])> = log.skip(1).collect();
    put_u32(out, rows.len() as u32);
    for (episode, row) in rows {
        assert_eq!(row.len(), width);
        put_u32(out, episode);
        for &v in row {
            put_f64(out, v);
        }
    }
}

fn put_visits(out: &mut Vec<u8>, visits: &[u32]) {
    put_u32(out, visits.len() as u32);
    for &e in visits {
        put_u32(out, e);
    }
}

/// Encodes a snapshot; decoding and re-encoding reproduces the bytes.
pub fn snapshot_to_bytes(snapshot: &Snapshot) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    put_block(&mut out, &serde_json::to_vec(&snapshot.header).expect("header serializes"));
    put_block(&mut out, snapshot.game.to_json().as_bytes());
    match &snapshot.history {
        SnapshotHistory::NashQ(hist) => {
            out.push(0);
            put_u32(&mut out, hist.horizon() as u32);
            put_u32(&mut out, hist.states() as u32);
            put_u32(&mut out, hist.max_actions() as u32);
            put_u32(&mut out, hist.min_actions() as u32);
            put_u32(&mut out, hist.episodes_run());
            let width = hist.max_actions() * hist.min_actions();
            for h in 0..hist.horizon() {
                for s in 0..hist.states() {
                    put_rows(&mut out, width, hist.policy_log(h, s));
                }
            }
            for h in 0..hist.horizon() {
                for s in 0..hist.states() {
                    for a in 0..hist.max_actions() {
                        for b in 0..hist.min_actions() {
                            put_visits(&mut out, hist.visit_episodes(h, s, a, b));
                        }
                    }
                }
            }
        }
        SnapshotHistory::NashV(hist) => {
            out.push(1);
            put_u32(&mut out, hist.horizon() as u32);
            put_u32(&mut out, hist.states() as u32);
            put_u32(&mut out, hist.max_actions() as u32);
            put_u32(&mut out, hist.min_actions() as u32);
            put_u32(&mut out, hist.episodes_run());
            for (side, width) in [(Side::Max, hist.max_actions()), (Side::Min, hist.min_actions())]
            {
                for h in 0..hist.horizon() {
                    for s in 0..hist.states() {
                        put_rows(&mut out, width, hist.policy_log(side, h, s));
                    }
                }
            }
            for h in 0..hist.horizon() {
                for s in 0..hist.states() {
                    put_visits(&mut out, hist.visit_episodes(h, s));
                }
            }
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceError> {
        if self.pos + n > self.data.len() {
            return Err(TraceError::Format("snapshot truncated".into()));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TraceError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take(8)?.try_into().unwrap())))
    }

    fn block(&mut self) -> Result<&'a [u8], TraceError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

fn read_rows(cur: &mut Cursor<'_>, width: usize) -> Result<Vec<(u32, Vec<f64>)>, TraceError> {
    let count = cur.u32()? as usize;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let episode = cur.u32()?;
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            row.push(cur.f64()?);
        }
        rows.push((episode, row));
    }
    Ok(rows)
}

fn read_visits(cur: &mut Cursor<'_>) -> Result<Vec<u32>, TraceError> {
    let count = cur.u32()? as usize;
    let mut visits = Vec::with_capacity(count);
    for _ in 0..count {
        visits.push(cur.u32()?);
    }
    Ok(visits)
}

/// Decodes a snapshot produced by [`snapshot_to_bytes`].
pub fn snapshot_from_bytes(data: &[u8]) -> Result<Snapshot, TraceError> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
        return Err(TraceError::Format("not a snapshot file (bad magic)".into()));
    }
    let header: SnapshotHeader = serde_json::from_slice(cur.block()?)?;
    let game_json = std::str::from_utf8(cur.block()?)
        .map_err(|_| TraceError::Format("game payload is not UTF-8".into()))?;
    let game = MarkovGame::from_json(game_json)?;
    let algo = cur.u8()?;
    let horizon = cur.u32()? as usize;
    let states = cur.u32()? as usize;
    let max_actions = cur.u32()? as usize;
    let min_actions = cur.u32()? as usize;
    let episodes_run = cur.u32()?;
    let history = match algo {
        0 => {
            let mut hist =
                HistoryQ::with_uniform_policies(horizon, states, max_actions, min_actions);
            let width = max_actions * min_actions;
            for h in 0..horizon {
                for s in 0..states {
                    for (episode, row) in read_rows(&mut cur, width)? {
                        hist.record_policy_row(h, s, episode, row);
                    }
                }
            }
            for h in 0..horizon {
                for s in 0..states {
                    for a in 0..max_actions {
                        for b in 0..min_actions {
                            for episode in read_visits(&mut cur)? {
                                hist.record_visit(h, s, a, b, episode);
                            }
                        }
                    }
                }
            }
            hist.set_episodes_run(episodes_run);
            SnapshotHistory::NashQ(hist)
        }
        1 => {
            let mut hist =
                HistoryV::with_uniform_policies(horizon, states, max_actions, min_actions);
            for (side, width) in [(Side::Max, max_actions), (Side::Min, min_actions)] {
                for h in 0..horizon {
                    for s in 0..states {
                        for (episode, row) in read_rows(&mut cur, width)? {
                            hist.record_policy_row(side, h, s, episode, row);
                        }
                    }
                }
            }
            for h in 0..horizon {
                for s in 0..states {
                    for episode in read_visits(&mut cur)? {
                        hist.record_visit(h, s, episode);
                    }
                }
            }
            hist.set_episodes_run(episodes_run);
            SnapshotHistory::NashV(hist)
        }
        other => return Err(TraceError::Format(format!("unknown history kind {other}"))),
    };
    if !cur.done() {
        return Err(TraceError::Format("trailing bytes after snapshot payload".into()));
    }
    Ok(Snapshot { header, game, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::make_random_game;
    use crate::nash_q::{run_nash_q, RunOptions as QRunOptions};
    use crate::nash_v::{run_nash_v, RunOptions as VRunOptions};
    use crate::rng::{RngStream, RNG_ALGORITHM};
    use crate::schedules::{Hyperparams, IotaTotal, DEFAULT_C, DEFAULT_P};

    fn sample_header(algorithm: &str) -> TraceHeader {
        TraceHeader {
            format: TRACE_FORMAT.to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: 7,
            config_hash: sha256_hex(b"config"),
            code_version: code_version().to_string(),
            algorithm: algorithm.to_string(),
        }
    }

    #[test]
    fn trace_files_round_trip() {
        let mut seed = RngStream::from_seed(1);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let hp = Hyperparams::for_game(
            2,
            2,
            2,
            2,
            12,
            DEFAULT_C,
            DEFAULT_P,
            IotaTotal::EpisodesTimesHorizon,
        );
        let mut rng = RngStream::from_seed(2);
        let hist = run_nash_q(&game, 12, &hp, &QRunOptions::default(), &mut rng);

        let header = sample_header("nash_q");
        let episodes = episode_rows_q(&hist);
        assert_eq!(episodes.len(), 12);
        for row in &episodes {
            assert_eq!(row.visited.len(), 2, "one visited cell per step");
            assert_eq!(row.visited[0][0], 0, "visits are in step order");
            assert_eq!(row.visited[1][0], 1);
        }

        let mut buffer = Vec::new();
        write_trace_jsonl(&mut buffer, &header, &episodes).unwrap();
        let (header2, episodes2) = read_trace_jsonl(buffer.as_slice()).unwrap();
        assert_eq!(header, header2);
        assert_eq!(episodes, episodes2);

        let mut buffer2 = Vec::new();
        write_trace_jsonl(&mut buffer2, &header2, &episodes2).unwrap();
        assert_eq!(buffer, buffer2, "re-serialization is byte-identical");
    }

    #[test]
    fn appended_evaluation_lines_are_skipped() {
        let header = sample_header("nash_q");
        let episodes =
            vec![TraceEpisode { k: 1, v_up1: 2.0, v_low1: 0.0, visited: vec![vec![0, 0, 1, 1]] }];
        let mut buffer = Vec::new();
        write_trace_jsonl(&mut buffer, &header, &episodes).unwrap();
        buffer.extend_from_slice(b"{\"evaluation\":{\"exploitability\":0.25}}\n");
        let (_, episodes2) = read_trace_jsonl(buffer.as_slice()).unwrap();
        assert_eq!(episodes, episodes2);

        buffer.extend_from_slice(b"{\"not\":\"an episode\"}\n");
        assert!(read_trace_jsonl(buffer.as_slice()).is_err(), "corrupt lines still error");
    }

    #[test]
    fn episode_rows_match_recorded_start_values() {
        let mut seed = RngStream::from_seed(8);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let hp = Hyperparams::for_game(
            2,
            2,
            2,
            2,
            10,
            DEFAULT_C,
            DEFAULT_P,
            IotaTotal::EpisodesTimesHorizon,
        );
        let rng = RngStream::from_seed(9);
        let hist = run_nash_v(&game, 10, &hp, &VRunOptions::default(), &rng);
        let rows = episode_rows_v(&hist);
        for (row, record) in rows.iter().zip(hist.episode_records()) {
            assert_eq!(row.v_up1, record.v_up_start);
            assert_eq!(row.v_low1, record.v_low_start);
            assert_eq!(row.visited.len(), 2);
        }
    }

    #[test]
    fn snapshots_round_trip_byte_for_byte() {
        let mut seed = RngStream::from_seed(3);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let hp = Hyperparams::for_game(
            2,
            2,
            2,
            2,
            15,
            DEFAULT_C,
            DEFAULT_P,
            IotaTotal::EpisodesTimesHorizon,
        );

        let mut q_rng = RngStream::from_seed(4);
        let q_hist = run_nash_q(&game, 15, &hp, &QRunOptions::default(), &mut q_rng);
        let v_rng = RngStream::from_seed(5);
        let v_hist = run_nash_v(&game, 15, &hp, &VRunOptions::default(), &v_rng);

        for history in [SnapshotHistory::NashQ(q_hist), SnapshotHistory::NashV(v_hist)] {
            let snapshot = Snapshot {
                header: SnapshotHeader {
                    rng_algorithm: RNG_ALGORITHM.to_string(),
                    seed: 4,
                    config_hash: sha256_hex(b"snapshot-test"),
                    code_version: code_version().to_string(),
                },
                game: game.clone(),
                history,
            };
            let bytes = snapshot_to_bytes(&snapshot);
            let loaded = snapshot_from_bytes(&bytes).unwrap();
            assert_eq!(loaded.header, snapshot.header);
            assert_eq!(loaded.game.to_json(), snapshot.game.to_json());
            assert_eq!(snapshot_to_bytes(&loaded), bytes, "decode/encode is the identity");
        }
    }

    #[test]
    fn reloaded_histories_replay_the_same_rows() {
        let mut seed = RngStream::from_seed(13);
        let game = make_random_game(3, 2, 2, 2, &mut seed);
        let hp = Hyperparams::for_game(
            3,
            2,
            2,
            2,
            20,
            DEFAULT_C,
            DEFAULT_P,
            IotaTotal::EpisodesTimesHorizon,
        );
        let mut rng = RngStream::from_seed(14);
        let hist = run_nash_q(&game, 20, &hp, &QRunOptions::default(), &mut rng);
        let snapshot = Snapshot {
            header: SnapshotHeader {
                rng_algorithm: RNG_ALGORITHM.to_string(),
                seed: 14,
                config_hash: sha256_hex(b"replay-test"),
                code_version: code_version().to_string(),
            },
            game: game.clone(),
            history: SnapshotHistory::NashQ(hist),
        };
        let bytes = snapshot_to_bytes(&snapshot);
        let loaded = snapshot_from_bytes(&bytes).unwrap();
        let SnapshotHistory::NashQ(original) = &snapshot.history else { unreachable!() };
        let SnapshotHistory::NashQ(reloaded) = &loaded.history else {
            panic!("algorithm tag changed across the round trip")
        };
        assert_eq!(original.episodes_run(), reloaded.episodes_run());
        for h in 0..3 {
            for s in 0..2 {
                for k in 1..=20 {
                    assert_eq!(original.policy_row_at(h, s, k), reloaded.policy_row_at(h, s, k));
                }
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(
                            original.visit_episodes(h, s, a, b),
                            reloaded.visit_episodes(h, s, a, b)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        let mut seed = RngStream::from_seed(21);
        let game = make_random_game(1, 1, 1, 1, &mut seed);
        let mut hist = HistoryQ::with_uniform_policies(1, 1, 1, 1);
        hist.set_episodes_run(1);
        let snapshot = Snapshot {
            header: SnapshotHeader {
                rng_algorithm: RNG_ALGORITHM.to_string(),
                seed: 0,
                config_hash: String::new(),
                code_version: code_version().to_string(),
            },
            game,
            history: SnapshotHistory::NashQ(hist),
        };
        let mut bytes = snapshot_to_bytes(&snapshot);
        assert!(matches!(
            snapshot_from_bytes(&bytes[..bytes.len() - 1]),
            Err(TraceError::Format(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(snapshot_from_bytes(&bytes), Err(TraceError::Format(_))));
        assert!(matches!(snapshot_from_bytes(b"NPSNAP01"), Err(TraceError::Format(_))));
    }
}
