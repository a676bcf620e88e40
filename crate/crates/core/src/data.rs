//! Session logs: grouping raw events into per-user sessions, filtering,
//! the per-user train/test split, and segmentation into next-item examples.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One raw `(user, item, timestamp)` event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    /// Seconds since the epoch.
    pub timestamp: u64,
    /// Explicit session id; overrides gap-based splitting when present.
    pub session_key: Option<String>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: u64) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            timestamp,
            session_key: None,
        }
    }

    pub fn with_session(mut self, key: impl Into<String>) -> Self {
        self.session_key = Some(key.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub user_id: usize,
    /// Item indices in chronological order.
    pub items: Vec<usize>,
    pub start_ts: u64,
    pub split: Split,
}

/// Dense mapping between external keys and indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    keys: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::default()
    }

    /// Index of `key`, assigning the next free index if it is new.
    pub fn intern(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(String::from(key));
        self.index.insert(String::from(key), i);
        i
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, idx: usize) -> &str {
        &self.keys[idx]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn from_keys<I: IntoIterator<Item = S>, S: AsRef<str>>(keys: I) -> Result<Self> {
        let mut v = Vocab::new();
        for k in keys {
            let before = v.len();
            if v.intern(k.as_ref()) != before {
                return Err(Error::invalid(alloc::format!("duplicate vocabulary key {:?}", k.as_ref())));
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionCorpus {
    pub users: Vocab,
    pub items: Vocab,
    /// Indexed by user id; each list is sorted by `start_ts`.
    pub sessions_by_user: Vec<Vec<Session>>,
}

impl SessionCorpus {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions_by_user.iter().flatten()
    }

    pub fn train_sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions().filter(|s| s.split == Split::Train)
    }

    pub fn test_sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions().filter(|s| s.split == Split::Test)
    }

    /// Re-indexes users and items densely over what the sessions still
    /// reference, keeping the previous relative order.
    fn compact(self) -> SessionCorpus {
        let users_kept: Vec<usize> = (0..self.sessions_by_user.len())
            .filter(|&u| !self.sessions_by_user[u].is_empty())
            .collect();
        let items_used: BTreeSet<usize> = self.sessions().flat_map(|s| s.items.iter().copied()).collect();

        let mut users = Vocab::new();
        for &u in &users_kept {
            users.intern(self.users.key(u));
        }
        let mut items = Vocab::new();
        let mut item_map = alloc::vec![usize::MAX; self.items.len()];
        for &i in &items_used {
            item_map[i] = items.intern(self.items.key(i));
        }
        let mut sessions_by_user = Vec::with_capacity(users_kept.len());
        let mut by_user = self.sessions_by_user;
        for (new_u, &old_u) in users_kept.iter().enumerate() {
            let list = core::mem::take(&mut by_user[old_u])
                .into_iter()
                .map(|mut s| {
                    s.user_id = new_u;
                    s.items.iter_mut().for_each(|i| *i = item_map[*i]);
                    s
                })
                .collect();
            sessions_by_user.push(list);
        }
        SessionCorpus {
            users,
            items,
            sessions_by_user,
        }
    }
}

type Stamped<'a> = (u64, usize, usize, Option<&'a str>);

/// Groups events into per-user chronological sessions.
///
/// Events with a session key are grouped by `(user, key)`. Otherwise a new
/// session starts when the gap to the previous event of the same user is
/// strictly greater than `gap_seconds`. Vocabularies are indexed in order of
/// first appearance in `events`.
pub fn sessionize(events: &[Interaction], gap_seconds: u64) -> Result<SessionCorpus> {
    if gap_seconds == 0 {
        return Err(Error::invalid("session gap must be positive"));
    }
    let mut users = Vocab::new();
    let mut items = Vocab::new();
    // (timestamp, input position, item, session key)
    let mut per_user: Vec<Vec<Stamped<'_>>> = Vec::new();
    for (pos, e) in events.iter().enumerate() {
        let u = users.intern(&e.user);
        let i = items.intern(&e.item);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        per_user[u].push((e.timestamp, pos, i, e.session_key.as_deref()));
    }

    let mut sessions_by_user = Vec::with_capacity(per_user.len());
    for (u, mut evs) in per_user.into_iter().enumerate() {
        evs.sort_by_key(|&(ts, pos, _, _)| (ts, pos));
        let mut sessions: Vec<Session> = Vec::new();
        let mut keyed: BTreeMap<&str, usize> = BTreeMap::new();
        let mut last_ts: Option<u64> = None;
        let mut open: Option<usize> = None;
        for (ts, _, item, key) in evs {
            let slot = match key {
                Some(k) => *keyed.entry(k).or_insert_with(|| {
                    sessions.push(Session {
                        user_id: u,
                        items: Vec::new(),
                        start_ts: ts,
                        split: Split::Train,
                    });
                    sessions.len() - 1
                }),
                None => match (open, last_ts) {
                    (Some(s), Some(prev)) if ts - prev <= gap_seconds => s,
                    _ => {
                        sessions.push(Session {
                            user_id: u,
                            items: Vec::new(),
                            start_ts: ts,
                            split: Split::Train,
                        });
                        open = Some(sessions.len() - 1);
                        sessions.len() - 1
                    }
                },
            };
            if key.is_none() {
                last_ts = Some(ts);
            }
            sessions[slot].items.push(item);
        }
        // stable: sessions were opened in timestamp order of their first event
        sessions.sort_by_key(|s| s.start_ts);
        sessions_by_user.push(sessions);
    }
    Ok(SessionCorpus {
        users,
        items,
        sessions_by_user,
    })
}

pub const MIN_SESSION_LEN: usize = 3;
pub const MIN_USER_SESSIONS: usize = 5;

/// Drops sessions shorter than 3 and users with fewer than 5 remaining
/// sessions, repeated until nothing changes, then re-indexes densely.
pub fn filter_corpus(corpus: SessionCorpus) -> Result<SessionCorpus> {
    filter_corpus_with(corpus, MIN_SESSION_LEN, MIN_USER_SESSIONS)
}

pub fn filter_corpus_with(mut corpus: SessionCorpus, min_len: usize, min_sessions: usize) -> Result<SessionCorpus> {
    loop {
        let mut changed = false;
        for list in corpus.sessions_by_user.iter_mut() {
            let before = list.len();
            list.retain(|s| s.items.len() >= min_len);
            changed |= list.len() != before;
            if !list.is_empty() && list.len() < min_sessions {
                list.clear();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let corpus = corpus.compact();
    if corpus.num_users() == 0 {
        return Err(Error::EmptyCorpus(alloc::format!(
            "no user has {min_sessions} or more sessions of length {min_len} or more"
        )));
    }
    Ok(corpus)
}

/// Share of each user's sessions, in percent, that goes to the test split.
pub const TEST_PERCENT: usize = 20;

/// Tags each user's last `ceil(20% · n)` sessions as test.
///
/// Test interactions on items that never occur in a train session are
/// removed, test sessions left with fewer than two items are dropped, and
/// the item vocabulary is re-indexed over what remains.
pub fn split_corpus(corpus: SessionCorpus) -> SessionCorpus {
    split_corpus_with(corpus, TEST_PERCENT)
}

pub fn split_corpus_with(mut corpus: SessionCorpus, test_percent: usize) -> SessionCorpus {
    for list in corpus.sessions_by_user.iter_mut() {
        let n = list.len();
        let n_test = (n * test_percent).div_ceil(100).min(n);
        for (j, s) in list.iter_mut().enumerate() {
            s.split = if j >= n - n_test { Split::Test } else { Split::Train };
        }
    }
    let train_items: BTreeSet<usize> = corpus.train_sessions().flat_map(|s| s.items.iter().copied()).collect();
    for list in corpus.sessions_by_user.iter_mut() {
        for s in list.iter_mut().filter(|s| s.split == Split::Test) {
            s.items.retain(|i| train_items.contains(i));
        }
        list.retain(|s| s.split == Split::Train || s.items.len() >= 2);
    }
    corpus.compact()
}

/// `(user, current-session prefix) → next item`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrainingExample {
    pub user_id: usize,
    pub prefix: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SegmentMode {
    /// One example per session: every item but the last predicts the last.
    LastOnly,
    /// One example per position `t >= 2`.
    #[default]
    AllPrefixes,
}

impl SegmentMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "last-only" => Some(SegmentMode::LastOnly),
            "all-prefixes" => Some(SegmentMode::AllPrefixes),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentMode::LastOnly => "last-only",
            SegmentMode::AllPrefixes => "all-prefixes",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Examples {
    pub train: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
}

/// Next-item examples for one session; sessions shorter than 2 give none.
pub fn session_examples(session: &Session, mode: SegmentMode) -> Vec<TrainingExample> {
    let l = session.items.len();
    if l < 2 {
        return Vec::new();
    }
    let ts: core::ops::RangeInclusive<usize> = match mode {
        SegmentMode::LastOnly => l..=l,
        SegmentMode::AllPrefixes => 2..=l,
    };
    ts.map(|t| TrainingExample {
        user_id: session.user_id,
        prefix: session.items[..t - 1].to_vec(),
        label: session.items[t - 1],
    })
    .collect()
}

/// Train examples follow `mode`; test sessions are always expanded at
/// every position so each next-item event is scored.
pub fn segment_examples(corpus: &SessionCorpus, mode: SegmentMode) -> Examples {
    let mut ex = Examples::default();
    for s in corpus.sessions() {
        match s.split {
            Split::Train => ex.train.extend(session_examples(s, mode)),
            Split::Test => ex.test.extend(session_examples(s, SegmentMode::AllPrefixes)),
        }
    }
    ex
}
