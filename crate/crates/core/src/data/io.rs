use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, InteractionDataset};

/// On-disk layout of an interaction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `user item item ...`, one line per user.
    #[default]
    Adjlist,
    /// `user<TAB>item`, one line per interaction.
    Pairs,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adjlist" => Ok(DataFormat::Adjlist),
            "pairs" => Ok(DataFormat::Pairs),
            other => Err(format!("unknown data format `{other}` (expected adjlist or pairs)")),
        }
    }
}

/// Train and test file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedDataset {
    pub train: String,
    pub test: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    users: usize,
    items: usize,
}

struct ParsedFile {
    header: Option<Header>,
    /// (line number, user, item)
    entries: Vec<(usize, usize, usize)>,
    /// Users that appear on a line, even with no items.
    users_seen: Vec<usize>,
}

fn parse_header(line: &str, file: &'static str, lineno: usize) -> Result<Header, DataError> {
    let malformed = |message: String| DataError::Malformed {
        file,
        line: lineno,
        message,
    };
    let body = line.trim_start_matches('#');
    let mut users = None;
    let mut items = None;
    for field in body.split_ascii_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(format!("bad header field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| malformed(format!("bad header value `{value}`")))?;
        match key {
            "users" => users = Some(value),
            "items" => items = Some(value),
            _ => return Err(malformed(format!("unknown header key `{key}`"))),
        }
    }
    match (users, items) {
        (Some(users), Some(items)) => Ok(Header { users, items }),
        _ => Err(malformed("header must be `#users=M items=N`".into())),
    }
}

fn parse_file(text: &str, format: DataFormat, file: &'static str) -> Result<ParsedFile, DataError> {
    let mut header = None;
    let mut entries = Vec::new();
    let mut users_seen = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') {
            if idx != 0 {
                return Err(DataError::Malformed {
                    file,
                    line: lineno,
                    message: "header is only allowed on the first line".into(),
                });
            }
            header = Some(parse_header(line, file, lineno)?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut ids = Vec::new();
        for tok in line.split_ascii_whitespace() {
            let id: usize = tok.parse().map_err(|_| DataError::Malformed {
                file,
                line: lineno,
                message: format!("expected a non-negative integer, found `{tok}`"),
            })?;
            ids.push(id);
        }
        let user = ids[0];
        match format {
            DataFormat::Adjlist => {
                users_seen.push(user);
                entries.extend(ids[1..].iter().map(|&i| (lineno, user, i)));
            }
            DataFormat::Pairs => {
                if ids.len() != 2 {
                    return Err(DataError::Malformed {
                        file,
                        line: lineno,
                        message: format!("expected `user<TAB>item`, found {} fields", ids.len()),
                    });
                }
                users_seen.push(user);
                entries.push((lineno, user, ids[1]));
            }
        }
    }
    Ok(ParsedFile {
        header,
        entries,
        users_seen,
    })
}

/// Parses train and test file contents into a validated dataset.
///
/// Without a `#users=M items=N` header, the dimensions are one past the
/// largest id seen in either file.
pub fn parse_interactions(
    train_text: &str,
    test_text: &str,
    format: DataFormat,
) -> Result<InteractionDataset, DataError> {
    let train = parse_file(train_text, format, "train")?;
    let test = parse_file(test_text, format, "test")?;

    let header = match (train.header, test.header) {
        (Some(a), Some(b)) if a != b => {
            return Err(DataError::HeaderConflict(format!(
                "train says users={} items={}, test says users={} items={}",
                a.users, a.items, b.users, b.items
            )))
        }
        (a, b) => a.or(b),
    };

    let (num_users, num_items) = match header {
        Some(h) => (h.users, h.items),
        None => {
            let max_user = train
                .users_seen
                .iter()
                .chain(&test.users_seen)
                .max()
                .map_or(0, |u| u + 1);
            let max_item = train
                .entries
                .iter()
                .chain(&test.entries)
                .map(|e| e.2 + 1)
                .max()
                .unwrap_or(0);
            (max_user, max_item)
        }
    };

    let mut lists = Vec::with_capacity(2);
    for (file, parsed) in [("train", &train), ("test", &test)] {
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); num_users];
        let mut seen = HashSet::new();
        for &user in &parsed.users_seen {
            if user >= num_users {
                let line = parsed.entries.iter().find(|e| e.1 == user).map_or(0, |e| e.0);
                return Err(DataError::OutOfRange {
                    file,
                    line,
                    kind: "user",
                    id: user,
                    limit: num_users,
                });
            }
        }
        for &(line, user, item) in &parsed.entries {
            if item >= num_items {
                return Err(DataError::OutOfRange {
                    file,
                    line,
                    kind: "item",
                    id: item,
                    limit: num_items,
                });
            }
            if !seen.insert((user, item)) {
                return Err(DataError::Duplicate {
                    file,
                    line,
                    user,
                    item,
                });
            }
            per_user[user].push(item);
        }
        lists.push(per_user);
    }
    let test_lists = lists.pop().unwrap();
    let train_lists = lists.pop().unwrap();
    InteractionDataset::new(num_users, num_items, train_lists, test_lists)
}

/// Reads and parses a train/test file pair.
pub fn load_interactions(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    format: DataFormat,
) -> Result<InteractionDataset, DataError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| DataError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let train = read(train_path.as_ref())?;
    let test = read(test_path.as_ref())?;
    parse_interactions(&train, &test, format)
}

impl InteractionDataset {
    fn header_line(&self) -> String {
        format!("#users={} items={}\n", self.num_users, self.num_items)
    }

    /// Adjacency-list serialization with an explicit header; every user gets
    /// a line so that reloading reproduces the dataset exactly.
    pub fn to_adjlist(&self) -> SerializedDataset {
        let render = |lists: &[Vec<usize>]| {
            let mut out = self.header_line();
            for (u, items) in lists.iter().enumerate() {
                write!(out, "{u}").unwrap();
                for i in items {
                    write!(out, " {i}").unwrap();
                }
                out.push('\n');
            }
            out
        };
        SerializedDataset {
            train: render(&self.train),
            test: render(&self.test),
        }
    }

    pub fn to_pairs(&self) -> SerializedDataset {
        let render = |lists: &[Vec<usize>]| {
            let mut out = self.header_line();
            for (u, items) in lists.iter().enumerate() {
                for i in items {
                    writeln!(out, "{u}\t{i}").unwrap();
                }
            }
            out
        };
        SerializedDataset {
            train: render(&self.train),
            test: render(&self.test),
        }
    }

    pub fn serialize(&self, format: DataFormat) -> SerializedDataset {
        match format {
            DataFormat::Adjlist => self.to_adjlist(),
            DataFormat::Pairs => self.to_pairs(),
        }
    }
}
