//! Text formats: header-less workload CSV, `key = value` files with
//! `[section]` headers for clusters and scenarios, and schedule output.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::global::{ClusterSpec, GlobalSchedule, Link, MachineSpec};
use crate::local::{ImageJob, MachineId, Schedule, WorkloadInstance};
use crate::scalar::{parse_decimal, Scalar};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses `id,T,R,size,ram,priority,origin` lines. Times are decimal
/// milliseconds; `priority` is `0`/`1` (or `false`/`true`); blank lines and
/// `#` comments are skipped. Only `id,T,R` are required.
pub fn parse_workload_csv<S: Scalar>(text: &str, path: &Path) -> Result<WorkloadInstance<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut images = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < 3 || rec.len() > 7 {
            return Err(parse_err(path, line, format!("expected 3 to 7 fields, found {}", rec.len())));
        }
        let num = |k: usize, name: &str| -> Result<S> {
            parse_decimal(&rec[k]).ok_or_else(|| parse_err(path, line, format!("{name}: not a decimal `{}`", &rec[k])))
        };
        let id: u32 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("id: not an integer `{}`", &rec[0])))?;
        let mut job = ImageJob::new(id, num(1, "T")?, num(2, "R")?);
        if rec.len() > 3 && !rec[3].is_empty() {
            job.size = num(3, "size")?;
        }
        if rec.len() > 4 && !rec[4].is_empty() {
            job.ram_need = num(4, "ram")?;
        }
        if rec.len() > 5 && !rec[5].is_empty() {
            job.priority = parse_bool(&rec[5]).ok_or_else(|| parse_err(path, line, format!("priority: expected 0 or 1, found `{}`", &rec[5])))?;
        }
        if rec.len() > 6 && !rec[6].is_empty() {
            job.origin_machine = rec[6]
                .parse()
                .map_err(|_| parse_err(path, line, format!("origin: not an integer `{}`", &rec[6])))?;
        }
        images.push(job);
    }
    let w = WorkloadInstance::new(images);
    w.validate().map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(w)
}

pub fn read_workload_csv<S: Scalar>(path: &Path) -> Result<WorkloadInstance<S>> {
    parse_workload_csv(&read_text(path)?, path)
}

pub fn write_workload_csv<S: Scalar>(w: &WorkloadInstance<S>) -> String {
    let mut out = String::new();
    for im in &w.images {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            im.id,
            im.analysis_time.to_plain_string(),
            im.deadline.to_plain_string(),
            im.size.to_plain_string(),
            im.ram_need.to_plain_string(),
            im.priority as u8,
            im.origin_machine
        );
    }
    out
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// One `[name]` block of a `key = value` file. Entries before the first
/// header land in a section with an empty name.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub line: usize,
    entries: Vec<(String, String, usize)>,
    path: PathBuf,
}

pub fn parse_sections(text: &str, path: &Path) -> Result<Vec<Section>> {
    let mut out = vec![Section {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
        path: path.to_path_buf(),
    }];
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(path, line, "unterminated section header"))?;
            let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
            if name.is_empty() {
                return Err(parse_err(path, line, "empty section name"));
            }
            out.push(Section {
                name,
                line,
                entries: Vec::new(),
                path: path.to_path_buf(),
            });
            continue;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| parse_err(path, line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(parse_err(path, line, "empty key"));
        }
        let sec = out.last_mut().unwrap();
        if sec.entries.iter().any(|(k, _, _)| *k == key) {
            return Err(parse_err(path, line, format!("duplicate key `{key}`")));
        }
        sec.entries.push((key, value.trim().to_string(), line));
    }
    Ok(out)
}

impl Section {
    fn entry(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        parse_err(&self.path, line, msg)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, _, l) in &self.entries {
            if !known.contains(&k.as_str()) {
                let sec = if self.name.is_empty() { "top level".to_string() } else { format!("[{}]", self.name) };
                return Err(self.err(*l, format!("unknown key `{k}` in {sec}")));
            }
        }
        Ok(())
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|(v, _)| v)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.text(key).ok_or_else(|| {
            self.err(self.line.max(1), format!("missing key `{key}` in [{}]", self.name))
        })
    }

    pub fn decimal<S: Scalar>(&self, key: &str) -> Result<Option<S>> {
        match self.entry(key) {
            None => Ok(None),
            Some((v, l)) => parse_decimal(v)
                .map(Some)
                .ok_or_else(|| self.err(l, format!("{key}: not a decimal `{v}`"))),
        }
    }

    /// A decimal that must be `>= 0` (or `> 0` when `strict`).
    pub fn nonneg<S: Scalar>(&self, key: &str, strict: bool) -> Result<Option<S>> {
        let v = self.decimal::<S>(key)?;
        if let Some(x) = &v {
            let ok = if strict { x.is_positive() } else { !x.is_negative() };
            if !ok {
                let line = self.entry(key).map(|(_, l)| l).unwrap_or(0);
                let rel = if strict { "> 0" } else { ">= 0" };
                return Err(self.err(line, format!("{key} must be {rel}")));
            }
        }
        Ok(v)
    }

    pub fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(l, format!("{key}: not a non-negative integer `{v}`"))),
        }
    }

    pub fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.entry(key) {
            None => Ok(None),
            Some((v, l)) => parse_bool(v)
                .map(Some)
                .ok_or_else(|| self.err(l, format!("{key}: expected true or false, found `{v}`"))),
        }
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entry(key).map(|(_, l)| l).unwrap_or(self.line)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn parse_link<S: Scalar>(sec: &Section, key: &str) -> Result<Option<Link<S>>> {
    match sec.text(key) {
        None => Ok(None),
        Some(v) if v.eq_ignore_ascii_case("inf") => Ok(Some(Link::Infinite)),
        Some(_) => Ok(sec.nonneg::<S>(key, true)?.map(Link::Rate)),
    }
}

/// Cluster file:
///
/// ```text
/// default_bandwidth = 2      # size units per ms, or `inf`; omit for none
/// [machine 1]
/// cores = 2
/// energy_per_ms = 1
/// energy_budget = 500
/// ram = 64
/// slots_per_core = 8
/// [link 1 2]
/// bandwidth = 4
/// ```
pub fn parse_cluster<S: Scalar>(text: &str, path: &Path) -> Result<ClusterSpec<S>> {
    let sections = parse_sections(text, path)?;
    let mut machines = Vec::new();
    let mut links = Vec::new();
    let mut default_link = None;
    for sec in &sections {
        let words: Vec<&str> = sec.name.split(' ').collect();
        match words.as_slice() {
            [""] => {
                sec.reject_unknown(&["default_bandwidth"])?;
                default_link = parse_link::<S>(sec, "default_bandwidth")?;
            }
            ["machine", id] => {
                let id: MachineId = id
                    .parse()
                    .ok()
                    .filter(|&i| i > 0)
                    .ok_or_else(|| parse_err(path, sec.line, format!("machine id must be a positive integer, found `{id}`")))?;
                sec.reject_unknown(&["cores", "energy_per_ms", "energy_budget", "ram", "slots_per_core"])?;
                let mut m = MachineSpec::<S>::unconstrained(id);
                if let Some(c) = sec.integer::<usize>("cores")? {
                    if c == 0 {
                        return Err(parse_err(path, sec.line_of("cores"), "cores must be >= 1"));
                    }
                    m.cores = c;
                }
                if let Some(e) = sec.nonneg("energy_per_ms", false)? {
                    m.energy_per_time = e;
                }
                if let Some(e) = sec.nonneg("energy_budget", false)? {
                    m.energy_budget = e;
                }
                if let Some(r) = sec.nonneg("ram", false)? {
                    m.ram_capacity = r;
                }
                m.slots_per_core = sec.integer::<usize>("slots_per_core")?;
                machines.push((m, sec.line));
            }
            ["link", a, b] => {
                let parse_id = |s: &str| {
                    s.parse::<MachineId>()
                        .map_err(|_| parse_err(path, sec.line, format!("bad machine id `{s}` in link header")))
                };
                let (a, b) = (parse_id(a)?, parse_id(b)?);
                sec.reject_unknown(&["bandwidth"])?;
                let link = parse_link::<S>(sec, "bandwidth")?
                    .ok_or_else(|| parse_err(path, sec.line, "link needs `bandwidth`"))?;
                links.push((a, b, link, sec.line));
            }
            _ => {
                return Err(parse_err(
                    path,
                    sec.line,
                    format!("unknown section [{}]; expected [machine <id>] or [link <a> <b>]", sec.name),
                ))
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (m, line) in &machines {
        if !seen.insert(m.id) {
            return Err(parse_err(path, *line, format!("duplicate machine {}", m.id)));
        }
    }
    let mut cluster = ClusterSpec::new(machines.into_iter().map(|(m, _)| m).collect());
    cluster.default_link = default_link;
    for (a, b, link, line) in links {
        if !seen.contains(&a) || !seen.contains(&b) {
            return Err(parse_err(path, line, format!("link {a} {b} names an unknown machine")));
        }
        cluster = cluster.with_link(a, b, link);
    }
    cluster.validate().map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(cluster)
}

pub fn read_cluster<S: Scalar>(path: &Path) -> Result<ClusterSpec<S>> {
    parse_cluster(&read_text(path)?, path)
}

fn dropped_line(dropped: &BTreeSet<u32>) -> String {
    let ids: Vec<String> = dropped.iter().map(|d| d.to_string()).collect();
    if ids.is_empty() {
        "dropped:".to_string()
    } else {
        format!("dropped: {}", ids.join(" "))
    }
}

/// `machine,core,slot,image_id,start,finish` for every occupied slot of a
/// single-chain schedule, then the dropped ids.
pub fn render_local_schedule<S: Scalar>(machine: MachineId, schedule: &Schedule<S>) -> String {
    let mut out = String::new();
    let mut start = S::zero();
    for (k, (slot, finish)) in schedule.slots.iter().zip(&schedule.per_slot_completion).enumerate() {
        if let Some(id) = slot {
            let _ = writeln!(
                out,
                "{machine},0,{},{id},{},{}",
                k + 1,
                start.to_plain_string(),
                finish.to_plain_string()
            );
        }
        start = finish.clone();
    }
    out.push_str(&dropped_line(&schedule.dropped));
    out.push('\n');
    out
}

/// Same layout for a cluster schedule, chains in `(machine, core)` order.
pub fn render_global_schedule<S: Scalar>(schedule: &GlobalSchedule<S>) -> String {
    let mut out = String::new();
    for ((m, c), slots) in &schedule.chains {
        for (k, s) in slots.iter().enumerate() {
            if let Some(id) = s.image {
                let _ = writeln!(
                    out,
                    "{m},{c},{},{id},{},{}",
                    k + 1,
                    s.start.to_plain_string(),
                    s.finish.to_plain_string()
                );
            }
        }
    }
    out.push_str(&dropped_line(&schedule.dropped));
    out.push('\n');
    out
}
