// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: input documents, analysis runs, comparisons,
//! random corpora and the brute-force oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{liang_style_levels, zhang_style_multicore_levels, LevelMisses};
use crate::error::{Error, Result};
use crate::gen::{random_instance, GenParams, Instance};
use crate::intra::{classify_cac, Age, AgeOverride, CacClass, Scope};
use crate::model::{
    enumerate_paths, BlockId, CacheConfig, MemoryBlock, RegionItem, TaskCfg, UnorderedRegion,
    UrPath,
};
use crate::oracle::{max_interference_misses, Limits, OracleTask};
use crate::system::{
    analyze_multicore, build_remote_sequence, intra_wcet, partition_by_set_and_level, path_choices,
    Options, Penalty, PreparedPath, SetBound,
};

// ---------------------------------------------------------------------------
// Input document

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub cache: CacheConfig,
    pub tasks: Vec<TaskDoc>,
    /// Core name to the names of its tasks, in execution order.
    pub cores: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub options: DocOptions,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub name: String,
    /// Each path is a list of out-most regions.
    pub paths: Vec<Vec<RegionDoc>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub analyzed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ages: Vec<AgeOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_wcet: Option<u64>,
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDoc {
    pub id: u32,
    pub count: u32,
    pub body: Vec<ItemDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemDoc {
    Block(BlockDoc),
    Region(RegionDoc),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    /// Byte address.
    pub block: u64,
    /// Block id; numbered in document order when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Zhang,
    Liang,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocOptions {
    pub methods: Vec<Method>,
    pub penalty: Penalty,
    pub optimize_crs: bool,
    pub coarsen: bool,
    pub oracle: OracleOptions,
    pub seed: u64,
}

impl Default for DocOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Proposed, Method::Zhang, Method::Liang],
            penalty: Penalty::default(),
            optimize_crs: true,
            coarsen: false,
            oracle: OracleOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub max_accesses: usize,
    pub max_traces: usize,
    /// Sample this many trace combinations when the instance is too large.
    pub samples: Option<usize>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        let l = Limits::default();
        Self {
            max_accesses: l.max_accesses,
            max_traces: l.max_traces,
            samples: None,
        }
    }
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.cache.validate()?;
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Input(format!("duplicate task '{}'", t.name)));
            }
        }
        for (core, tasks) in &self.cores {
            for t in tasks {
                if !names.contains(t.as_str()) {
                    return Err(Error::Input(format!(
                        "core '{core}' runs unknown task '{t}'"
                    )));
                }
            }
        }
        let analyzed: Vec<&TaskDoc> = self.tasks.iter().filter(|t| t.analyzed).collect();
        if analyzed.len() != 1 {
            return Err(Error::Input(format!(
                "exactly one task must be marked analyzed, found {}",
                analyzed.len()
            )));
        }
        let name = &analyzed[0].name;
        if !self.cores.values().any(|ts| ts.contains(name)) {
            return Err(Error::Input(format!(
                "analyzed task '{name}' is not mapped to a core"
            )));
        }
        Ok(())
    }

    pub fn analyzed(&self) -> &TaskDoc {
        self.tasks
            .iter()
            .find(|t| t.analyzed)
            .expect("validated document")
    }

    fn task(&self, name: &str) -> &TaskDoc {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .expect("validated document")
    }

    /// Builds the analysis inputs: the analyzed task's paths and, for every
    /// other core, each combination of its tasks' paths as one sequence.
    pub fn system(&self) -> Result<System> {
        self.validate()?;
        let cache = self.cache.clone();
        let local_doc = self.analyzed();
        let local_task = local_doc.to_task(cache.line_size);
        let local = enumerate_paths(&local_task)?
            .iter()
            .map(|p| PreparedPath::new(p, &cache, &local_doc.ages))
            .collect::<Result<Vec<_>>>()?;
        let mut cores = Vec::new();
        for (core, names) in &self.cores {
            if names.contains(&local_doc.name) {
                continue;
            }
            let mut per_task = Vec::new();
            for n in names {
                per_task.push(enumerate_paths(&self.task(n).to_task(cache.line_size))?);
            }
            let slices: Vec<&[UrPath]> = per_task.iter().map(Vec::as_slice).collect();
            let mut merged = Vec::new();
            for combo in combinations(&slices) {
                let seq = build_remote_sequence(core, &combo, self.options.coarsen);
                merged.push(PreparedPath::new(&seq, &cache, &[])?);
            }
            cores.push((core.clone(), merged));
        }
        let computed = intra_wcet(&local, &cache);
        Ok(System {
            cache,
            task: local_doc.name.clone(),
            local,
            cores,
            intra_wcet: local_doc.intra_wcet.unwrap_or(computed),
        })
    }
}

fn combinations<'a>(lists: &[&'a [UrPath]]) -> Vec<Vec<&'a UrPath>> {
    let mut out: Vec<Vec<&UrPath>> = vec![Vec::new()];
    for list in lists {
        out = out
            .iter()
            .flat_map(|prefix| {
                list.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(p);
                    v
                })
            })
            .collect();
    }
    out
}

impl TaskDoc {
    pub fn to_task(&self, line_size: u64) -> TaskCfg {
        fn region(r: &RegionDoc, line_size: u64, next: &mut u32) -> UnorderedRegion {
            let body = r
                .body
                .iter()
                .map(|item| match item {
                    ItemDoc::Block(b) => {
                        *next += 1;
                        let id = BlockId(b.id.unwrap_or(*next));
                        RegionItem::Block(MemoryBlock {
                            id,
                            address: b.block / line_size,
                        })
                    }
                    ItemDoc::Region(inner) => RegionItem::Region(region(inner, line_size, next)),
                })
                .collect();
            UnorderedRegion::new(r.id, r.count, body)
        }
        let paths = self
            .paths
            .iter()
            .map(|p| {
                let mut next = 0;
                UrPath::new(
                    self.name.clone(),
                    p.iter().map(|r| region(r, line_size, &mut next)).collect(),
                )
            })
            .collect();
        TaskCfg {
            name: self.name.clone(),
            paths,
        }
    }
}

fn region_doc(r: &UnorderedRegion, line_size: u64) -> RegionDoc {
    let body = r
        .body
        .iter()
        .map(|item| match item {
            RegionItem::Block(b) => ItemDoc::Block(BlockDoc {
                block: b.address * line_size,
                id: Some(b.id.0),
            }),
            RegionItem::Region(inner) => ItemDoc::Region(region_doc(inner, line_size)),
        })
        .collect();
    RegionDoc {
        id: r.index,
        count: r.count,
        body,
    }
}

/// Input document of a generated instance: the local task on `core0`, remote
/// path `c` on `core{c+1}`.
pub fn instance_document(inst: &Instance) -> Document {
    let line = inst.cache.line_size;
    let task = |name: &str, p: &UrPath, analyzed: bool| TaskDoc {
        name: name.to_string(),
        paths: vec![p.regions.iter().map(|r| region_doc(r, line)).collect()],
        analyzed,
        ages: Vec::new(),
        intra_wcet: None,
    };
    let mut tasks = vec![task("local", &inst.local, true)];
    let mut cores = BTreeMap::from([("core0".to_string(), vec!["local".to_string()])]);
    for (c, r) in inst.remotes.iter().enumerate() {
        let name = format!("remote{c}");
        tasks.push(task(&name, r, false));
        cores.insert(format!("core{}", c + 1), vec![name]);
    }
    Document {
        cache: inst.cache.clone(),
        tasks,
        cores,
        options: DocOptions::default(),
    }
}

// ---------------------------------------------------------------------------
// Analysis

pub struct System {
    pub cache: CacheConfig,
    pub task: String,
    pub local: Vec<PreparedPath>,
    /// Remote cores with their candidate sequences.
    pub cores: Vec<(String, Vec<PreparedPath>)>,
    pub intra_wcet: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub misses: u64,
    pub interference_cycles: u64,
    pub wcet: u64,
    pub per_level: BTreeMap<usize, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub misses: u64,
    pub exhaustive: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Sound,
    Violation,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Sound => "SOUND",
            Verdict::Violation => "VIOLATION",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Results {
    pub task: String,
    pub intra_wcet: u64,
    /// 1-based path of the analyzed task giving the proposed bound.
    pub worst_path: usize,
    pub methods: Vec<MethodResult>,
    /// Segment assignment behind the proposed bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<SetBound>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

impl Results {
    pub fn misses(&self, m: Method) -> Option<u64> {
        self.methods
            .iter()
            .find(|r| r.method == m)
            .map(|r| r.misses)
    }
}

impl System {
    fn core_slices(&self) -> Vec<&[PreparedPath]> {
        self.cores.iter().map(|(_, p)| p.as_slice()).collect()
    }

    fn method_result(
        &self,
        method: Method,
        per_level: LevelMisses,
        penalty: Penalty,
    ) -> MethodResult {
        let cycles = per_level
            .iter()
            .map(|(&l, &m)| m * penalty.cycles(&self.cache, l))
            .sum();
        MethodResult {
            method,
            misses: per_level.values().sum(),
            interference_cycles: cycles,
            wcet: self.intra_wcet + cycles,
            per_level,
        }
    }

    /// Worst per-level misses of a baseline over all path combinations.
    fn baseline(
        &self,
        f: impl Fn(&PreparedPath, &[&PreparedPath]) -> Result<LevelMisses> + Sync,
    ) -> Result<LevelMisses> {
        let slices = self.core_slices();
        let choices = path_choices(&slices);
        let all: Vec<LevelMisses> = self
            .local
            .par_iter()
            .map(|lp| choices.iter().map(|c| f(lp, c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let mut best = LevelMisses::new();
        for m in all {
            if m.values().sum::<u64>() > best.values().sum::<u64>() || best.is_empty() {
                best = m;
            }
        }
        Ok(best)
    }

    pub fn analyze(&self, methods: &[Method], options: &DocOptions) -> Result<Results> {
        let opts = Options {
            optimize_crs: options.optimize_crs,
            penalty: options.penalty,
            coarsen: options.coarsen,
        };
        let slices = self.core_slices();
        let (idx, bound) = analyze_multicore(&self.local, &slices, &self.cache, &opts)?;
        let mut out = Results {
            task: self.task.clone(),
            intra_wcet: self.intra_wcet,
            worst_path: idx + 1,
            methods: Vec::new(),
            witness: None,
            oracle: None,
            generated_at: None,
        };
        let mut methods = methods.to_vec();
        methods.sort();
        methods.dedup();
        for m in methods {
            let per_level = match m {
                Method::Proposed => {
                    let mut l = LevelMisses::new();
                    for s in &bound.per_set {
                        *l.entry(s.level).or_default() += s.misses;
                    }
                    out.witness = Some(bound.per_set.clone());
                    l
                }
                Method::Zhang => {
                    self.baseline(|lp, c| zhang_style_multicore_levels(lp, c, &self.cache))?
                }
                Method::Liang => {
                    self.baseline(|lp, c| Ok(liang_style_levels(lp, c, &self.cache)))?
                }
            };
            out.methods
                .push(self.method_result(m, per_level, options.penalty));
        }
        Ok(out)
    }

    /// Worst inter-core misses found by enumerating orderings and
    /// interleavings, over all path combinations.
    pub fn oracle(&self, limits: &Limits) -> Result<(u64, bool)> {
        let slices = self.core_slices();
        let choices = path_choices(&slices);
        let mut best = 0;
        let mut exhaustive = true;
        for lp in &self.local {
            for choice in &choices {
                let remotes: Vec<OracleTask> = choice
                    .iter()
                    .map(|p| OracleTask {
                        view: &p.view,
                        ages: &p.ages,
                    })
                    .collect();
                let mut total = 0;
                for sub in partition_by_set_and_level(lp, &self.cache) {
                    let local = OracleTask {
                        view: &lp.view,
                        ages: &lp.ages,
                    };
                    let r = max_interference_misses(
                        local,
                        &remotes,
                        &self.cache,
                        sub.level,
                        sub.set,
                        limits,
                    )?;
                    total += r.max_misses;
                    exhaustive &= r.exhaustive;
                }
                best = best.max(total);
            }
        }
        Ok((best, exhaustive))
    }
}

fn limits_of(o: &OracleOptions, seed: u64) -> Limits {
    Limits {
        max_accesses: o.max_accesses,
        max_traces: o.max_traces,
        sample: o.samples.map(|n| (seed, n)),
    }
}

/// Full `analyze` pipeline on a parsed document.
pub fn analyze_document(doc: &Document, methods: &[Method], with_oracle: bool) -> Result<Results> {
    let sys = doc.system()?;
    let mut res = sys.analyze(methods, &doc.options)?;
    if with_oracle {
        let (misses, exhaustive) = sys.oracle(&limits_of(&doc.options.oracle, doc.options.seed))?;
        let proposed = sys.analyze(&[Method::Proposed], &doc.options)?.methods[0].misses;
        let verdict = if proposed >= misses {
            Verdict::Sound
        } else {
            Verdict::Violation
        };
        res.oracle = Some(OracleReport {
            misses,
            exhaustive,
            verdict,
        });
    }
    Ok(res)
}

pub fn render_report(res: &Results, cache: &CacheConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "task {} (worst path {})", res.task, res.worst_path);
    let _ = writeln!(s, "intra-core WCET {}", res.intra_wcet);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<10}{:>10}{:>14}{:>14}",
        "method", "misses", "cycles", "wcet"
    );
    for m in &res.methods {
        let name = format!("{:?}", m.method).to_lowercase();
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>14}{:>14}",
            name, m.misses, m.interference_cycles, m.wcet
        );
    }
    if let Some(w) = &res.witness {
        let _ = writeln!(s);
        let _ = writeln!(s, "witness");
        for set in w {
            let _ = writeln!(
                s,
                "  L{} set {}: {} misses, {} CRs over {} ways",
                set.level + 1,
                set.set,
                set.misses,
                set.witness.len(),
                cache.kappa(set.level)
            );
            if set.premise_violations > 0 {
                let _ = writeln!(
                    s,
                    "    {} CRs hold more addresses than ways",
                    set.premise_violations
                );
            }
            for step in &set.witness {
                match step.segment {
                    Some((a, b)) => {
                        let _ = writeln!(
                            s,
                            "    CR {} <- remote regions {}..{}: {}",
                            step.cr + 1,
                            a,
                            b,
                            step.misses
                        );
                    }
                    None => {
                        let _ = writeln!(s, "    CR {} <- none", step.cr + 1);
                    }
                }
            }
        }
    }
    if let Some(o) = &res.oracle {
        let _ = writeln!(s);
        let kind = if o.exhaustive {
            "exhaustive"
        } else {
            "sampled"
        };
        let _ = writeln!(s, "oracle {} misses ({kind}): {}", o.misses, o.verdict);
    }
    s
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Parser, Debug)]
#[command(
    name = "intercore",
    version,
    about = "Bounds on shared-cache misses caused by other cores"
)]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bound the analyzed task of one input document.
    Analyze(AnalyzeArgs),
    /// Tabulate bounds over a corpus as CSV.
    Compare(CompareArgs),
    /// Write random input documents.
    Gen(GenArgs),
    /// Check the proposed bound against exhaustive simulation.
    Oracle(OracleArgs),
    /// Print computed ages.
    Ages(AgesArgs),
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Methods to run; defaults to the document's options.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Also run the oracle and report a verdict.
    #[arg(long)]
    pub oracle: bool,
    /// Directory for `<name>.report.txt` and `<name>.results.json`.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Leave the timestamp out of the results file.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Directory of input documents.
    pub input_dir: Option<PathBuf>,
    /// Generate this many instances instead of reading a directory.
    #[arg(long)]
    pub gen: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_accesses: Option<usize>,
    #[arg(long)]
    pub remote_cores: Option<usize>,
    #[arg(long)]
    pub max_kappa: Option<u32>,
    #[arg(long)]
    pub address_pool: Option<u64>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub max_accesses: Option<usize>,
    #[arg(long)]
    pub max_traces: Option<usize>,
    /// Sample this many trace combinations when the instance is too large.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AgesArgs {
    pub input: PathBuf,
    /// Only this task.
    #[arg(long)]
    pub task: Option<String>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::TooLarge(_) | Error::AgedOut => 3,
        _ => 2,
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let body = || match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Ages(a) => cmd_ages(a),
    };
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(body),
            Err(e) => Err(Error::Config(e.to_string())),
        },
        None => body(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32> {
    let doc = Document::load(&a.input)?;
    let methods = a
        .methods
        .clone()
        .unwrap_or_else(|| doc.options.methods.clone());
    let mut res = analyze_document(&doc, &methods, a.oracle)?;
    if !a.no_timestamp {
        res.generated_at = Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        );
    }
    let report = render_report(&res, &doc.cache);
    let stem = a
        .input
        .file_stem()
        .map_or("input".into(), |s| s.to_string_lossy().into_owned());
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(format!("{stem}.report.txt")), &report)?;
    let json = serde_json::to_string_pretty(&res)? + "\n";
    fs::write(a.out.join(format!("{stem}.results.json")), json)?;
    print!("{report}");
    let violated = res
        .oracle
        .as_ref()
        .is_some_and(|o| o.verdict == Verdict::Violation);
    Ok(if violated { 4 } else { 0 })
}

/// One CSV row of `compare`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub instance: String,
    pub proposed: u64,
    pub zhang: u64,
    pub liang: u64,
}

/// `a / b`, with 1.0 when both are zero.
pub fn ratio(a: u64, b: u64) -> f64 {
    match (a, b) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => a as f64 / b as f64,
    }
}

pub fn compare_row(name: &str, doc: &Document) -> Result<CompareRow> {
    let res = doc.system()?.analyze(
        &[Method::Proposed, Method::Zhang, Method::Liang],
        &doc.options,
    )?;
    let get = |m| res.misses(m).unwrap_or(0);
    Ok(CompareRow {
        instance: name.to_string(),
        proposed: get(Method::Proposed),
        zhang: get(Method::Zhang),
        liang: get(Method::Liang),
    })
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s =
        String::from("instance,proposed,zhang,liang,proposed_over_zhang,proposed_over_liang\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.4},{:.4}",
            r.instance,
            r.proposed,
            r.zhang,
            r.liang,
            ratio(r.proposed, r.zhang),
            ratio(r.proposed, r.liang)
        );
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&CompareRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let _ = writeln!(
        s,
        "mean,{:.4},{:.4},{:.4},{:.4},{:.4}",
        mean(&|r| r.proposed as f64),
        mean(&|r| r.zhang as f64),
        mean(&|r| r.liang as f64),
        mean(&|r| ratio(r.proposed, r.zhang)),
        mean(&|r| ratio(r.proposed, r.liang))
    );
    s
}

pub fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let docs: Vec<(String, std::result::Result<Document, String>)> = match (&a.gen, &a.input_dir) {
        (Some(n), _) => {
            if *n == 0 {
                return Err(Error::Input("--gen needs a positive count".into()));
            }
            (0..*n)
                .map(|i| {
                    let inst = random_instance(a.seed + i as u64, &GenParams::default());
                    (format!("gen-{i:04}"), Ok(instance_document(&inst)))
                })
                .collect()
        }
        (None, Some(dir)) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            files
                .into_iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .map_or(String::new(), |s| s.to_string_lossy().into_owned());
                    (name, Document::load(&p).map_err(|e| e.to_string()))
                })
                .collect()
        }
        (None, None) => return Err(Error::Input("give an input directory or --gen N".into())),
    };
    let rows: Vec<Option<CompareRow>> = docs
        .par_iter()
        .map(|(name, doc)| {
            match doc
                .clone()
                .and_then(|d| compare_row(name, &d).map_err(|e| e.to_string()))
            {
                Ok(r) => Some(r),
                Err(e) => {
                    eprintln!("skipping {name}: {e}");
                    None
                }
            }
        })
        .collect();
    let rows: Vec<CompareRow> = rows.into_iter().flatten().collect();
    let csv = compare_csv(&rows);
    match &a.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

pub fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let d = GenParams::default();
    let params = GenParams {
        max_accesses: a.max_accesses.unwrap_or(d.max_accesses),
        remote_cores: a.remote_cores.unwrap_or(d.remote_cores),
        max_kappa: a.max_kappa.unwrap_or(d.max_kappa),
        address_pool: a.address_pool.unwrap_or(d.address_pool),
        ..d
    };
    if a.count == 0
        || params.max_accesses == 0
        || params.remote_cores == 0
        || params.max_kappa == 0
        || params.address_pool == 0
    {
        return Err(Error::Input("count and sizes must be positive".into()));
    }
    if params.max_accesses < params.local_regions.0 + params.remote_cores * params.remote_regions.0
    {
        return Err(Error::Input(
            "max-accesses too small for the minimum region counts".into(),
        ));
    }
    fs::create_dir_all(&a.out)?;
    for i in 0..a.count {
        let seed = a.seed + i as u64;
        let mut doc = instance_document(&random_instance(seed, &params));
        doc.options.seed = seed;
        fs::write(
            a.out.join(format!("gen-{seed:06}.json")),
            doc.to_json() + "\n",
        )?;
    }
    Ok(0)
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<i32> {
    let mut doc = Document::load(&a.input)?;
    let o = &mut doc.options.oracle;
    o.max_accesses = a.max_accesses.unwrap_or(o.max_accesses);
    o.max_traces = a.max_traces.unwrap_or(o.max_traces);
    o.samples = a.sample.or(o.samples);
    doc.options.seed = a.seed.unwrap_or(doc.options.seed);
    let res = analyze_document(&doc, &[Method::Proposed], true)?;
    let o = res.oracle.expect("oracle requested");
    let kind = if o.exhaustive {
        "exhaustive"
    } else {
        "sampled"
    };
    println!(
        "proposed {} oracle {} ({kind}) {}",
        res.methods[0].misses, o.misses, o.verdict
    );
    Ok(if o.verdict == Verdict::Violation {
        4
    } else {
        0
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AgeEntry {
    pub task: String,
    pub path: usize,
    pub level: usize,
    pub block: BlockId,
    pub address: u64,
    /// `None` for program scope, otherwise the region index.
    pub region: Option<u32>,
    pub age: Age,
    pub cac: CacClass,
    pub reaches: bool,
}

pub fn age_entries(doc: &Document, only: Option<&str>) -> Result<Vec<AgeEntry>> {
    doc.cache.validate()?;
    let cache = &doc.cache;
    let mut out = Vec::new();
    for t in doc
        .tasks
        .iter()
        .filter(|t| only.is_none_or(|n| n == t.name))
    {
        for (pi, path) in enumerate_paths(&t.to_task(cache.line_size))?
            .iter()
            .enumerate()
        {
            let p = PreparedPath::new(path, cache, &t.ages)?;
            for level in 0..cache.levels.len() {
                for (i, site) in p.view.sites.iter().enumerate() {
                    let mut scopes = vec![Scope::Program];
                    scopes.extend(site.chain.iter().rev().map(|&n| Scope::Region(n)));
                    for scope in scopes {
                        let Some(age) = p.ages.age(level, i, scope) else {
                            continue;
                        };
                        out.push(AgeEntry {
                            task: t.name.clone(),
                            path: pi + 1,
                            level,
                            block: site.block,
                            address: site.address,
                            region: match scope {
                                Scope::Program => None,
                                Scope::Region(n) => Some(p.view.nodes[n].index),
                            },
                            age,
                            cac: classify_cac(&p.ages, cache, level, i, scope),
                            reaches: p.ages.reaches(level, i, scope),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn cmd_ages(a: &AgesArgs) -> Result<i32> {
    let doc = Document::load(&a.input)?;
    if let Some(t) = &a.task {
        if !doc.tasks.iter().any(|x| &x.name == t) {
            return Err(Error::Input(format!("unknown task '{t}'")));
        }
    }
    let entries = age_entries(&doc, a.task.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&entries)?);
    Ok(0)
}
