//! `shardpow`: simulate, verify and prove.
//!
//! Exit status: 0 success, 1 verification or simulation failure, 2 bad usage
//! or unreadable input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use shardpow::bits::BitString;
use shardpow::codec::{Decode, Encode};
use shardpow::consensus::stream::{read_stream, replay_stream, Stream, StreamItem};
use shardpow::econ::loglinear_fit;
use shardpow::hash::Hash256;
use shardpow::merkle::MerkleProof;
use shardpow::mmr::{verify_inclusion, InclusionProof, WeightedMmr};
use shardpow::shard_tree::{verify_merged_mining, MergedMiningProof, ShardMerkleTree};
use shardpow::tree_encoding::{decode_orange, encode_orange, OrangeSubtree};
use shardpow::Difficulty;
use shardpow_sim::stats::{events_csv, events_jsonl, miners_csv};
use shardpow_sim::{run_many, SimConfig, SimError, SimOutput, SimStats};

#[derive(Parser)]
#[command(name = "shardpow", version, about = "Merge-mined shard network tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Bc,
    Sc,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its statistics and event log.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// json: stats.json + events.jsonl; csv: miners.csv + events.csv.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Independent runs with consecutive seeds, each in `run-<seed>/`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write the main chains as `chain.spws`.
        #[arg(long)]
        export_chain: bool,
    },
    /// Replay a block stream against consensus and report every block.
    VerifyChain {
        #[arg(long)]
        input: PathBuf,
        /// Report only beacon or only shard blocks.
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Report only this shard.
        #[arg(long)]
        shard: Option<u32>,
    },
    /// Build the shard Merkle tree of a leaf file and prove merged mining.
    MmProve {
        /// Lines of `<shard id> <header hash hex>`.
        #[arg(long)]
        leaves: PathBuf,
        #[arg(long)]
        shard_count: u32,
        #[arg(long)]
        out: PathBuf,
    },
    MmVerify {
        #[arg(long)]
        proof: PathBuf,
        /// Check only this shard (default: every shard in the file).
        #[arg(long)]
        shard: Option<u32>,
    },
    /// Prove inclusion of one leaf of a weighted MMR.
    MmrProve {
        /// Lines of `<leaf hash hex> <weight>`.
        #[arg(long)]
        leaves: PathBuf,
        #[arg(long)]
        index: u64,
        #[arg(long)]
        out: PathBuf,
    },
    MmrVerify {
        #[arg(long)]
        proof: PathBuf,
    },
    /// Orange subtree (JSON; empty file = no subtree) to its bit encoding.
    EncodeTree {
        #[arg(long)]
        input: PathBuf,
        /// Shard tree height, for the size limit.
        #[arg(long)]
        height: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    DecodeTree {
        /// A file holding a string of 0s and 1s.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        height: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log-linear fit of a `time_years,hashes_per_joule` CSV.
    EconFit {
        #[arg(long)]
        input: PathBuf,
    },
    /// Summarise a stats.json or a block stream.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

enum Failure {
    /// Exit 1.
    Rejected(String),
    /// Exit 2.
    Input(String),
}

type Res = Result<(), Failure>;

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Res {
    fs::write(path, data).map_err(|e| Failure::Rejected(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Res {
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Non-empty lines that are not `#` comments, split on whitespace.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split_whitespace().collect()))
}

fn simulate(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    format: Format,
    runs: u64,
    jobs: usize,
    export_chain: bool,
) -> Res {
    let base = SimConfig::load(config).map_err(input)?;
    if runs == 0 {
        return Err(Failure::Input("--runs must be at least 1".into()));
    }
    let first = seed.unwrap_or(base.seed);
    let configs: Vec<SimConfig> = (0..runs)
        .map(|i| {
            let mut c = base.clone();
            c.seed = first.wrapping_add(i);
            c.export_stream |= export_chain;
            c
        })
        .collect();
    let results = run_many(configs, jobs);
    for (i, r) in results.into_iter().enumerate() {
        let out_dir = if runs == 1 { out.to_path_buf() } else { out.join(format!("run-{}", first.wrapping_add(i as u64))) };
        let o = r.map_err(|e| match e {
            SimError::Config(m) => Failure::Input(m),
            SimError::Runtime(m) => Failure::Rejected(m),
        })?;
        write_outputs(&o, &out_dir, format)?;
        let s = &o.stats;
        println!(
            "seed {}: beacon height {}, {} shards, {} orphans, BC/SC supply {}, replay failures {} -> {}",
            s.seed,
            s.beacon.height,
            s.shards.len(),
            s.orphans(),
            s.supply_ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
            s.replay.failures,
            out_dir.display()
        );
        if s.replay.failures > 0 {
            return Err(Failure::Rejected(format!(
                "main chain failed replay: {}",
                s.replay.first_failure.clone().unwrap_or_default()
            )));
        }
    }
    Ok(())
}

fn write_outputs(o: &SimOutput, dir: &Path, format: Format) -> Res {
    fs::create_dir_all(dir).map_err(|e| Failure::Rejected(format!("{}: {e}", dir.display())))?;
    let csv_err = |e: csv::Error| Failure::Rejected(e.to_string());
    match format {
        Format::Json => {
            write(&dir.join("stats.json"), serde_json::to_string_pretty(&o.stats).expect("stats serialize"))?;
            write(&dir.join("events.jsonl"), events_jsonl(&o.events))?;
        }
        Format::Csv => {
            write(&dir.join("miners.csv"), miners_csv(&o.stats).map_err(csv_err)?)?;
            write(&dir.join("events.csv"), events_csv(&o.events).map_err(csv_err)?)?;
        }
    }
    if let Some(bytes) = &o.stream {
        write(&dir.join("chain.spws"), bytes)?;
    }
    Ok(())
}

fn verify_chain(path: &Path, kind: Option<Kind>, shard: Option<u32>) -> Res {
    let stream = read_stream(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let replay = replay_stream(&stream);
    let mut bad = 0;
    let mut shown = 0;
    for (e, rec) in replay.entries.iter().zip(&stream.records) {
        let (is_bc, id) = match &rec.item {
            StreamItem::Beacon(_) => (true, None),
            StreamItem::Shard(s, _) => (false, Some(s.0)),
        };
        let wanted = match kind {
            Some(Kind::Bc) => is_bc,
            Some(Kind::Sc) => !is_bc,
            None => true,
        } && shard.is_none_or(|s| id == Some(s));
        if !wanted {
            continue;
        }
        shown += 1;
        let height = e.height.map_or("-".into(), |h| h.to_string());
        match &e.error {
            None => println!("{} {} {height} ok", e.index, e.chain),
            Some(err) => {
                bad += 1;
                println!("{} {} {height} step {}: {}", e.index, e.chain, err.step, err.detail);
            }
        }
    }
    println!("{shown} blocks checked, {bad} rejected{}", if stream.sealed { "" } else { " (unsealed: work not checked)" });
    if bad > 0 {
        Err(Failure::Rejected(format!("{bad} blocks rejected")))
    } else {
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MmProofFile {
    shard_count: u32,
    root: Hash256,
    mm_number: u32,
    /// Canonical encoding of the merged-mining proof, hex.
    proof: String,
    leaves: Vec<LeafEntry>,
}

#[derive(Serialize, Deserialize)]
struct LeafEntry {
    shard: u32,
    hash: Hash256,
    path: MerkleProof,
}

fn mm_prove(leaves: &Path, shard_count: u32, out: &Path) -> Res {
    let text = read_text(leaves)?;
    let mut entries = Vec::new();
    for (line, f) in records(&text) {
        let [id, hash] = f[..] else {
            return Err(Failure::Input(format!("line {line}: expected `<shard id> <hash>`")));
        };
        let id: u32 = id.parse().map_err(|_| Failure::Input(format!("line {line}: bad shard id")))?;
        if id == 0 || id > shard_count {
            return Err(Failure::Input(format!("line {line}: shard {id} outside 1..={shard_count}")));
        }
        let hash: Hash256 = hash.parse().map_err(|_| Failure::Input(format!("line {line}: bad hash")))?;
        entries.push((id - 1, hash));
    }
    let tree = ShardMerkleTree::build(&entries, shard_count).map_err(input)?;
    let proof = tree.prove_merged_mining().map_err(input)?;
    let leaves = entries
        .iter()
        .map(|&(leaf, hash)| Ok(LeafEntry { shard: leaf + 1, hash, path: tree.prove_leaf(leaf).map_err(input)? }))
        .collect::<Result<Vec<_>, Failure>>()?;
    let file = MmProofFile {
        shard_count,
        root: tree.root(),
        mm_number: proof.claimed_mm_number,
        proof: hex::encode(proof.encode()),
        leaves,
    };
    write(out, serde_json::to_string_pretty(&file).expect("proof serializes"))?;
    println!("root {} mm_number {} encoding {} bits", file.root, file.mm_number, proof.encoding.len());
    Ok(())
}

fn mm_verify(path: &Path, shard: Option<u32>) -> Res {
    let file: MmProofFile = serde_json::from_str(&read_text(path)?).map_err(input)?;
    let bytes = hex::decode(&file.proof).map_err(input)?;
    let proof = MergedMiningProof::decode(&bytes).map_err(input)?;
    let mut checked = 0;
    for leaf in file.leaves.iter().filter(|l| shard.is_none_or(|s| s == l.shard)) {
        checked += 1;
        if leaf.shard == 0 {
            return Err(Failure::Input("shard ids start at 1".into()));
        }
        if !leaf.path.verify_leaf_hash(&file.root, leaf.hash) || leaf.path.leaf_index != (leaf.shard - 1) as u64 {
            return Err(Failure::Rejected(format!("shard {}: header is not in the tree", leaf.shard)));
        }
        verify_merged_mining(&file.root, &proof, leaf.shard - 1, file.mm_number, file.shard_count)
            .map_err(|e| Failure::Rejected(format!("shard {}: {e}", leaf.shard)))?;
    }
    if checked == 0 {
        return Err(Failure::Input("no matching shard in the proof file".into()));
    }
    println!("ok: {checked} shards, mm_number {}", file.mm_number);
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MmrProofFile {
    root: Hash256,
    total_weight: Difficulty,
    proof: InclusionProof,
}

/// Integer or decimal difficulty.
fn parse_weight(s: &str) -> Option<Difficulty> {
    if let Ok(v) = s.parse::<u64>() {
        return Some(Difficulty::from_integer(v));
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).map(Difficulty::from_f64)
}

fn mmr_prove(leaves: &Path, index: u64, out: &Path) -> Res {
    let text = read_text(leaves)?;
    let mut mmr = WeightedMmr::new();
    for (line, f) in records(&text) {
        let [hash, weight] = f[..] else {
            return Err(Failure::Input(format!("line {line}: expected `<hash> <weight>`")));
        };
        let hash: Hash256 = hash.parse().map_err(|_| Failure::Input(format!("line {line}: bad hash")))?;
        let weight = parse_weight(weight).ok_or_else(|| Failure::Input(format!("line {line}: bad weight")))?;
        mmr.append(hash, weight);
    }
    let proof = mmr
        .prove_inclusion(index)
        .ok_or_else(|| Failure::Input(format!("index {index} outside {} leaves", mmr.leaf_count())))?;
    let file = MmrProofFile { root: mmr.root(), total_weight: mmr.total_weight(), proof };
    write(out, serde_json::to_string_pretty(&file).expect("proof serializes"))?;
    println!("root {} weight {} proof nodes {}", file.root, file.total_weight, file.proof.node_count());
    Ok(())
}

fn mmr_verify(path: &Path) -> Res {
    let file: MmrProofFile = serde_json::from_str(&read_text(path)?).map_err(input)?;
    if verify_inclusion(&file.root, file.total_weight, &file.proof) {
        println!("ok: leaf {} of {}", file.proof.leaf_index, file.proof.leaf_count);
        Ok(())
    } else {
        Err(Failure::Rejected("inclusion proof does not match the root and weight".into()))
    }
}

fn encode_tree(path: &Path, height: u32, out: Option<&Path>) -> Res {
    let text = read_text(path)?;
    let orange = if text.trim().is_empty() {
        OrangeSubtree::Empty
    } else {
        serde_json::from_str(&text).map_err(input)?
    };
    let bits = encode_orange(&orange, height).map_err(input)?.to_bits();
    emit(out, &bits.to_string())
}

fn decode_tree(path: &Path, height: u32, out: Option<&Path>) -> Res {
    let bits: BitString = read_text(path)?.trim().parse().map_err(input)?;
    let orange = decode_orange(&bits, height).map_err(input)?;
    emit(out, &serde_json::to_string(&orange).expect("tree serializes"))
}

#[derive(Deserialize)]
struct EfficiencyRow {
    time_years: f64,
    hashes_per_joule: f64,
}

fn econ_fit(path: &Path) -> Res {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(input)?;
    let points = r
        .deserialize::<EfficiencyRow>()
        .map(|row| row.map(|x| (x.time_years, x.hashes_per_joule)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let fit = loglinear_fit(&points).map_err(input)?;
    println!("{}", serde_json::to_string(&fit).expect("fit serializes"));
    Ok(())
}

fn stats(path: &Path) -> Res {
    let bytes = read(path)?;
    if bytes.starts_with(b"SPWS") {
        let stream: Stream = read_stream(&bytes).map_err(input)?;
        let r = replay_stream(&stream);
        let st = &r.state;
        let (b, s) = st.supplies();
        println!("blocks {} rejected {}", r.entries.len(), r.failures());
        println!("beacon height {} supply {} units", st.beacon().height(), b.units());
        for id in 1..=st.active_shards() {
            if let Some(c) = st.shard(shardpow::ShardId(id)) {
                println!("shard-{id} height {} supply {} units", c.height(), c.supply().units());
            }
        }
        println!("shard supply {} units, expansions {}", s.units(), st.expansions().len());
        return Ok(());
    }
    let s: SimStats = serde_json::from_slice(&bytes).map_err(input)?;
    println!("seed {} simulated {:.0}s, {} successes", s.seed, s.duration, s.success_events);
    for c in std::iter::once(&s.beacon).chain(&s.shards) {
        println!(
            "{} height {} orphans {} reorgs {} mean block time {:.2}s",
            c.chain, c.height, c.orphans, c.reorgs, c.mean_block_time
        );
    }
    for m in &s.miners {
        println!("miner {} share {:.4} ({} beacon, {} shard blocks)", m.id, m.share, m.beacon_blocks, m.shard_blocks);
    }
    if let Some(r) = s.supply_ratio {
        println!("beacon / shard supply {r:.4}");
    }
    Ok(())
}

/// Parses arguments; usage errors also print the usage of the subcommand.
fn parse() -> Result<Cli, ExitCode> {
    Cli::try_parse().map_err(|e| {
        let _ = e.print();
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            return ExitCode::SUCCESS;
        }
        let mut cmd = Cli::command();
        cmd.build();
        let name = std::env::args().skip(1).find(|a| cmd.find_subcommand(a).is_some());
        let usage = match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|c| c.render_usage())) {
            Some(u) => u,
            None => cmd.render_usage(),
        };
        eprintln!("\n{usage}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(c) => c,
        Err(code) => return code,
    };
    let r = match &cli.command {
        Command::Simulate { config, seed, out, format, runs, jobs, export_chain } => {
            simulate(config, *seed, out, *format, *runs, *jobs, *export_chain)
        }
        Command::VerifyChain { input, kind, shard } => verify_chain(input, *kind, *shard),
        Command::MmProve { leaves, shard_count, out } => mm_prove(leaves, *shard_count, out),
        Command::MmVerify { proof, shard } => mm_verify(proof, *shard),
        Command::MmrProve { leaves, index, out } => mmr_prove(leaves, *index, out),
        Command::MmrVerify { proof } => mmr_verify(proof),
        Command::EncodeTree { input, height, out } => encode_tree(input, *height, out.as_deref()),
        Command::DecodeTree { input, height, out } => decode_tree(input, *height, out.as_deref()),
        Command::EconFit { input } => econ_fit(input),
        Command::Stats { input } => stats(input),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
