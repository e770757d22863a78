use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use celltraj_core::ingest::{build_sequences, format_record, CellRecord, FilterConfig, TowerMap, TowerSequence};
use celltraj_core::mapmatch::{expand_observations, observations_from_gps, read_store, to_debug_json, write_store, CandidateSet};
use celltraj_core::pipeline::{area_speed_cap, match_all, preprocess_records, run_queries, PreprocessTotals};
use celltraj_core::roadnet::RoadNetwork;
use celltraj_core::simsearch::{adapt_m, SearchConfig, SearchIndex, SearchOutcome, TimedSet};
use celltraj_core::simulate::{
    evaluate_matching, evaluate_search, read_world, synthesize_benchmark, write_world, QueryOutcome,
};

use crate::config::RunConfig;
use crate::files::{write_atomic, write_manifest, Reads};
use crate::Inputs;

/// The configured speed cap, tightened to the fastest road of the area.
fn filter_for(cfg: &RunConfig, net: &RoadNetwork) -> FilterConfig {
    let mut f = cfg.filter.clone();
    f.speed_cap_kmh = f.speed_cap_kmh.min(area_speed_cap(net));
    f
}

fn totals_report(t: &PreprocessTotals) -> (String, String) {
    let text = format!(
        "users {}, kept {}, screened out {}, duplicates {}, conflicts {}, unknown towers {}, removed: ping-pong {}, backward {}, drifting {}\n",
        t.users, t.kept, t.screened_out, t.duplicates, t.conflicts, t.unknown_towers, t.removed_pingpong, t.removed_backward, t.removed_drifting
    );
    let csv = format!(
        "users,kept,screened_out,duplicates,conflicts,unknown_towers,removed_pingpong,removed_backward,removed_drifting\n{},{},{},{},{},{},{},{},{}\n",
        t.users, t.kept, t.screened_out, t.duplicates, t.conflicts, t.unknown_towers, t.removed_pingpong, t.removed_backward, t.removed_drifting
    );
    (text, csv)
}

fn sequences_csv(seqs: &[TowerSequence]) -> String {
    let mut out = String::new();
    for s in seqs {
        for p in &s.points {
            out.push_str(&format_record(&CellRecord { user_id: s.user_id.clone(), timestamp: p.time, tower: p.tower }));
            out.push('\n');
        }
    }
    out
}

pub fn preprocess(cfg: &RunConfig, inputs: &Inputs, out: &Path) -> Result<()> {
    let mut reads = Reads::default();
    let net = reads.network(&inputs.network_path()?)?;
    let towers = reads.towers(&inputs.towers_path()?, &net)?;
    let records = reads.records(&inputs.records_path()?)?;
    let (seqs, totals) = preprocess_records(&records, &towers, &filter_for(cfg, &net));
    let (text, csv) = totals_report(&totals);
    write_atomic(out, "sequences.csv", sequences_csv(&seqs).as_bytes())?;
    write_atomic(out, "preprocess.csv", csv.as_bytes())?;
    write_manifest(out, "preprocess", cfg, &reads, &["sequences.csv", "preprocess.csv"])?;
    print!("{text}");
    Ok(())
}

/// Sequences to match: `--sequences` as already filtered, else `--records`
/// run through the filters.
fn load_sequences(cfg: &RunConfig, reads: &mut Reads, inputs: &Inputs, filtered: Option<&Path>, net: &RoadNetwork, towers: &TowerMap) -> Result<Vec<TowerSequence>> {
    Ok(match filtered {
        Some(p) => build_sequences(&reads.records(p)?).sequences,
        None => {
            let records = reads.records(&inputs.records_path()?)?;
            let (seqs, totals) = preprocess_records(&records, towers, &filter_for(cfg, net));
            log::info!("{}", totals_report(&totals).0.trim_end());
            seqs
        }
    })
}

pub fn match_cmd(cfg: &RunConfig, inputs: &Inputs, sequences: Option<&Path>, debug_json: bool, out: &Path) -> Result<()> {
    let mut reads = Reads::default();
    let net = reads.network(&inputs.network_path()?)?;
    let towers = reads.towers(&inputs.towers_path()?, &net)?;
    let seqs = load_sequences(cfg, &mut reads, inputs, sequences, &net, &towers)?;
    let t = Instant::now();
    let matched = match_all(&seqs, &towers, &net, &cfg.matching, cfg.matching.m_max);
    log::info!("matched {} sequences in {:.2}s", seqs.len(), t.elapsed().as_secs_f64());

    let mut rows = String::from("sequence_id,candidates,anchors,top_length_m\n");
    for s in &matched.sets {
        let top = &s.candidates[0];
        writeln!(rows, "{},{},{},{:.1}", s.sequence_id, s.candidates.len(), top.anchors.len(), top.length_m())?;
    }
    let mut failed = String::from("sequence_id,error\n");
    for (id, e) in &matched.failures {
        writeln!(failed, "{id},{}", e.to_string().replace(',', ";"))?;
    }
    let store = write_store(&matched.sets).context("encoding candidate store")?;
    write_atomic(out, "candidates.store", &store)?;
    write_atomic(out, "matched.csv", rows.as_bytes())?;
    write_atomic(out, "failures.csv", failed.as_bytes())?;
    let mut outputs = vec!["candidates.store", "matched.csv", "failures.csv"];
    if debug_json {
        let body: Vec<String> = matched.sets.iter().map(to_debug_json).collect();
        write_atomic(out, "candidates.json", format!("[\n{}\n]\n", body.join(",\n")).as_bytes())?;
        outputs.push("candidates.json");
    }
    write_manifest(out, "match", cfg, &reads, &outputs)?;
    let cands: usize = matched.sets.iter().map(|s| s.candidates.len()).sum();
    println!(
        "sequences {}, matched {}, failed {}, candidates {} ({} bytes stored)",
        seqs.len(),
        matched.sets.len(),
        matched.failures.len(),
        cands,
        store.len()
    );
    Ok(())
}

fn load_store(reads: &mut Reads, path: &Path) -> Result<Vec<CandidateSet>> {
    read_store(&reads.bytes(path)?).with_context(|| format!("decoding {}", path.display()))
}

pub fn index(cfg: &RunConfig, inputs: &Inputs, store: &Path, out: &Path) -> Result<()> {
    let mut reads = Reads::default();
    let net = reads.network(&inputs.network_path()?)?;
    let sets = load_store(&mut reads, store)?;
    let idx = SearchIndex::build(&sets, &net);
    let mut rows = String::from("id,candidates,length_m,m,start_time,end_time,start_x,start_y,end_x,end_y\n");
    for e in &idx.entries {
        let len = e.timed[0].length_m;
        let (s, f) = (e.summary.start, e.summary.end);
        writeln!(
            rows,
            "{},{},{:.1},{},{},{},{:.1},{:.1},{:.1},{:.1}",
            e.id,
            e.timed.len(),
            len,
            adapt_m(len, &cfg.search),
            s.time,
            f.time,
            s.point.x,
            s.point.y,
            f.point.x,
            f.point.y
        )?;
    }
    write_atomic(out, "index.csv", rows.as_bytes())?;
    write_manifest(out, "index", cfg, &reads, &["index.csv"])?;
    let total: f64 = idx.entries.iter().map(|e| e.timed[0].length_m).sum();
    println!("entries {}, top-candidate length {:.1} km", idx.entries.len(), total / 1000.0);
    Ok(())
}

fn report(runs: &[(String, Result<SearchOutcome, celltraj_core::simsearch::SearchError>)], tau: f64) -> (String, String) {
    let mut text = String::new();
    let mut csv = String::from("query_id,result_id,similarity,query_rank,entry_rank\n");
    let (mut hits, mut failed) = (0, 0);
    for (q, r) in runs {
        match r {
            Ok(o) => {
                let s = o.stats;
                let _ = writeln!(
                    text,
                    "query {q}: {} result(s) at tau {tau} (M {}, entries {}, skipped globally {}, pairs {}, cut early {})",
                    o.results.len(),
                    s.m,
                    s.entries,
                    s.skipped_globally,
                    s.pairs_evaluated,
                    s.pairs_cut
                );
                for x in &o.results {
                    // ranks count from 1 in reports
                    let (qr, er) = (x.query_rank + 1, x.entry_rank + 1);
                    let _ = writeln!(text, "  {}  similarity {:.4}  candidate ranks {qr}/{er}", x.id, x.similarity);
                    let _ = writeln!(csv, "{q},{},{:.6},{qr},{er}", x.id, x.similarity);
                }
                if o.results.is_empty() {
                    let _ = writeln!(csv, "{q},,,,");
                }
                hits += o.results.len();
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(text, "query {q}: failed: {e}");
                let _ = writeln!(csv, "{q},,,,");
            }
        }
    }
    let _ = writeln!(text, "{} queries, {hits} results, {failed} failed", runs.len());
    (text, csv)
}

pub fn query(cfg: &RunConfig, inputs: &Inputs, store: &Path, gps: Option<&Path>, all: bool, out: &Path) -> Result<()> {
    let mut reads = Reads::default();
    let net = reads.network(&inputs.network_path()?)?;
    let towers = reads.towers(&inputs.towers_path()?, &net)?;
    let idx = SearchIndex::build(&load_store(&mut reads, store)?, &net);
    let queries: Vec<TimedSet> = if all {
        idx.entries.clone()
    } else if let Some(p) = gps {
        let fixes = reads.gps(p, &net)?;
        let id = p.file_stem().map_or("gps".into(), |s| s.to_string_lossy().into_owned());
        let obs = observations_from_gps(&fixes, &cfg.matching);
        let set = expand_observations(&id, &obs, &net, &cfg.matching, cfg.matching.m_max)
            .map_err(|e| anyhow!("matching {}: {e}", p.display()))?;
        vec![TimedSet::new(&set, &net)]
    } else if inputs.records.is_some() {
        let seqs = load_sequences(cfg, &mut reads, inputs, None, &net, &towers)?;
        let matched = match_all(&seqs, &towers, &net, &cfg.matching, cfg.matching.m_max);
        for (id, e) in &matched.failures {
            log::warn!("query {id} not matched: {e}");
        }
        matched.sets.iter().map(|s| TimedSet::new(s, &net)).collect()
    } else {
        bail!("no query: pass --records, --gps or --all");
    };
    let t = Instant::now();
    let runs = run_queries(&queries, &idx, &towers, &cfg.search);
    log::info!("{} queries in {:.2}s", runs.len(), t.elapsed().as_secs_f64());
    let (text, csv) = report(&runs, cfg.search.tau);
    write_atomic(out, "report.txt", text.as_bytes())?;
    write_atomic(out, "results.csv", csv.as_bytes())?;
    write_manifest(out, "query", cfg, &reads, &["report.txt", "results.csv"])?;
    print!("{text}");
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let w = synthesize_benchmark(&cfg.benchmark).context("generating world")?;
    write_world(&w, out).context("writing world")?;
    write_manifest(out, "simulate", cfg, &Reads::default(), &["network.json", "towers.csv", "records.csv", "truth.json", "config.json"])?;
    println!(
        "seed {}: {} segments, {} towers, {} groups, {} members, {} records, noise {:?}",
        cfg.benchmark.seed,
        w.network.segments().len(),
        w.towers.towers().len(),
        w.truth.groups().len(),
        w.truth.members.len(),
        w.records.len(),
        w.noise
    );
    Ok(())
}

/// Reads `results.csv`; a row with an empty result id marks a query that
/// returned nothing.
fn parse_results(text: &str, origin: &Path) -> Result<Vec<QueryOutcome>> {
    let mut by_query: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut f = line.split(',');
        let (Some(q), Some(r)) = (f.next(), f.next()) else {
            bail!("{}:{}: expected query_id,result_id,...", origin.display(), n + 1);
        };
        let e = by_query.entry(q.to_string()).or_default();
        if !r.is_empty() {
            e.push(r.to_string());
        }
    }
    Ok(by_query.into_iter().map(|(query_id, returned)| QueryOutcome { query_id, returned }).collect())
}

pub fn evaluate(cfg: &RunConfig, world: &Path, store: &Path, results: Option<&Path>, out: &Path) -> Result<()> {
    let mut reads = Reads::default();
    for f in ["network.json", "towers.csv", "records.csv", "truth.json"] {
        reads.bytes(&world.join(f))?;
    }
    let w = read_world(world).with_context(|| format!("loading world {}", world.display()))?;
    let sets = load_store(&mut reads, store)?;
    let top: Vec<_> = sets.iter().map(|s| (s.sequence_id.clone(), s.candidates[0].clone())).collect();
    let mm = evaluate_matching(&top, &w.truth, &w.network);
    let mut text = format!(
        "matching: precision {:.4}, recall {:.4} over {} sequences ({:.1} km matched, {:.1} km true, {} unknown)\n",
        mm.precision,
        mm.recall,
        mm.sequences,
        mm.matched_m / 1000.0,
        mm.truth_m / 1000.0,
        mm.unknown
    );
    let mut csv = format!(
        "metric,value\nmatching_precision,{:.6}\nmatching_recall,{:.6}\nmatched_sequences,{}\n",
        mm.precision, mm.recall, mm.sequences
    );
    let outputs = ["metrics.txt", "metrics.csv"];
    if let Some(p) = results {
        let outcomes = parse_results(&reads.text(p)?, p)?;
        let indexed: BTreeSet<String> = sets.iter().map(|s| s.sequence_id.clone()).collect();
        let sm = evaluate_search(&outcomes, &w.truth, &indexed);
        let _ = writeln!(
            text,
            "search: precision {:.4}, recall {:.4}, F {:.4} over {} queries ({} without other group members, {} empty)",
            sm.precision, sm.recall, sm.f_measure, sm.queries, sm.excluded_empty_group, sm.empty_results
        );
        let _ = write!(
            csv,
            "precision,{:.6}\nrecall,{:.6}\nf_measure,{:.6}\nqueries,{}\nexcluded_empty_group,{}\nempty_results,{}\n",
            sm.precision, sm.recall, sm.f_measure, sm.queries, sm.excluded_empty_group, sm.empty_results
        );
    }
    write_atomic(out, "metrics.txt", text.as_bytes())?;
    write_atomic(out, "metrics.csv", csv.as_bytes())?;
    write_manifest(out, "evaluate", cfg, &reads, &outputs)?;
    print!("{text}");
    Ok(())
}

pub fn bench(cfg: &RunConfig, groups: &[usize], sweep: &[usize], queries: usize, out: &Path) -> Result<()> {
    if groups.is_empty() || sweep.is_empty() || sweep.contains(&0) {
        bail!("--groups and --sweep need positive values");
    }
    let mut csv = String::from("stage,groups,sequences,workers,variant,seconds,per_second\n");
    let mut text = String::new();
    for &g in groups {
        let mut bc = cfg.benchmark.clone();
        bc.group_count = g;
        let w = synthesize_benchmark(&bc).context("generating world")?;
        let (seqs, _) = preprocess_records(&w.records, &w.towers, &filter_for(cfg, &w.network));
        let mut sets = Vec::new();
        let mut base = None;
        for &workers in sweep {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
            let t = Instant::now();
            let matched = pool.install(|| match_all(&seqs, &w.towers, &w.network, &cfg.matching, cfg.matching.m_max));
            let secs = t.elapsed().as_secs_f64();
            let rate = seqs.len() as f64 / secs;
            let speedup = rate / *base.get_or_insert(rate);
            writeln!(csv, "match,{g},{},{workers},,{secs:.4},{rate:.1}", seqs.len())?;
            writeln!(text, "match   groups {g:>5} sequences {:>6} workers {workers:>2}: {secs:>8.3}s {rate:>9.1}/s speedup {speedup:.2}", seqs.len())?;
            sets = matched.sets;
        }
        let idx = SearchIndex::build(&sets, &w.network);
        let mut rng = ChaCha8Rng::seed_from_u64(bc.seed);
        let picked: Vec<TimedSet> = idx.entries.choose_multiple(&mut rng, queries.min(idx.entries.len())).cloned().collect();
        let mut first: Option<Vec<Vec<(String, u64)>>> = None;
        let mut agree = true;
        for (variant, global, local) in [("none", false, false), ("global", true, false), ("local", false, true), ("both", true, true)] {
            let sc = SearchConfig { global_pruning: global, local_pruning: local, ..cfg.search.clone() };
            let t = Instant::now();
            let runs = run_queries(&picked, &idx, &w.towers, &sc);
            let secs = t.elapsed().as_secs_f64();
            let rows: Vec<Vec<(String, u64)>> = runs
                .iter()
                .map(|(_, r)| r.as_ref().map(|o| o.results.iter().map(|x| (x.id.clone(), x.similarity.to_bits())).collect()).unwrap_or_default())
                .collect();
            agree &= first.get_or_insert_with(|| rows.clone()) == &rows;
            let rate = picked.len() as f64 / secs;
            writeln!(csv, "query,{g},{},{},{variant},{secs:.4},{rate:.2}", idx.entries.len(), cfg.workers)?;
            writeln!(text, "query   groups {g:>5} entries   {:>6} pruning {variant:<6}: {secs:>8.3}s {rate:>9.2}/s", idx.entries.len())?;
        }
        writeln!(text, "pruning variants return identical results: {}", if agree { "yes" } else { "NO" })?;
    }
    write_atomic(out, "bench.csv", csv.as_bytes())?;
    write_atomic(out, "bench.txt", text.as_bytes())?;
    write_manifest(out, "bench", cfg, &Reads::default(), &["bench.csv", "bench.txt"])?;
    print!("{text}");
    Ok(())
}
