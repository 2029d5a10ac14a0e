//! The pipeline commands. Each returns the numerical-failure flags it raised
//! (non-converged solvers), which `--strict` turns into exit code 4.

use std::fmt::Write as _;

use popvec::classify::{run_experiment_with_source, EvalReport, KernelSource, EVAL_HEADER};
use popvec::dataio::csv::{
    fmt_float, read_partition, write_file, write_labels, write_partition, write_response_matrix, CsvBuf, Table,
};
use popvec::dataio::{euclidean_distances, LabelVector};
use popvec::embed::{scatter_svg, tsne, write_embedding, Coloring};
use popvec::preprocess::{
    build_population_vectors, estimate_count_windows, read_spike_times, write_spike_times, write_windows,
};
use popvec::rng::stream_rng;
use popvec::stimfeat::{
    bin_labels, default_position_cuts, extract_features, quantile_cut, write_features, ClassScheme, SchemeKind,
};
use popvec::stimgen::{
    generate_stimulus_set, read_manifest, render, sample_units, simulate_spike_trains, write_manifest, write_units,
    StimulusDrive, StimulusImage,
};
use popvec::sweep::{
    append_rows, external_result, internal_result, run_grid, SweepData, SweepGrid, SweepResult, SWEEP_HEADER,
};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Stage;
use crate::error::{CliError, CliResult};
use crate::layout::{self, write_text, Ctx};

pub type Flags = Vec<String>;

fn unit_ids(n: usize) -> Vec<String> {
    (0..n).map(|u| format!("u{u:03}")).collect()
}

pub fn generate(ctx: &Ctx) -> CliResult<Flags> {
    let g = &ctx.cfg.generate;
    let seed = ctx.cfg.run.seed;
    let header = ctx.header("generate");
    let canvas = g.canvas();
    let model = g.model();
    let params = generate_stimulus_set(seed);
    let ids: Vec<String> = params.iter().map(|p| p.stimulus_id.to_string()).collect();
    let features = params
        .par_iter()
        .zip(&ids)
        .map(|(p, id)| {
            let img = render(p, canvas)?;
            img.write_pgm(&ctx.path(&layout::image(id)), Some(&header))?;
            extract_features(&img)
        })
        .collect::<popvec::Result<Vec<_>>>()?;
    let drives: Vec<StimulusDrive> = features
        .iter()
        .map(|f| StimulusDrive::from_features(f, canvas, model.luminance_scale))
        .collect();
    let units = sample_units(g.n_units, seed, &g.population())?;
    let uids = unit_ids(units.len());
    let (trains, clamped) = simulate_spike_trains(&drives, &units, g.repetitions, seed, &model, ids, uids.clone())?;

    write_manifest(&ctx.path(layout::MANIFEST), &params, Some(&header))?;
    write_units(&ctx.path(layout::UNITS), &uids, &units, Some(&header))?;
    write_spike_times(&ctx.path(layout::SPIKES), &trains, Some(&header))?;
    let summary = format!(
        "stimuli {}\nunits {}\nrepetitions {}\nspikes {}\nclamped_rates {}\n",
        trains.n_stimuli(),
        trains.n_units(),
        g.repetitions,
        trains.total_spikes(),
        clamped
    );
    write_text(&ctx.path(layout::GENERATE_SUMMARY), &header, &summary)?;
    if clamped > 0 {
        log::warn!("{clamped} (stimulus, unit) rates were negative and clamped to 0");
    }
    Ok(Vec::new())
}

pub fn preprocess(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("preprocess");
    let spikes = if ctx.cfg.paths.spike_times.is_empty() {
        ctx.require(layout::SPIKES, "generate")?
    } else {
        let p = std::path::PathBuf::from(&ctx.cfg.paths.spike_times);
        if !p.exists() {
            return Err(CliError::Missing {
                path: p,
                producer: "generate",
            });
        }
        p
    };
    let trains = read_spike_times(&spikes, None, None, None)?;
    let estimates = estimate_count_windows(&trains)?;
    let silent = estimates.iter().filter(|e| e.silent).count();
    if silent > 0 {
        log::warn!("{silent} silent units use the reference window");
    }
    let windows: Vec<_> = estimates.iter().map(|e| e.window).collect();
    let rm = build_population_vectors::<f64>(&trains, &windows)?;
    write_windows(&ctx.path(layout::WINDOWS), &trains.unit_ids, &windows, Some(&header))?;
    write_response_matrix(&ctx.path(layout::RESPONSES), &rm, Some(&header))?;
    Ok(Vec::new())
}

pub fn features(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("features");
    let g = &ctx.cfg.generate;
    let params = read_manifest(&ctx.require(layout::MANIFEST, "generate")?)?;
    let ids: Vec<String> = params.iter().map(|p| p.stimulus_id.to_string()).collect();
    let paths = ids
        .iter()
        .map(|id| ctx.require(&layout::image(id), "generate"))
        .collect::<CliResult<Vec<_>>>()?;
    let features = paths
        .par_iter()
        .map(|p| extract_features(&StimulusImage::read_pgm(p, g.deg_per_px)?))
        .collect::<popvec::Result<Vec<_>>>()?;

    let pos_cuts = match ctx.cfg.features.position_cuts()? {
        Some(c) => c,
        None => default_position_cuts(g.canvas()),
    };
    let l_tot: Vec<f64> = features.iter().map(|f| f.l_tot).collect();
    let lum_cut = match ctx.cfg.features.luminosity_cut()? {
        Some(c) => c,
        None => quantile_cut(&l_tot, ctx.cfg.features.luminosity_quantile)?,
    };
    write_features(&ctx.path(layout::FEATURES), &ids, &features, Some(&header))?;
    let mut thresholds = format!(
        "position_cuts_px {},{}\nluminosity_cut {}\n",
        fmt_float(pos_cuts[0]),
        fmt_float(pos_cuts[1]),
        fmt_float(lum_cut)
    );
    for kind in SchemeKind::ALL {
        let scheme = match kind {
            SchemeKind::Position => ClassScheme::position(pos_cuts),
            SchemeKind::Luminosity => ClassScheme::luminosity(lum_cut),
            SchemeKind::PositionLuminosity => ClassScheme::combined(pos_cuts, lum_cut),
        }
        .map_err(|e| CliError::Config(format!("features: {e}")))?;
        let labels = bin_labels(&features, &scheme);
        let counts: Vec<String> = labels.class_counts().iter().map(usize::to_string).collect();
        let _ = writeln!(thresholds, "class_counts_{} {}", kind.name(), counts.join(","));
        write_labels(&ctx.path(&layout::labels(kind)), &ids, &labels, Some(&header))?;
    }
    write_text(&ctx.path(layout::THRESHOLDS), &header, &thresholds)?;
    Ok(Vec::new())
}

pub const WINNERS_HEADER: [&str; 13] = [
    "criterion",
    "scheme",
    "algorithm",
    "params",
    "k",
    "noise",
    "sil",
    "ari",
    "ami",
    "purity",
    "fallback_used",
    "partition",
    "diagnostic",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_float)
}

fn winner_row(out: &mut CsvBuf, criterion: &str, scheme: &str, r: &SweepResult, partition: &str) {
    let row = r.winning_row();
    let ext = row.and_then(|w| w.external);
    let diagnostic = r.diagnostic.clone().unwrap_or_default().replace(',', ";");
    out.row([
        criterion.to_string(),
        scheme.to_string(),
        r.algorithm.name().to_string(),
        row.map_or_else(String::new, |w| w.params.to_string()),
        row.map_or_else(String::new, |w| w.k.to_string()),
        row.map_or_else(String::new, |w| w.noise.to_string()),
        opt(row.and_then(|w| w.sil)),
        opt(ext.map(|e| e.ari)),
        opt(ext.map(|e| e.ami)),
        opt(ext.map(|e| e.purity)),
        u8::from(r.fallback_used).to_string(),
        if row.is_some() {
            partition.to_string()
        } else {
            String::new()
        },
        diagnostic,
    ]);
}

pub fn sweep(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("sweep");
    let s = &ctx.cfg.sweep;
    let rm = ctx.responses()?;
    let schemes = s.schemes()?;
    let labels = schemes
        .iter()
        .map(|&k| ctx.labels(k, &rm.stimulus_ids))
        .collect::<CliResult<Vec<_>>>()?;
    let d = euclidean_distances(&rm.values)?;
    let data = SweepData {
        matrix: &rm.values,
        distances: &d,
    };
    let spec = s.grid_spec();
    let mut tables: Vec<CsvBuf> = schemes
        .iter()
        .map(|_| CsvBuf::new(Some(&header), &SWEEP_HEADER))
        .collect();
    let mut winners = CsvBuf::new(Some(&header), &WINNERS_HEADER);
    let mut flags = Vec::new();
    for alg in s.algorithms()? {
        let mut grid = SweepGrid::new(alg, spec.points(alg, &d), ctx.cfg.stage_seed(Stage::Sweep))?;
        grid.ds_min_cluster_size = s.ds_min_cluster_size;
        grid.ds_max_clusters = (s.ds_max_clusters > 0).then_some(s.ds_max_clusters);
        grid.k_restarts = s.k_restarts;
        grid.k_max_iter = s.k_max_iter;
        grid.validate()?;
        log::info!("sweeping {} over {} settings", alg.name(), grid.points.len());
        let run = run_grid(data, &grid)?;
        let stalled = run.converged.iter().filter(|&&c| !c).count();
        if stalled > 0 {
            flags.push(format!(
                "{}: {stalled} of {} settings did not converge",
                alg.name(),
                run.converged.len()
            ));
        }
        let internal = internal_result(&run, s.min_class_size);
        if let Some(w) = internal.winner {
            write_partition(
                &ctx.path(&layout::internal_partition(alg)),
                &rm.stimulus_ids,
                &run.partitions[w],
                Some(&header),
            )?;
        }
        winner_row(
            &mut winners,
            "internal",
            "",
            &internal,
            &layout::internal_partition(alg),
        );
        for ((&kind, l), table) in schemes.iter().zip(&labels).zip(&mut tables) {
            let external = external_result(&run, l)?;
            append_rows(table, &internal, &external);
            let rel = layout::external_partition(kind, alg);
            if let Some(w) = external.winner {
                write_partition(&ctx.path(&rel), &rm.stimulus_ids, &run.partitions[w], Some(&header))?;
            }
            winner_row(&mut winners, "external", kind.name(), &external, &rel);
        }
    }
    for (&kind, table) in schemes.iter().zip(&tables) {
        table.write(&ctx.path(&layout::sweep_table(kind)))?;
    }
    winners.write(&ctx.path(layout::WINNERS))?;
    Ok(flags)
}

#[derive(Serialize)]
struct EvalJson<'a> {
    config_hash: &'a str,
    reports: &'a [EvalReport],
    controls: &'a [EvalReport],
}

fn shuffled(labels: &LabelVector, seed: u64, stream: u64) -> LabelVector {
    let mut l = labels.clone();
    l.labels.shuffle(&mut stream_rng(seed, stream));
    l
}

pub const CONTROL_HEADER: [&str; 5] = ["scheme", "majority_rate", "best_classifier", "best_acc", "difference"];

pub fn classify(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("classify");
    let c = &ctx.cfg.classify;
    let rm = ctx.responses()?;
    let specs = c.specs()?;
    let source = KernelSource::new(&rm.values);
    let n_features = rm.values.cols();
    let plan = c.plan(ctx.cfg.stage_seed(Stage::Classify));
    let mut flags = Vec::new();
    let check = |r: &EvalReport, flags: &mut Flags| {
        for res in &r.results {
            let stalled = res.splits.iter().filter(|s| !s.converged).count();
            if stalled > 0 {
                flags.push(format!(
                    "{} on {}: {stalled} splits with non-converged SVMs",
                    res.kind.name(),
                    r.scheme
                ));
            }
        }
    };

    let mut reports = Vec::new();
    for kind in c.schemes()? {
        let labels = ctx.labels(kind, &rm.stimulus_ids)?;
        log::info!("classifying {}", kind.name());
        let r = run_experiment_with_source(&source, n_features, &labels, kind.name(), &specs, &plan)?;
        check(&r, &mut flags);
        reports.push(r);
    }
    let mut eval = CsvBuf::new(Some(&header), &EVAL_HEADER);
    reports.iter().for_each(|r| r.append_csv(&mut eval));
    eval.write(&ctx.path(layout::EVAL_CSV))?;

    let mut controls = Vec::new();
    let mut control_csv = CsvBuf::new(Some(&header), &EVAL_HEADER);
    let mut summary = CsvBuf::new(Some(&header), &CONTROL_HEADER);
    let control_schemes = if c.control_schemes.is_empty() {
        Vec::new()
    } else {
        c.control_schemes()?
    };
    for kind in control_schemes {
        let labels = ctx.labels(kind, &rm.stimulus_ids)?;
        let permuted = shuffled(&labels, ctx.cfg.stage_seed(Stage::Control), kind as u64);
        let name = format!("{}_shuffled", kind.name());
        log::info!("classifying {name}");
        let r = run_experiment_with_source(&source, n_features, &permuted, &name, &specs, &plan)?;
        check(&r, &mut flags);
        r.append_csv(&mut control_csv);
        let majority = *labels.class_counts().iter().max().unwrap_or(&0) as f64 / labels.len() as f64;
        if let Some(best) = r.best_accuracy() {
            summary.row([
                kind.name().to_string(),
                fmt_float(majority),
                best.kind.name().to_string(),
                fmt_float(best.mean.acc),
                fmt_float(best.mean.acc - majority),
            ]);
        }
        controls.push(r);
    }
    control_csv.write(&ctx.path(layout::CONTROL_CSV))?;
    summary.write(&ctx.path(layout::CONTROL_SUMMARY))?;

    let json = serde_json::to_string_pretty(&EvalJson {
        config_hash: &ctx.hash,
        reports: &reports,
        controls: &controls,
    })
    .expect("report serializes");
    write_file(&ctx.path(layout::EVAL_JSON), format!("{json}\n").as_bytes())?;
    Ok(flags)
}

fn svg_with_header(header: &str, svg: String) -> String {
    format!("<!-- {header} -->\n{svg}")
}

pub fn embed(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("embed");
    let rm = ctx.responses()?;
    let winners = Table::read(&ctx.require(layout::WINNERS, "sweep")?)?;
    winners.expect_header(&WINNERS_HEADER)?;
    let labels = SchemeKind::ALL
        .iter()
        .map(|&k| ctx.labels(k, &rm.stimulus_ids))
        .collect::<CliResult<Vec<_>>>()?;

    let d = euclidean_distances(&rm.values)?;
    let e = tsne(&d, &ctx.cfg.embed.tsne(ctx.cfg.stage_seed(Stage::Embed)))?;
    write_embedding(&ctx.path(layout::EMBEDDING), &rm.stimulus_ids, &e, Some(&header))?;
    for (kind, l) in SchemeKind::ALL.iter().zip(&labels) {
        let svg = scatter_svg(
            &e,
            Coloring::Labels(l),
            &format!("t-SNE map colored by {} class", kind.name()),
        )?;
        write_file(
            &ctx.path(&layout::scheme_map(*kind)),
            svg_with_header(&header, svg).as_bytes(),
        )?;
    }
    for r in 0..winners.rows.len() {
        let rel = winners.text(r, 11);
        if rel.is_empty() {
            continue;
        }
        let (ids, p) = read_partition(&ctx.require(rel, "sweep")?)?;
        if ids != rm.stimulus_ids {
            return Err(popvec::Error::Shape(format!("{rel} does not match the response matrix stimuli")).into());
        }
        let (criterion, scheme, alg) = (winners.text(r, 0), winners.text(r, 1), winners.text(r, 2));
        let title = if scheme.is_empty() {
            format!("{alg} {criterion} winner ({})", winners.text(r, 3))
        } else {
            format!("{alg} {criterion} winner for {scheme} ({})", winners.text(r, 3))
        };
        let name = std::path::Path::new(rel)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("partition");
        let svg = scatter_svg(&e, Coloring::Partition(&p), &title)?;
        write_file(
            &ctx.path(&format!("embed/map_{name}.svg")),
            svg_with_header(&header, svg).as_bytes(),
        )?;
    }
    Ok(Vec::new())
}

fn table_text(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x:.3}"))
}

fn summary_text(ctx: &Ctx) -> CliResult<String> {
    let mut out = String::new();
    let thresholds = std::fs::read_to_string(ctx.require(layout::THRESHOLDS, "features")?)
        .map_err(|e| CliError::io("reading thresholds", e))?;
    out.push_str("Class distributions\n");
    for line in thresholds.lines().filter(|l| !l.starts_with('#')) {
        let _ = writeln!(out, "  {line}");
    }

    let winners = Table::read(&ctx.require(layout::WINNERS, "sweep")?)?;
    let pick = |criterion: &str| -> Vec<Vec<String>> {
        winners
            .rows
            .iter()
            .filter(|(_, r)| r[0] == criterion)
            .map(|(_, r)| r.clone())
            .collect()
    };
    out.push_str("\nInternal criterion (max SIL)\n");
    let mut rows = vec![vec![
        "algorithm".into(),
        "params".into(),
        "K".into(),
        "noise".into(),
        "SIL".into(),
        "fallback".into(),
    ]];
    for r in pick("internal") {
        rows.push(vec![
            r[2].clone(),
            r[3].clone(),
            r[4].clone(),
            r[5].clone(),
            short(&r[6]),
            r[10].clone(),
        ]);
    }
    out.push_str(&table_text(&rows));
    out.push_str("\nExternal criterion (max ARI)\n");
    let mut rows = vec![["scheme", "algorithm", "params", "K", "ARI", "AMI", "Purity"]
        .map(String::from)
        .to_vec()];
    for r in pick("external") {
        rows.push(vec![
            r[1].clone(),
            r[2].clone(),
            r[3].clone(),
            r[4].clone(),
            short(&r[7]),
            short(&r[8]),
            short(&r[9]),
        ]);
    }
    out.push_str(&table_text(&rows));

    let eval = Table::read(&ctx.require(layout::EVAL_CSV, "classify")?)?;
    out.push_str("\nClassifier performance (mean ± std over splits)\n");
    let mut rows = vec![["scheme", "classifier", "ACC", "AUC", "mF1", "MF1", "params (mode)"]
        .map(String::from)
        .to_vec()];
    for chunk in eval.rows.chunks(4) {
        let first = &chunk[0].1;
        let mut row = vec![first[0].clone(), first[1].clone()];
        for (_, r) in chunk {
            row.push(format!("{}±{}", short(&r[3]), short(&r[4])));
        }
        row.push(first[5].clone());
        rows.push(row);
    }
    out.push_str(&table_text(&rows));

    let control = Table::read(&ctx.require(layout::CONTROL_SUMMARY, "classify")?)?;
    if !control.rows.is_empty() {
        out.push_str("\nShuffled-label control\n");
        let mut rows = vec![["scheme", "majority rate", "best classifier", "best ACC", "difference"]
            .map(String::from)
            .to_vec()];
        for (_, r) in &control.rows {
            rows.push(vec![
                r[0].clone(),
                short(&r[1]),
                r[2].clone(),
                short(&r[3]),
                short(&r[4]),
            ]);
        }
        out.push_str(&table_text(&rows));
    }

    let embedding = ctx.require(layout::EMBEDDING, "embed")?;
    let _ = writeln!(
        out,
        "\nEmbedding: {}",
        embedding.strip_prefix(&ctx.root).unwrap_or(&embedding).display()
    );
    if let Ok(gen) = std::fs::read_to_string(ctx.path(layout::GENERATE_SUMMARY)) {
        out.push_str("\nGenerator\n");
        for line in gen.lines().filter(|l| !l.starts_with('#')) {
            let _ = writeln!(out, "  {line}");
        }
    }
    Ok(out)
}

pub fn report(ctx: &Ctx) -> CliResult<Flags> {
    let header = ctx.header("report");
    let text = summary_text(ctx)?;
    write_text(&ctx.path(layout::SUMMARY), &header, &text)?;

    let archive = ctx.path(layout::ARCHIVE);
    let mut files: Vec<std::path::PathBuf> = walkdir::WalkDir::new(&ctx.root)
        .sort_by_file_name()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::io("listing artifacts", e.into()))?
        .into_iter()
        .filter(|e| e.file_type().is_file() && e.path() != archive)
        .map(|e| e.into_path())
        .collect();
    // the summary leads so the archive opens with the config hash
    let summary = ctx.path(layout::SUMMARY);
    files.retain(|p| *p != summary);
    files.insert(0, summary);

    let mut builder = tar::Builder::new(Vec::new());
    for path in &files {
        let rel = path.strip_prefix(&ctx.root).expect("inside workdir");
        let data = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let mut h = tar::Header::new_ustar();
        h.set_size(data.len() as u64);
        h.set_mode(0o644);
        h.set_mtime(0);
        h.set_uid(0);
        h.set_gid(0);
        h.set_entry_type(tar::EntryType::Regular);
        builder
            .append_data(&mut h, rel, data.as_slice())
            .map_err(|e| CliError::io(format!("archiving {}", rel.display()), e))?;
    }
    let bytes = builder.into_inner().map_err(|e| CliError::io("finishing archive", e))?;
    write_file(&archive, &bytes)?;
    print!("{text}");
    Ok(Vec::new())
}
