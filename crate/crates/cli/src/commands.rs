use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use urbanforge::ingest::{filter_by_mask, ingest_map, legend_ranges, render_annotated, BinaryMask, RasterImage};
use urbanforge::io::{inventory_to_json, layout_to_json, read_layout};
use urbanforge::metrics::{format_table, Evaluator, SubRegion, CSV_HEADER};
use urbanforge::model::DemographicKind;
use urbanforge::planners::{plan_round, CompletionError, HeuristicPlanner, HttpCompletionClient, LlmPlanner, PlannerError, RegionalPlanner};
use urbanforge::solver::{open_slots, release_unassigned, trace_csv};
use urbanforge::{CityLayout, MetricsReport, Real, Solver};

use crate::config::{Backend, OnLlmError, PipelineConfig};
use crate::CliError;

pub const INVENTORY: &str = "inventory.json";
pub const TRACE: &str = "trace.csv";
pub const METRICS: &str = "metrics.csv";
pub const DECISIONS: &str = "decisions.jsonl";
pub const PLAN_METRICS: &str = "plan_metrics.csv";

pub fn layout_file(stage: usize) -> String {
    format!("stage{stage}_layout.json")
}

pub fn image_file(stage: usize) -> String {
    format!("stage{stage}.png")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_png(layout: &CityLayout, path: &Path) -> Result<(), CliError> {
    let canvas = layout
        .canvas()
        .ok_or_else(|| CliError::Input("layout has no canvas size; cannot render".into()))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    render_annotated(layout, canvas)?.save_png(path)?;
    Ok(())
}

pub fn load_layout(path: &Path) -> Result<CityLayout, CliError> {
    read_layout(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Per-type region counts, one `Type: n` line each.
pub fn region_counts(layout: &CityLayout) -> String {
    let mut out = format!("{} regions\n", layout.len());
    for (t, n) in layout.role_multiset() {
        out.push_str(&format!("  {t}: {n}\n"));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub mask: Option<PathBuf>,
}

/// Map image to region inventory. Writes `inventory.json`.
pub fn cmd_ingest(cfg: &PipelineConfig, opts: &IngestOptions) -> Result<CityLayout, CliError> {
    let map = cfg.require_map()?;
    let img = RasterImage::from_png(map)?;
    let ranges = legend_ranges(cfg.ingest.tolerance(), &cfg.ingest.legend);
    let mut layout = ingest_map(&img, &ranges, cfg.ingest.min_area, cfg.scale)?;
    if let Some(mask_path) = &opts.mask {
        let mask = BinaryMask::from_png(mask_path)?;
        let kept = filter_by_mask(layout.regions(), &mask, img.canvas())?;
        layout = CityLayout::new(kept, cfg.scale)?.with_canvas(img.canvas())?;
    }
    write_file(&cfg.out_path(INVENTORY), &inventory_to_json(&layout))?;
    print!("{}", region_counts(&layout));
    Ok(layout)
}

/// Greedy placement plus GA refinement. Writes `stage2_layout.json` and `trace.csv`.
pub fn cmd_optimize(cfg: &PipelineConfig, layout: &CityLayout) -> Result<CityLayout, CliError> {
    let (state0, players) = open_slots(layout, &cfg.solver.players, &cfg.solver.limits());
    let mut solver = Solver::new(cfg.solver.ga.clone(), cfg.services()?)?;
    solver.weighting = cfg.metrics.weighting;
    let run = solver.optimize(&state0, &players)?;
    log::info!("greedy fitness {:.6}, final fitness {:.6}", run.greedy_fitness, run.fitness);
    let mut out = run.layout;
    release_unassigned(&mut out);
    write_file(&cfg.out_path(&layout_file(2)), &layout_to_json(&out))?;
    write_file(&cfg.out_path(TRACE), &trace_csv(&run.trace))?;
    Ok(out)
}

fn whole_city_mask(layout: &CityLayout) -> BinaryMask {
    let canvas = layout.canvas().unwrap_or_else(|| {
        let (mut w, mut h) = (1u32, 1u32);
        for r in layout.regions() {
            w = w.max(r.centroid.x.max(0.0) as u32 + 1);
            h = h.max(r.centroid.y.max(0.0) as u32 + 1);
        }
        urbanforge::model::Canvas::new(w, h)
    });
    BinaryMask::filled(canvas.width, canvas.height, true)
}

/// Sub-regions from the configured masks. With no masks at all the whole
/// city is one Residential sub-region.
pub fn subregions(cfg: &PipelineConfig, layout: &CityLayout) -> Result<Vec<SubRegion>, CliError> {
    let roles = cfg.demographic_roles()?;
    if cfg.masks.count() == 0 {
        return Ok(vec![SubRegion {
            role: roles[3].clone(),
            mask: whole_city_mask(layout),
        }]);
    }
    let mut out = Vec::new();
    for role in roles {
        if let Some(path) = cfg.masks.get(role.kind()) {
            out.push(SubRegion {
                mask: BinaryMask::from_png(path)?,
                role,
            });
        }
    }
    Ok(out)
}

pub fn evaluator(cfg: &PipelineConfig, layout: &CityLayout) -> Result<Evaluator, CliError> {
    let mut ev = Evaluator::new(cfg.services()?, subregions(cfg, layout)?);
    ev.weighting = cfg.metrics.weighting;
    Ok(ev)
}

/// Appends one `stage,service,ecology,satisfaction` row to `csv`, writing
/// the header first if the file is new.
pub fn append_report(csv: &Path, report: &MetricsReport) -> Result<(), CliError> {
    let fresh = !csv.exists();
    if let Some(dir) = csv.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(csv)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", csv.display())))?;
    let mut text = String::new();
    if fresh {
        text.push_str(CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&report.csv_row());
    text.push('\n');
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", csv.display())))
}

/// Scores `layout`, appends the row to `csv` and prints it as a table.
pub fn cmd_evaluate(cfg: &PipelineConfig, layout: &CityLayout, stage: &str, csv: &Path) -> Result<MetricsReport, CliError> {
    let report = evaluator(cfg, layout)?.report(layout, stage)?;
    append_report(csv, &report)?;
    print!("{}", format_table(std::slice::from_ref(&report)));
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub rounds: usize,
    pub on_llm_error: OnLlmError,
}

fn service_failure(e: CompletionError) -> CliError {
    CliError::Service(format!("planner service failed: {e}"))
}

/// Regional proposals integrated by the master planner. Writes
/// `stage3_layout.json`, `decisions.jsonl` and `plan_metrics.csv`.
pub fn cmd_plan(cfg: &PipelineConfig, layout: &CityLayout, opts: &PlanOptions) -> Result<CityLayout, CliError> {
    if cfg.masks.count() != DemographicKind::ALL.len() {
        return Err(CliError::Input(format!(
            "planning needs all 4 sub-region masks, {} configured",
            cfg.masks.count()
        )));
    }
    let ev = evaluator(cfg, layout)?;
    let policy = &cfg.planning.policy;
    let heuristic = HeuristicPlanner;
    let remote: Option<LlmPlanner<HttpCompletionClient>> = match cfg.planning.backend {
        Backend::Heuristic => None,
        Backend::Remote => match HttpCompletionClient::from_env(Duration::from_secs(cfg.planning.timeout_secs)) {
            Ok(client) => Some(LlmPlanner::new(client, cfg.planning.retries)),
            Err(e) if opts.on_llm_error == OnLlmError::Heuristic => {
                log::warn!("{e}; using the heuristic planner");
                None
            }
            Err(e) => return Err(service_failure(e)),
        },
    };
    let planner: &dyn RegionalPlanner<Real> = match &remote {
        Some(p) => p,
        None => &heuristic,
    };
    let fallback: Option<&dyn RegionalPlanner<Real>> = match (remote.is_some(), opts.on_llm_error) {
        (true, OnLlmError::Heuristic) => Some(&heuristic),
        _ => None,
    };

    let before = ev.report(layout, "before")?;
    let mut current = layout.clone();
    let mut lines = String::new();
    for round in 0..opts.rounds {
        let outcome = match plan_round(&current, &ev, policy, planner, fallback) {
            Ok(o) => o,
            Err(PlannerError::Service(e)) => return Err(service_failure(e)),
            Err(e) => return Err(e.into()),
        };
        for record in &outcome.log {
            let mut value = serde_json::to_value(record).expect("decision serializes");
            value["round"] = serde_json::json!(round);
            lines.push_str(&serde_json::to_string(&value).expect("decision serializes"));
            lines.push('\n');
        }
        let accepted = outcome.log.iter().filter(|r| r.decision.is_accepted()).count();
        log::info!("round {round}: {accepted} of {} actions accepted", outcome.log.len());
        current = outcome.layout;
    }
    let after = ev.report(&current, "after")?;
    write_file(&cfg.out_path(&layout_file(3)), &layout_to_json(&current))?;
    write_file(&cfg.out_path(DECISIONS), &lines)?;
    write_file(
        &cfg.out_path(PLAN_METRICS),
        &format!("{CSV_HEADER}\n{}\n{}\n", before.csv_row(), after.csv_row()),
    )?;
    print!("{}", format_table(&[before, after]));
    Ok(current)
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub skip_plan: bool,
    pub plan: PlanOptions,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub layouts: Vec<CityLayout>,
    pub reports: Vec<MetricsReport>,
}

/// ingest, evaluate, optimize, evaluate, plan, evaluate. `metrics.csv` is
/// rewritten from scratch on every run.
pub fn cmd_pipeline(cfg: &PipelineConfig, opts: &PipelineOptions) -> Result<PipelineOutcome, CliError> {
    let csv = cfg.out_path(METRICS);
    if csv.exists() {
        fs::remove_file(&csv).map_err(|e| CliError::Input(format!("cannot replace {}: {e}", csv.display())))?;
    }
    for stale in [layout_file(3), image_file(3), DECISIONS.to_string(), PLAN_METRICS.to_string()] {
        let _ = fs::remove_file(cfg.out_path(&stale));
    }
    let stages = if opts.skip_plan { 2 } else { 3 };
    let mut layouts: Vec<CityLayout> = Vec::new();
    let mut reports = Vec::new();
    for stage in 1..=stages {
        let layout = match stage {
            1 => {
                let l = cmd_ingest(cfg, &IngestOptions::default())?;
                write_file(&cfg.out_path(&layout_file(1)), &layout_to_json(&l))?;
                l
            }
            2 => cmd_optimize(cfg, &layouts[0])?,
            _ => cmd_plan(cfg, &layouts[1], &opts.plan)?,
        };
        write_png(&layout, &cfg.out_path(&image_file(stage)))?;
        reports.push(cmd_evaluate(cfg, &layout, &format!("stage{stage}"), &csv)?);
        layouts.push(layout);
    }
    print!("{}", format_table(&reports));
    Ok(PipelineOutcome { layouts, reports })
}
