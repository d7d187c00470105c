mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use urbanforge::ingest::RasterImage;
use urbanforge::io::{layout_to_json, read_layout};
use urbanforge::model::{legend_color, Canvas, LandUseType, RegionId};
use urbanforge::{CityLayout, Point, Region, ScaleConfig};

use common::write_fixture;

fn urbanforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urbanforge"))
        .args(args)
        .env_remove("URBANFORGE_LLM_ENDPOINT")
        .env_remove("URBANFORGE_LLM_MODEL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy(dir: &Path, name: &str, spots: &[(LandUseType, f64, f64)]) -> String {
    let regions = spots
        .iter()
        .enumerate()
        .map(|(k, (t, x, y))| Region::new(RegionId::indexed(k), *t, 20, Point::new(*x, *y)))
        .collect();
    let layout = CityLayout::new(regions, ScaleConfig::with_meters_per_pixel(10.0))
        .unwrap()
        .with_canvas(Canvas::new(100, 100))
        .unwrap();
    let path = dir.join(name);
    std::fs::write(&path, layout_to_json(&layout)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ingest_two_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = RasterImage::filled(20, 10, [255, 255, 255]);
    for y in 2..7 {
        for x in 1..6 {
            img.put(x, y, legend_color(LandUseType::Hospital).unwrap());
            img.put(x + 10, y, legend_color(LandUseType::Residential).unwrap());
        }
    }
    let map = dir.path().join("map.png");
    img.save_png(&map).unwrap();
    let out = dir.path().join("out");
    let o = urbanforge(&["--out", p(&out), "ingest", "--map", p(&map)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("2 regions"));
    let inv = read_layout::<f64>(&out.join("inventory.json")).unwrap();
    assert_eq!(inv.len(), 2);
    assert_eq!(inv.regions()[0].land_use, LandUseType::Hospital);
    assert_eq!(inv.regions()[0].centroid, Point::new(3.0, 4.0));
    assert_eq!(inv.regions()[1].area_px, 25);

    // the mask keeps only the left blob, min-area drops both
    let mask = dir.path().join("mask.png");
    urbanforge::ingest::BinaryMask::from_fn(20, 10, |x, _| x < 10).save_png(&mask).unwrap();
    let o = urbanforge(&["--out", p(&out), "ingest", "--map", p(&map), "--mask", p(&mask)]);
    assert!(o.status.success());
    assert_eq!(read_layout::<f64>(&out.join("inventory.json")).unwrap().len(), 1);
    let o = urbanforge(&["--out", p(&out), "ingest", "--map", p(&map), "--min-area", "26"]);
    assert!(o.status.success());
    assert_eq!(read_layout::<f64>(&out.join("inventory.json")).unwrap().len(), 0);
    let o = urbanforge(&["--out", p(&out), "ingest", "--map", p(&map), "--hsv-tolerance", "4,0.08,0.08"]);
    assert!(o.status.success());
}

#[test]
fn ingest_blank_map() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("blank.png");
    RasterImage::filled(16, 16, [255, 255, 255]).save_png(&map).unwrap();
    let out = dir.path().join("out");
    let o = urbanforge(&["--out", p(&out), "ingest", "--map", p(&map)]);
    assert!(o.status.success());
    assert_eq!(read_layout::<f64>(&out.join("inventory.json")).unwrap().len(), 0);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    assert_eq!(urbanforge(&["ingest", "--map", p(&missing)]).status.code(), Some(2));
    assert_eq!(urbanforge(&["--config", p(&missing), "ingest"]).status.code(), Some(2));
    assert_eq!(urbanforge(&["ingest", "--map", p(&missing), "--hsv-tolerance", "4,0.1"]).status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[solver.ga]\nelite_count = 50\n").unwrap();
    let layout = toy(dir.path(), "l.json", &[(LandUseType::Residential, 1.0, 1.0)]);
    let o = urbanforge(&["--config", p(&cfg), "optimize", "--inventory", &layout]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("elite_count"));

    // no residents
    let empty = toy(dir.path(), "e.json", &[(LandUseType::Hospital, 1.0, 1.0)]);
    let o = urbanforge(&["--out", p(dir.path()), "evaluate", "--layout", &empty]);
    assert_eq!(o.status.code(), Some(2));

    // planning without masks
    let o = urbanforge(&["--out", p(dir.path()), "plan", "--layout", &layout]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_served_and_empty_toys() {
    use LandUseType::*;
    let dir = tempfile::tempdir().unwrap();
    let served = toy(
        dir.path(),
        "served.json",
        &[
            (Residential, 50.0, 50.0),
            (Educational, 52.0, 50.0),
            (Hospital, 48.0, 50.0),
            (Business, 50.0, 52.0),
            (ShopsAndMarket, 50.0, 48.0),
            (ParkAndOpenSpace, 51.0, 51.0),
        ],
    );
    let empty = toy(dir.path(), "empty.json", &[(Residential, 50.0, 50.0), (VacantLand, 51.0, 50.0)]);
    let csv = dir.path().join("report.csv");
    let o = urbanforge(&["evaluate", "--layout", &served, "--csv", p(&csv)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("Satisfaction"));
    let o = urbanforge(&["evaluate", "--layout", &empty, "--csv", p(&csv), "--stage", "stage1"]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        "stage,service,ecology,satisfaction\nstage1,1.000,1.000,1.000\nstage1,0.000,0.000,0.000\n"
    );
}

#[test]
fn optimize_is_deterministic_and_keeps_a_saturated_city() {
    use LandUseType::*;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 3);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(urbanforge(&["--config", p(&cfg), "--out", p(out), "ingest"]).status.success());
        let o = urbanforge(&["--config", p(&cfg), "--out", p(out), "--seed", "5", "optimize"]);
        assert!(o.status.success(), "{o:?}");
    }
    for f in ["stage2_layout.json", "trace.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let trace = std::fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("generation,best,mean\n0,"));
    assert_eq!(trace.lines().count(), 52);

    // one resident, every player already in reach: nothing to improve
    let saturated = toy(
        dir.path(),
        "sat.json",
        &[(Residential, 50.0, 50.0), (Hospital, 51.0, 50.0), (ParkAndOpenSpace, 49.0, 50.0)],
    );
    let cfg = dir.path().join("sat.toml");
    std::fs::write(&cfg, "[solver]\nplayers = [\"Hospital\", \"ParkAndOpenSpace\"]\n").unwrap();
    let out = dir.path().join("sat");
    let o = urbanforge(&["--config", p(&cfg), "--out", p(&out), "optimize", "--inventory", &saturated]);
    assert!(o.status.success(), "{o:?}");
    let before = read_layout::<f64>(Path::new(&saturated)).unwrap();
    let after = read_layout::<f64>(&out.join("stage2_layout.json")).unwrap();
    assert_eq!(after.assignment(), before.assignment());
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 7);
    let o = urbanforge(&["--config", p(&cfg), "pipeline"]);
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("stage1,") && rows[2].starts_with("stage2,") && rows[3].starts_with("stage3,"));
    for f in ["stage1.png", "stage2.png", "stage3.png", "decisions.jsonl", "plan_metrics.csv", "stage3_layout.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    for line in std::fs::read_to_string(out.join("decisions.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["verdict"].is_string() || v["decision"]["verdict"].is_string(), "{line}");
    }

    // rerun: identical bytes
    let first = std::fs::read(out.join("metrics.csv")).unwrap();
    assert!(urbanforge(&["--config", p(&cfg), "pipeline"]).status.success());
    assert_eq!(std::fs::read(out.join("metrics.csv")).unwrap(), first);

    // skip-plan: two rows and no stage-3 outputs
    let o = urbanforge(&["--config", p(&cfg), "pipeline", "--skip-plan"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 3);
    for f in ["stage3.png", "stage3_layout.json", "decisions.jsonl"] {
        assert!(!out.join(f).exists(), "{f}");
    }
}

#[test]
fn plan_with_nothing_to_do_keeps_the_layout() {
    use LandUseType::*;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 7);
    // no vacant land anywhere: every proposal is empty
    let mut layout = common::synthetic_city(7);
    for i in 0..layout.len() {
        if layout.role(i) == VacantLand {
            layout.set_role(i, StateGovtProperty);
        }
    }
    let stage2 = dir.path().join("s2.json");
    std::fs::write(&stage2, layout_to_json(&layout)).unwrap();
    let o = urbanforge(&["--config", p(&cfg), "plan", "--layout", p(&stage2)]);
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    assert_eq!(
        std::fs::read_to_string(out.join("stage3_layout.json")).unwrap(),
        std::fs::read_to_string(&stage2).unwrap()
    );
    assert_eq!(std::fs::read_to_string(out.join("decisions.jsonl")).unwrap(), "");
}

#[test]
fn remote_backend_down() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 7);
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[planning]\nbackend = \"remote\"\n");
    std::fs::write(&cfg, text).unwrap();
    assert!(urbanforge(&["--config", p(&cfg), "pipeline", "--skip-plan"]).status.success());

    let o = urbanforge(&["--config", p(&cfg), "plan", "--on-llm-error", "fail"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = Command::new(env!("CARGO_BIN_EXE_urbanforge"))
        .args(["--config", p(&cfg), "plan", "--on-llm-error", "fail"])
        .env("URBANFORGE_LLM_ENDPOINT", format!("http://127.0.0.1:{port}/v1/chat/completions"))
        .env("URBANFORGE_LLM_MODEL", "m")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{o:?}");

    let o = urbanforge(&["--config", p(&cfg), "plan", "--on-llm-error", "heuristic"]);
    assert!(o.status.success(), "{o:?}");
}

/// Serves `n` chat-completion requests, each answered with an empty proposal.
fn fake_service(n: usize) -> (String, std::thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"{\"actions\":[],\"rationale\":\"fine\"}"}}]}"#;
        let mut served = 0;
        for stream in listener.incoming().take(n) {
            let stream = stream.unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; len];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            served += 1;
        }
        served
    });
    (url, handle)
}

#[test]
fn remote_backend_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 7);
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[planning]\nbackend = \"remote\"\n");
    std::fs::write(&cfg, text).unwrap();
    assert!(urbanforge(&["--config", p(&cfg), "pipeline", "--skip-plan"]).status.success());

    let (url, server) = fake_service(4);
    let o = Command::new(env!("CARGO_BIN_EXE_urbanforge"))
        .args(["--config", p(&cfg), "plan"])
        .env("URBANFORGE_LLM_ENDPOINT", url)
        .env("URBANFORGE_LLM_MODEL", "m")
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    assert_eq!(server.join().unwrap(), 4);
    let out = dir.path().join("out");
    assert_eq!(
        std::fs::read_to_string(out.join("stage3_layout.json")).unwrap(),
        std::fs::read_to_string(out.join("stage2_layout.json")).unwrap()
    );
}
