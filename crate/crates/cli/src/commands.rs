use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use skewlevy::decompose::decompose_path;
use skewlevy::ensemble::par_map;
use skewlevy::experiments::{self, ExperimentOptions, ExperimentReport};
use skewlevy::jumps::interlace;
use skewlevy::levy::{estimate_from_paths, EstimatorConfig};
use skewlevy::path::CadlagPath;
use skewlevy::rng::{Purpose, StreamId};
use skewlevy::scenarios::{ScenarioGeometry, ScenarioKind};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{
    create_dir, path_file, write_path, write_text, Manifest, PathEntry, CONFIG_ECHO,
};

pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.json";
pub const TRIPLE: &str = "triple.toml";

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let geom = cfg.geometry()?;
    let eta = cfg.jump_measure(&geom)?;
    create_dir(out)?;
    write_text(&out.join(CONFIG_ECHO), &cfg.to_toml())?;
    let results: Vec<Result<PathEntry, CliError>> = par_map(cfg.n_paths, |i| {
        let id = StreamId::new(cfg.seed, i as u64);
        let mut a = id.rng(Purpose::Ambient);
        let mut j = id.rng(Purpose::Jumps);
        let mut path = interlace(
            &geom,
            eta.as_ref(),
            &cfg.x0,
            cfg.t_end,
            cfg.dt,
            &mut a,
            &mut j,
        )?
        .path;
        path.seed = Some(id);
        let file = format!("paths/{}", path_file(i, cfg.format));
        let sha256 = write_path(out, &file, &path, cfg.format)?;
        Ok(PathEntry {
            index: i,
            seed_master: id.master,
            seed_index: id.index,
            file,
            sha256,
            exit_index: None,
            exit_time: None,
        })
    });
    let mut m = Manifest::new("simulate", &cfg.scenario, geom.size(), cfg.seed, cfg.format);
    m.paths = results.into_iter().collect::<Result<_, _>>()?;
    m.save(out)?;
    println!(
        "simulated {} {} paths into {}",
        m.paths.len(),
        cfg.scenario,
        out.display()
    );
    Ok(())
}

fn manifest_geometry(m: &Manifest) -> Result<ScenarioGeometry, CliError> {
    let kind = ScenarioKind::parse(&m.scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    ScenarioGeometry::new(kind, m.size).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn decompose(input: &Path, scenario: Option<&str>, out: &Path) -> Result<(), CliError> {
    let src = Manifest::load(input)?;
    if src.kind != "simulate" {
        return Err(CliError::Usage(format!(
            "{} is not a simulate run",
            input.display()
        )));
    }
    if let Some(s) = scenario {
        if s != src.scenario {
            return Err(CliError::Usage(format!(
                "scenario {s} does not match the manifest's {}",
                src.scenario
            )));
        }
    }
    let geom = manifest_geometry(&src)?;
    create_dir(out)?;
    // decompose_path aborts on any point whose reconstruction misses tolerance.
    let results: Vec<Result<(PathEntry, PathEntry), CliError>> = par_map(src.paths.len(), |i| {
        let e = &src.paths[i];
        let x = src.read_path(input, e)?;
        let d = decompose_path(&x, &geom)?;
        let exit_time = d.exit_index.map(|k| x.time(k));
        let make = |prefix: &str, p: &CadlagPath| -> Result<PathEntry, CliError> {
            let file = path_file(e.index, src.format);
            let sha256 = write_path(&out.join(prefix), &file, p, src.format)?;
            Ok(PathEntry {
                file,
                sha256,
                exit_index: d.exit_index,
                exit_time,
                ..e.clone()
            })
        };
        Ok((make("radial", &d.radial)?, make("angular", &d.angular)?))
    });
    let mut radial = Manifest::new(
        "decompose-radial",
        &src.scenario,
        src.size,
        src.seed,
        src.format,
    );
    let mut angular = Manifest::new(
        "decompose-angular",
        &src.scenario,
        src.size,
        src.seed,
        src.format,
    );
    for r in results {
        let (a, b) = r?;
        radial.paths.push(a);
        angular.paths.push(b);
    }
    let mut exits = String::from("path,exit_index,exit_time\n");
    for e in &radial.paths {
        let fmt = |v: Option<String>| v.unwrap_or_default();
        exits.push_str(&format!(
            "{},{},{}\n",
            e.index,
            fmt(e.exit_index.map(|k| k.to_string())),
            fmt(e.exit_time.map(|t| t.to_string()))
        ));
    }
    write_text(&out.join("exits.csv"), &exits)?;
    for (sub, m) in [("radial", &radial), ("angular", &angular)] {
        m.save(&out.join(sub))?;
    }
    let exited = radial
        .paths
        .iter()
        .filter(|e| e.exit_index.is_some())
        .count();
    println!(
        "decomposed {} paths into {} ({exited} exited)",
        radial.paths.len(),
        out.display()
    );
    Ok(())
}

pub fn estimate(input: &Path, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dir = if input
        .join("angular")
        .join(crate::manifest::MANIFEST)
        .exists()
    {
        input.join("angular")
    } else {
        input.to_path_buf()
    };
    let m = Manifest::load(&dir)?;
    if m.kind != "decompose-angular" {
        return Err(CliError::Usage(format!(
            "{} holds no angular paths",
            dir.display()
        )));
    }
    let geom = manifest_geometry(&m)?;
    let paths = m
        .paths
        .iter()
        .map(|e| m.read_path(&dir, e))
        .collect::<Result<Vec<_>, _>>()?;
    let t_end = paths
        .iter()
        .map(|p| p.t_end())
        .fold(f64::INFINITY, f64::min);
    let mut ec = EstimatorConfig::new(t_end, cfg.estimator.n_grid);
    ec.jump_threshold = cfg.estimator.jump_threshold;
    ec.bin_edges = cfg.estimator.bin_edges.clone();
    let triple = estimate_from_paths(&paths, *geom.space(), ec)?;
    create_dir(out)?;
    write_text(&out.join(CONFIG_ECHO), &cfg.to_toml())?;
    write_text(&out.join(TRIPLE), &triple.to_toml()?)?;
    println!(
        "estimated triple of {} paths on [0, {t_end}] into {}",
        paths.len(),
        out.join(TRIPLE).display()
    );
    Ok(())
}

pub fn list() {
    for e in experiments::registry() {
        println!("{:>2}  {:<22} {}", e.id, e.name, e.summary);
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    passed: bool,
    seed: u64,
    checks: Vec<(&'a str, bool)>,
}

pub fn verify(
    name: &str,
    opts: ExperimentOptions,
    out_root: &Path,
) -> Result<ExperimentReport, CliError> {
    let exp = experiments::find(name).map_err(|e| CliError::Usage(e.to_string()))?;
    let out: PathBuf = out_root.join(exp.name);
    create_dir(&out)?;
    write_text(
        &out.join(CONFIG_ECHO),
        &toml::to_string(&opts).expect("options serialise"),
    )?;
    let start = Instant::now();
    let report = exp.run(&opts)?;
    let wall = start.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    write_text(&out.join(REPORT), &json)?;
    let summary = Summary {
        name: exp.name,
        passed: report.passed,
        seed: report.seed,
        checks: report
            .checks
            .iter()
            .map(|c| (c.name.as_str(), c.passed))
            .collect(),
    };
    write_text(
        &out.join(SUMMARY),
        &serde_json::to_string_pretty(&summary).expect("summary serialises"),
    )?;
    for c in &report.checks {
        println!(
            "  [{}] {}: {:.6} {} {} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.observed,
            c.relation.symbol(),
            c.limit,
            c.detail
        );
    }
    println!(
        "{} {}: seed {}, {} paths, dt {}, wall clock {wall:.1} s (budget {} s)",
        if report.passed { "PASS" } else { "FAIL" },
        exp.name,
        report.seed,
        report.paths,
        report.dt,
        exp.budget_secs
    );
    Ok(report)
}
