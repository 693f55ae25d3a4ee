use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use terraphd::bootstrap::BootstrapConfig;
use terraphd::eval::{evaluate, ospa, summarize};
use terraphd::io::{self, Heatmap};
use terraphd::pipeline::{run_bootstrap, run_phd, simulate_run, to_tracks};
use terraphd::scenario::genmap as generate_map;
use terraphd::{
    FilterParams, GmmConfig, NoiseSpec, ResampleScheme, Scenario, Stream, TerrainClass, TerrainMap,
    TerrainMode,
};

use crate::{
    EvalArgs, FilterKind, GenmapArgs, ScenarioArgs, SchemeArg, SimulateArgs, TerrainArg, TrackArgs,
};

pub enum Failure {
    /// Contradictory or out-of-range arguments.
    Usage(String),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn load_map(path: &Path) -> anyhow::Result<TerrainMap> {
    TerrainMap::load(&read(path)?).with_context(|| format!("parsing map {}", path.display()))
}

pub fn genmap(a: &GenmapArgs) -> Outcome {
    if a.width == 0 || a.height == 0 || !(a.cell.is_finite() && a.cell > 0.0) {
        return Err(usage("width, height and cell must be positive"));
    }
    let map = generate_map(
        a.width,
        a.height,
        a.cell,
        &Stream::new(a.seed).derive("map"),
    )?;
    let mut w = create(&a.out)?;
    w.write_all(map.to_text().as_bytes())?;
    w.flush()?;
    let [road, field, forest] = map.class_fractions();
    eprintln!(
        "map {}x{} cells: road {road:.3}, field {field:.3}, forest {forest:.3}",
        a.width, a.height
    );
    Ok(())
}

pub fn scenario(a: &ScenarioArgs) -> Outcome {
    let mut w = create(&a.out)?;
    w.write_all(Scenario::bundled().to_text().as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Outcome {
    let map = load_map(&a.map)?;
    let scenario = match &a.scenario {
        Some(path) => Scenario::parse(&read(path)?)
            .with_context(|| format!("parsing scenario {}", path.display()))?,
        None => Scenario::bundled(),
    };
    let p_fn = a.pfn.unwrap_or(scenario.p_fn);
    if !(0.0..1.0).contains(&p_fn) {
        return Err(usage(format!("--pfn must lie in [0, 1), got {p_fn}")));
    }
    let (truth, reports) = simulate_run(&scenario, p_fn, a.seed)?;

    let mut off_map = 0;
    let mut in_forest = 0;
    for (_, s) in truth.states.iter().flatten() {
        match map.cell_index(s.x, s.y) {
            None => off_map += 1,
            Some(_) if map.classify(s.x, s.y) == TerrainClass::Forest => in_forest += 1,
            Some(_) => {}
        }
    }
    if off_map > 0 {
        eprintln!("warning: {off_map} true states lie outside the map");
    }
    if in_forest > 0 {
        eprintln!("warning: {in_forest} true states lie in forest");
    }

    let mut w = create(&a.truth)?;
    io::write_truth(&truth, &mut w)?;
    w.flush()?;
    let mut w = create(&a.reports)?;
    io::write_reports(&reports, &mut w)?;
    w.flush()?;
    let n_reports: usize = reports.iter().map(Vec::len).sum();
    eprintln!(
        "{} steps, {} vehicles, {n_reports} reports",
        truth.steps(),
        truth.vehicle_ids().len()
    );
    Ok(())
}

fn default_dump_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tracks".into());
    out.with_file_name(format!("{stem}.particles.csv"))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn track(a: &TrackArgs) -> Outcome {
    if !(a.pfn > 0.0 && a.pfn < 1.0) {
        return Err(usage(format!(
            "--pfn must lie strictly between 0 and 1, got {}",
            a.pfn
        )));
    }
    if a.particles == 0 {
        return Err(usage("--particles must be at least 1"));
    }
    if a.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    let scheme = match a.resample {
        SchemeArg::Multinomial => ResampleScheme::Multinomial,
        SchemeArg::Systematic => ResampleScheme::Systematic,
    };
    let terrain_mode = match a.terrain_mode {
        TerrainArg::Resample => TerrainMode::Resample,
        TerrainArg::Reweight => TerrainMode::Reweight,
    };
    let params = FilterParams::new(
        a.particles,
        a.pfn,
        a.k_const,
        NoiseSpec::PROCESS,
        a.max_count,
        a.dt,
    )
    .map_err(|e| usage(e.to_string()))?
    .with_scheme(scheme)
    .with_terrain_mode(terrain_mode);

    let map = load_map(&a.map)?;
    let reports = io::read_reports(open(&a.reports)?, a.steps)
        .with_context(|| format!("parsing reports {}", a.reports.display()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;

    let mut particles = match &a.dump_particles {
        Some(p) => {
            let path = p.clone().unwrap_or_else(|| default_dump_path(&a.out));
            Some(csv::Writer::from_writer(create(&path)?))
        }
        None => None,
    };
    let mut mixture = match &a.mixture {
        Some(p) => Some(csv::Writer::from_writer(create(p)?)),
        None => None,
    };
    let mut heatmap = a.heatmap.as_ref().map(|_| Heatmap::new(&map));

    let start = Instant::now();
    let (tracks, timings) = match a.filter {
        FilterKind::Phd => {
            let outputs = pool.install(|| {
                run_phd(
                    &map,
                    &reports,
                    &params,
                    &GmmConfig::default(),
                    a.seed,
                    |view| {
                        let cloud = view.posterior.cloud();
                        if let Some(w) = particles.as_mut() {
                            io::write_particles(w, view.output.step, cloud)?;
                        }
                        if let (Some(w), Some(m)) = (mixture.as_mut(), view.mixture) {
                            io::write_mixture(w, view.output.step, m)?;
                        }
                        if let Some(h) = heatmap.as_mut() {
                            h.accumulate(&map, cloud);
                        }
                        Ok(())
                    },
                )
            })?;
            for o in &outputs {
                if !o.unsupported_reports.is_empty() {
                    eprintln!(
                        "step {}: {} report(s) unexplained by the prior, seeded as new targets",
                        o.step,
                        o.unsupported_reports.len()
                    );
                }
            }
            let timings: Vec<_> = outputs.iter().map(|o| o.timings).collect();
            (to_tracks(&outputs), Some(timings))
        }
        FilterKind::Bootstrap => {
            if mixture.is_some() {
                return Err(usage("--mixture requires --filter phd"));
            }
            if reports.iter().any(|b| b.len() > 1) {
                eprintln!(
                    "warning: several reports in one step; the bootstrap filter uses the first"
                );
            }
            let config = BootstrapConfig {
                n_particles: a.particles,
                dt: a.dt,
                sigma_w: NoiseSpec::PROCESS,
                terrain_mode,
                scheme,
            };
            let tracks = pool.install(|| {
                run_bootstrap(&map, &reports, &config, a.seed, |step, cloud| {
                    if let Some(w) = particles.as_mut() {
                        io::write_particles(w, step, cloud)?;
                    }
                    if let Some(h) = heatmap.as_mut() {
                        h.accumulate(&map, cloud);
                    }
                    Ok(())
                })
            })?;
            (tracks, None)
        }
    };
    let elapsed = start.elapsed();

    let mut w = create(&a.out)?;
    io::write_tracks(&tracks, &mut w)?;
    w.flush()?;
    if let Some(mut w) = particles {
        w.flush()?;
    }
    if let Some(mut w) = mixture {
        w.flush()?;
    }
    if let (Some(h), Some(path)) = (heatmap, &a.heatmap) {
        h.write(create(path)?)?;
    }

    let steps = tracks.len().max(1) as f64;
    eprintln!(
        "{} steps in {:.3} s ({:.1} ms per step)",
        tracks.len(),
        elapsed.as_secs_f64(),
        ms(elapsed) / steps
    );
    if let Some(timings) = timings {
        let mean = |f: &dyn Fn(&terraphd::PhaseTimings) -> Duration| {
            timings.iter().map(|t| ms(f(t))).sum::<f64>() / steps
        };
        eprintln!(
            "mean per step: predict {:.2} ms, update {:.2} ms, resample {:.2} ms, gmm-fit {:.2} ms",
            mean(&|t| t.predict),
            mean(&|t| t.update),
            mean(&|t| t.resample),
            mean(&|t| t.gmm_fit)
        );
        if let Some(path) = &a.timing {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record([
                "step",
                "predict_ms",
                "update_ms",
                "resample_ms",
                "gmm_fit_ms",
            ])?;
            for (step, t) in timings.iter().enumerate() {
                w.write_record([
                    step.to_string(),
                    format!("{:.4}", ms(t.predict)),
                    format!("{:.4}", ms(t.update)),
                    format!("{:.4}", ms(t.resample)),
                    format!("{:.4}", ms(t.gmm_fit)),
                ])?;
            }
            w.flush()?;
        }
    } else if a.timing.is_some() {
        return Err(usage("--timing requires --filter phd"));
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Outcome {
    if let Some(c) = a.ospa {
        if !(c.is_finite() && c > 0.0) {
            return Err(usage(format!("--ospa cutoff must be positive, got {c}")));
        }
    }
    let truth = io::read_truth(open(&a.truth)?)
        .with_context(|| format!("parsing truth {}", a.truth.display()))?;
    let tracks = io::read_tracks(open(&a.tracks)?)
        .with_context(|| format!("parsing tracks {}", a.tracks.display()))?;
    if tracks.is_empty() {
        return Err(anyhow!("{} contains no steps", a.tracks.display()).into());
    }
    let metrics = evaluate(&truth, &tracks);
    let mut w = create(&a.out)?;
    io::write_metrics(&metrics, &mut w)?;
    w.flush()?;

    let summary = summarize(&metrics);
    let mut text = summary.to_text();
    if let Some(cutoff) = a.ospa {
        let total: f64 = tracks
            .iter()
            .map(|t| {
                let truth_xy: Vec<_> = truth.at(t.step).iter().map(|(_, s)| (s.x, s.y)).collect();
                let est: Vec<_> = t.peaks.iter().map(|p| (p.x, p.y)).collect();
                ospa(&truth_xy, &est, cutoff)
            })
            .sum();
        text.push_str(&format!(
            "ospa_cutoff={cutoff}\nospa_mean={:.6}\n",
            total / tracks.len() as f64
        ));
    }
    let mut w = create(&a.summary)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    eprint!("{text}");
    Ok(())
}
