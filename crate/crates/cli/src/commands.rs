use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mgi_core::io::{read_measurement, read_pgm, write_measurement, write_pgm, MeasurementFile};
use mgi_core::reduction::{metrics as image_metrics, PipelineConfig, ReductionEstimate, ReductionPlan};
use mgi_core::sensing::{ModelKind, ModelParams, Placement, SensingModel, DEFAULT_P_ACC, DEFAULT_READOUT_VARIANCE};
use mgi_core::sim::{
    gen_object as make_object, simulate_gi, simulate_ordinary, AcquisitionConfig, NoiseMode, ObjectImage,
    ObjectPattern, TwoSlit,
};
use mgi_core::transforms::{BasisKind, SparsityBasis};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError};
use crate::meta::{MeasurementMeta, ModelSpec};
use crate::{CompareArgs, GenObjectArgs, MetricsArgs, ModelArgs, Pattern, ReconstructArgs, SimulateArgs};

const DEFAULT_GRID: usize = 64;
const DEFAULT_DETECTOR_SIZE: usize = 3;
/// Per-pixel MSE difference below which a comparison counts as a tie.
const TIE_TOLERANCE: f64 = 1e-9;

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.check_optics()?;
    Ok(cfg)
}

fn parse_enum<T: std::str::FromStr<Err = mgi_core::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: mgi_core::Error| CliError::Config(e.to_string()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "measurement".into())
}

pub fn gen_object(a: GenObjectArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let width = a.width.or(a.size).or(cfg.width);
    let height = a.height.or(a.size).or(cfg.height);
    let image = match a.pattern {
        Pattern::Bitmap => {
            let file = a
                .file
                .as_ref()
                .ok_or_else(|| CliError::Config("the bitmap pattern needs --file".into()))?;
            let src = read_pgm(file)?;
            let w = width.unwrap_or(src.width());
            let h = height.unwrap_or(src.height());
            make_object(&ObjectPattern::Bitmap(file.clone()), w, h)?
        }
        Pattern::Constant => make_object(
            &ObjectPattern::Constant(a.value),
            width.unwrap_or(DEFAULT_GRID),
            height.unwrap_or(DEFAULT_GRID),
        )?,
        Pattern::TwoSlit => make_object(
            &ObjectPattern::TwoSlit(TwoSlit {
                bar_width: a.bar_width,
                gap: a.gap,
                length: a.length,
            }),
            width.unwrap_or(DEFAULT_GRID),
            height.unwrap_or(DEFAULT_GRID),
        )?,
    };
    write_pgm(&a.out, &image)?;
    println!("wrote {} ({}x{})", a.out.display(), image.width(), image.height());
    Ok(())
}

/// Flags override the config file, which overrides `base` (a measurement's
/// sidecar), which overrides the defaults.
fn resolve_model(
    kind: ModelKind,
    width: usize,
    height: usize,
    args: &ModelArgs,
    cfg: &ExperimentConfig,
    base: Option<&ModelSpec>,
) -> Result<ModelSpec, CliError> {
    let placement = match args.placement.as_deref() {
        Some(s) => parse_enum(s)?,
        None => cfg.placement.or(base.map(|b| b.placement)).unwrap_or(Placement::Sliding),
    };
    let bp = base.map(|b| &b.params);
    let photons = args
        .photons
        .or(cfg.photons_per_pixel)
        .or(bp.map(|p| p.photons_per_pixel))
        .unwrap_or(1.0);
    let mut params = ModelParams::new(photons);
    params.noise_photons_per_pixel = args
        .noise_photons
        .or(cfg.noise_photons_per_pixel)
        .or(bp.map(|p| p.noise_photons_per_pixel))
        .unwrap_or(0.0);
    params.p_acc = args.p_acc.or(cfg.p_acc).or(bp.map(|p| p.p_acc)).unwrap_or(DEFAULT_P_ACC);
    params.readout_variance = args
        .readout_variance
        .or(cfg.readout_variance)
        .or(bp.map(|p| p.readout_variance))
        .unwrap_or(DEFAULT_READOUT_VARIANCE);
    if let Some(s) = cfg.arm_scales.clone().or(bp.map(|p| p.relative_arm_scales.clone())) {
        params.relative_arm_scales = s;
    }
    if let Some(a) = cfg.pixel_area.or(bp.map(|p| p.pixel_area)) {
        params.pixel_area = a;
    }
    if let Some(p) = bp {
        params.floor_rel = p.floor_rel;
    }
    if kind == ModelKind::Ordinary {
        params.relative_arm_scales = vec![1.0];
    }
    Ok(ModelSpec {
        kind,
        width,
        height,
        detector_size: args
            .detector_size
            .or(cfg.detector_size)
            .or(base.map(|b| b.detector_size))
            .unwrap_or(DEFAULT_DETECTOR_SIZE),
        placement,
        params,
    })
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(a.model.config.as_deref())?;
    let object = read_pgm(&a.object)?;
    let (w, h) = (object.width(), object.height());
    let noise_mode = match a.noise_mode.as_deref() {
        Some(s) => parse_enum(s)?,
        None => cfg.noise_mode.unwrap_or(NoiseMode::Gaussian),
    };
    let noise_scale = a.noise_scale.or(cfg.noise_scale).unwrap_or(1.0);
    let seeds = match (&a.seeds, a.seed) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => cfg.seeds.clone().unwrap_or_else(|| vec![0]),
    };
    if seeds.is_empty() {
        return Err(CliError::Config("no seeds given".into()));
    }

    let mut channels = vec![ModelKind::Ghost];
    if a.ordinary {
        channels.push(ModelKind::Ordinary);
    }
    for kind in channels {
        let spec = resolve_model(kind, w, h, &a.model, &cfg, None)?;
        let model = spec.build()?;
        for &seed in &seeds {
            let p = model.params();
            let acq = AcquisitionConfig {
                photons_per_pixel: p.photons_per_pixel,
                noise_photons_per_pixel: p.noise_photons_per_pixel,
                p_acc: p.p_acc,
                seed,
                noise_mode,
                arms: model.arms(),
                noise_scale,
                subtract_background: true,
            };
            let m = match kind {
                ModelKind::Ghost => simulate_gi(&object, &model, &acq)?,
                ModelKind::Ordinary => simulate_ordinary(&object, &model, &acq)?,
            };
            let mut path = a.out.clone();
            if seeds.len() > 1 {
                path = with_suffix(&path, &format!("_s{seed}"));
            }
            if kind == ModelKind::Ordinary {
                path = with_suffix(&path, "_ordinary");
            }
            write_measurement(&path, &MeasurementFile::from_measurement(&m))?;
            MeasurementMeta {
                model: spec.clone(),
                seed,
                noise_mode,
                noise_scale,
                fingerprint: m.model_fingerprint.clone(),
            }
            .write(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Measurement, sidecar and the model it was taken with. Refuses if the model
/// rebuilt from `args` differs from the one recorded in the sidecar.
fn load_measurement(
    path: &Path,
    args: &ModelArgs,
    cfg: &ExperimentConfig,
) -> Result<(MeasurementFile, MeasurementMeta, SensingModel), CliError> {
    let file = read_measurement(path)?;
    let meta = MeasurementMeta::read(path)?;
    let spec = resolve_model(meta.model.kind, meta.model.width, meta.model.height, args, cfg, Some(&meta.model))?;
    let model = spec.build()?;
    if model.fingerprint() != meta.fingerprint {
        return Err(CliError::Config(format!(
            "{}: measurement was taken with a different model (fingerprint {} vs {})",
            path.display(),
            meta.fingerprint,
            model.fingerprint()
        )));
    }
    let g = model.geometry();
    if file.arms as usize != model.arms()
        || file.detector_rows as usize != g.detector_rows()
        || file.detector_cols as usize != g.detector_cols()
    {
        return Err(CliError::Config(format!(
            "{}: header ({}, {}, {}) does not match the model ({}, {}, {})",
            path.display(),
            file.arms,
            file.detector_rows,
            file.detector_cols,
            model.arms(),
            g.detector_rows(),
            g.detector_cols()
        )));
    }
    Ok((file, meta, model))
}

fn refine(plan: &ReductionPlan, model: &SensingModel, file: &MeasurementFile) -> Result<ReductionEstimate, CliError> {
    let identity = SparsityBasis::identity(model.geometry().width, model.geometry().height)?;
    let (_, refined, _) = plan.constrained(model, &file.xi, &PipelineConfig::new(identity, 0.0))?;
    Ok(refined)
}

fn check_truth(truth: &ObjectImage, model: &SensingModel) -> Result<(), CliError> {
    let g = model.geometry();
    if truth.width() != g.width || truth.height() != g.height {
        return Err(CliError::Config(format!(
            "object is {}x{}, measurement grid is {}x{}",
            truth.width(),
            truth.height(),
            g.width,
            g.height
        )));
    }
    Ok(())
}

pub fn reconstruct(a: ReconstructArgs) -> Result<(), CliError> {
    let cfg = load_config(a.model.config.as_deref())?;
    let (file, _meta, model) = load_measurement(&a.measurement, &a.model, &cfg)?;
    let g = *model.geometry();
    let bases: Vec<BasisKind> = match &a.basis {
        Some(list) => list.iter().map(|s| parse_enum(s)).collect::<Result<_, _>>()?,
        None => cfg.basis.clone().unwrap_or_else(|| vec![BasisKind::Haar2]),
    };
    let lambdas = a.lambda.clone().or(cfg.lambda.clone()).unwrap_or_default();
    if lambdas.is_empty() || bases.is_empty() {
        return Err(CliError::Config("reconstruct needs at least one lambda and one basis".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(CliError::Config(format!("lambda must be finite and >= 0, got {l}")));
    }
    let truth = match &a.object {
        Some(p) => {
            let t = read_pgm(p)?;
            check_truth(&t, &model)?;
            Some(t)
        }
        None => None,
    };
    let out_dir = a
        .out_dir
        .clone()
        .or(cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let name = stem(&a.measurement);
    let csv_path = a.csv.clone().unwrap_or_else(|| out_dir.join(format!("{name}_metrics.csv")));

    let start = Instant::now();
    let plan = ReductionPlan::worst_case(&model)?;
    let refined = refine(&plan, &model, &file)?;
    let shared = start.elapsed().as_secs_f64();
    let per_pixel_bound = plan.worst_case_mse() / model.n_pixels() as f64;

    let mut csv = csv::Writer::from_path(&csv_path)?;
    csv.write_record(["lambda", "basis", "mse", "psnr", "worst_case_mse", "converged", "runtime"])?;
    for kind in &bases {
        let basis = SparsityBasis::new(*kind, g.width, g.height)?;
        for &lambda in &lambdas {
            let t = Instant::now();
            let std = plan.component_std(&basis)?;
            let pcfg = PipelineConfig::new(basis.clone(), lambda);
            let (image, _, info) = plan.finish(&refined.estimate, &pcfg, &std)?;
            let runtime = shared + t.elapsed().as_secs_f64();
            let out = ObjectImage::new(g.width, g.height, image.iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
            let img_path = out_dir.join(format!("{name}_{kind}_lambda{lambda}.pgm"));
            write_pgm(&img_path, &out)?;
            let (mse, psnr) = match &truth {
                Some(t) => {
                    let m = image_metrics(image.as_slice(), t)?;
                    (m.mse.to_string(), m.psnr.to_string())
                }
                None => (String::new(), String::new()),
            };
            csv.write_record([
                lambda.to_string(),
                kind.to_string(),
                mse,
                psnr,
                per_pixel_bound.to_string(),
                (refined.converged && info.converged).to_string(),
                if a.no_runtime { String::new() } else { format!("{runtime:.3}") },
            ])?;
            println!("wrote {}", img_path.display());
        }
    }
    csv.flush().map_err(io_err(&csv_path))?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct CompareRow {
    seed: u64,
    channel: &'static str,
    basis: BasisKind,
    lambda: f64,
    mse: f64,
}

pub fn compare(a: CompareArgs) -> Result<(), CliError> {
    if a.gi.len() != a.ordinary.len() {
        return Err(CliError::Config(format!(
            "{} ghost measurements but {} ordinary ones",
            a.gi.len(),
            a.ordinary.len()
        )));
    }
    let basis_kind: BasisKind = parse_enum(&a.basis)?;
    if a.lambda.is_empty() || a.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(CliError::Config("lambda list must be non-empty and >= 0".into()));
    }
    let truth = read_pgm(&a.object)?;
    let mut variants = vec![(BasisKind::Identity, 0.0)];
    variants.extend(a.lambda.iter().map(|&l| (basis_kind, l)));

    let mut plans: HashMap<String, ReductionPlan> = HashMap::new();
    let mut rows = Vec::new();
    let cfg = ExperimentConfig::default();
    for (gi, ord) in a.gi.iter().zip(&a.ordinary) {
        let mut seed_of_pair = None;
        for (channel, path, kind) in [("gi", gi, ModelKind::Ghost), ("ordinary", ord, ModelKind::Ordinary)] {
            let (file, meta, model) = load_measurement(path, &ModelArgs::default(), &cfg)?;
            if meta.model.kind != kind {
                return Err(CliError::Config(format!("{} is not a {channel} measurement", path.display())));
            }
            match seed_of_pair {
                None => seed_of_pair = Some(meta.seed),
                Some(s) if s != meta.seed => {
                    return Err(CliError::Config(format!(
                        "{} has seed {}, its ghost-image partner has seed {s}",
                        path.display(),
                        meta.seed
                    )))
                }
                _ => {}
            }
            check_truth(&truth, &model)?;
            let plan = match plans.entry(meta.fingerprint.clone()) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => e.insert(ReductionPlan::worst_case(&model)?),
            };
            let refined = refine(plan, &model, &file)?;
            let g = model.geometry();
            for &(kind, lambda) in &variants {
                let basis = SparsityBasis::new(kind, g.width, g.height)?;
                let std = plan.component_std(&basis)?;
                let (image, _, _) = plan.finish(&refined.estimate, &PipelineConfig::new(basis, lambda), &std)?;
                rows.push(CompareRow {
                    seed: meta.seed,
                    channel,
                    basis: kind,
                    lambda,
                    mse: image_metrics(image.as_slice(), &truth)?.mse,
                });
            }
        }
    }

    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let per_seed = a.out_dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&per_seed)?;
    w.write_record(["seed", "channel", "basis", "lambda", "mse"])?;
    for r in &rows {
        w.write_record([
            r.seed.to_string(),
            r.channel.to_string(),
            r.basis.to_string(),
            r.lambda.to_string(),
            r.mse.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&per_seed))?;

    let summary = summarize(&rows, &variants);
    let summary_path = a.out_dir.join("compare_summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record(["basis", "lambda", "seeds", "gi_mean_mse", "ordinary_mean_mse", "gi_wins", "ties"])?;
    for s in &summary {
        w.write_record([
            s.basis.to_string(),
            s.lambda.to_string(),
            s.seeds.to_string(),
            s.gi_mean.to_string(),
            s.ordinary_mean.to_string(),
            s.gi_wins.to_string(),
            s.ties.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&summary_path))?;

    let mut md = String::from("| basis | lambda | seeds | GI mean MSE | ordinary mean MSE | GI wins | ties |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for s in &summary {
        md.push_str(&format!(
            "| {} | {} | {} | {:.6} | {:.6} | {} | {} |\n",
            s.basis, s.lambda, s.seeds, s.gi_mean, s.ordinary_mean, s.gi_wins, s.ties
        ));
    }
    let md_path = a.out_dir.join("compare.md");
    fs::write(&md_path, &md).map_err(io_err(&md_path))?;
    print!("{md}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct SummaryRow {
    basis: BasisKind,
    lambda: f64,
    seeds: usize,
    gi_mean: f64,
    ordinary_mean: f64,
    gi_wins: usize,
    ties: usize,
}

fn summarize(rows: &[CompareRow], variants: &[(BasisKind, f64)]) -> Vec<SummaryRow> {
    variants
        .iter()
        .map(|&(basis, lambda)| {
            let pick = |channel: &str| -> Vec<&CompareRow> {
                rows.iter()
                    .filter(|r| r.basis == basis && r.lambda == lambda && r.channel == channel)
                    .collect()
            };
            let gi = pick("gi");
            let ord = pick("ordinary");
            let mean = |v: &[&CompareRow]| v.iter().map(|r| r.mse).sum::<f64>() / v.len().max(1) as f64;
            let mut wins = 0;
            let mut ties = 0;
            for (g, o) in gi.iter().zip(&ord) {
                if (g.mse - o.mse).abs() <= TIE_TOLERANCE {
                    ties += 1;
                } else if g.mse < o.mse {
                    wins += 1;
                }
            }
            SummaryRow {
                basis,
                lambda,
                seeds: gi.len(),
                gi_mean: mean(&gi),
                ordinary_mean: mean(&ord),
                gi_wins: wins,
                ties,
            }
        })
        .collect()
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let est = read_pgm(&a.estimate)?;
    let truth = read_pgm(&a.truth)?;
    if (est.width(), est.height()) != (truth.width(), truth.height()) {
        return Err(CliError::Config("images have different sizes".into()));
    }
    let m = image_metrics(est.data(), &truth)?;
    println!("mse,psnr");
    println!("{},{}", m.mse, m.psnr);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(with_suffix(Path::new("out/m.mgi"), "_s3"), PathBuf::from("out/m_s3.mgi"));
        assert_eq!(with_suffix(Path::new("m"), "_ordinary"), PathBuf::from("m_ordinary"));
    }

    #[test]
    fn summary_matches_rows() {
        let mk = |seed, channel, mse| CompareRow {
            seed,
            channel,
            basis: BasisKind::Dct2,
            lambda: 1.25,
            mse,
        };
        let rows = vec![
            mk(1, "gi", 0.1),
            mk(1, "ordinary", 0.3),
            mk(2, "gi", 0.5),
            mk(2, "ordinary", 0.2),
            mk(3, "gi", 0.2),
            mk(3, "ordinary", 0.2),
        ];
        let s = summarize(&rows, &[(BasisKind::Dct2, 1.25)]);
        assert_eq!(s[0].seeds, 3);
        assert_eq!(s[0].gi_wins, 1);
        assert_eq!(s[0].ties, 1);
        assert!((s[0].gi_mean - 0.8 / 3.0).abs() < 1e-15);
        assert!((s[0].ordinary_mean - 0.7 / 3.0).abs() < 1e-15);
    }
}
