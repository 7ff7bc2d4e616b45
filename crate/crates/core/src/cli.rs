//! The `c2f` command-line tool.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode_volume, encode_labels, GridShape, TargetSet};
use crate::error::{Error, Result};
use crate::geometry::{GraspPose, GripperGeometry, Vec3};
use crate::io;
use crate::losses::{gradcheck, total_loss, LossConfig};
use crate::metrics::{evaluate, nms, perturb_gt, MatchThresholds};
use crate::sampler::{generate_dataset, GraspLabelSet, GraspQuality, SamplerConfig};

#[derive(Debug, Parser)]
#[command(name = "c2f", version, about = "Coarse-to-fine 6-DoF grasp toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample and label antipodal grasps on a point cloud.
    Sample(SampleArgs),
    /// Encode ground-truth grasps into target volumes at chosen grasp points.
    Encode(EncodeArgs),
    /// Decode a volume file into ranked grasps.
    Decode(DecodeArgs),
    /// Score predicted grasps against ground truth (AP at 5 and 10 degrees).
    Evaluate(EvaluateArgs),
    /// Evaluate the training losses and check their gradients.
    Losscheck(LosscheckArgs),
    /// Produce noisy predictions from ground-truth grasps.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
struct GripperArgs {
    /// Maximum finger opening (m).
    #[arg(long, default_value_t = GripperGeometry::default().max_width)]
    max_width: f64,
    /// Finger length along the approach axis (m).
    #[arg(long, default_value_t = GripperGeometry::default().finger_depth)]
    finger_depth: f64,
    /// Finger extent along the gripper z-axis (m).
    #[arg(long, default_value_t = GripperGeometry::default().finger_height)]
    finger_height: f64,
    /// Finger and palm thickness (m).
    #[arg(long, default_value_t = GripperGeometry::default().finger_thickness)]
    finger_thickness: f64,
}

impl GripperArgs {
    fn geometry(&self) -> Result<GripperGeometry> {
        let g = GripperGeometry {
            max_width: self.max_width,
            finger_depth: self.finger_depth,
            finger_height: self.finger_height,
            finger_thickness: self.finger_thickness,
            ..Default::default()
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Input ASCII PLY cloud.
    #[arg(long)]
    cloud: PathBuf,
    /// Output grasp file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Neighbourhood size for normal estimation.
    #[arg(long, default_value_t = SamplerConfig::default().neighbors_k)]
    neighbors_k: usize,
    /// Number of seed points drawn from the cloud.
    #[arg(long, default_value_t = SamplerConfig::default().num_seed_points)]
    num_seeds: usize,
    /// Closing-axis orientations per seed.
    #[arg(long, default_value_t = SamplerConfig::default().roll_steps)]
    roll_steps: usize,
    /// Approach depths per orientation.
    #[arg(long, default_value_t = SamplerConfig::default().depth_steps)]
    depth_steps: usize,
    /// Friction coefficient of the antipodal test.
    #[arg(long, default_value_t = SamplerConfig::default().friction_mu)]
    friction_mu: f64,
    /// Minimum number of enclosed points.
    #[arg(long, default_value_t = SamplerConfig::default().min_contact_points)]
    min_contacts: usize,
    /// Contact band next to each closed finger (m).
    #[arg(long, default_value_t = SamplerConfig::default().contact_tolerance)]
    contact_tolerance: f64,
    /// Largest neighbourhood surface variation whose normal is trusted.
    #[arg(long, default_value_t = SamplerConfig::default().max_surface_variation)]
    max_surface_variation: f64,
    /// Orient normals towards this point, given as x,y,z (default: away from the centroid).
    #[arg(long, value_parser = parse_vec3)]
    viewpoint: Option<Vec3>,
    /// Write only the grasps labelled good.
    #[arg(long)]
    good_only: bool,
    #[command(flatten)]
    gripper: GripperArgs,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Cloud whose points serve as grasp points.
    #[arg(long)]
    cloud: PathBuf,
    /// Ground-truth grasp file.
    #[arg(long)]
    grasps: PathBuf,
    /// Output volume file.
    #[arg(long)]
    out: PathBuf,
    /// Output listing of positive cells, one `point i j grasp` line each.
    #[arg(long)]
    positives: Option<PathBuf>,
    /// Draw this many grasp points from the cloud instead of using all of them.
    #[arg(long, requires = "seed")]
    num_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = GridShape::default().n_y)]
    n_y: usize,
    #[arg(long, default_value_t = GridShape::default().n_z)]
    n_z: usize,
    #[command(flatten)]
    gripper: GripperArgs,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Input volume file.
    #[arg(long)]
    volume: PathBuf,
    /// Output grasp file.
    #[arg(long)]
    out: PathBuf,
    /// Keep cells whose confidence reaches this value, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    conf_threshold: f64,
    /// Apply non-maximum suppression at 2 cm / 5 degrees.
    #[arg(long)]
    nms: bool,
    #[command(flatten)]
    gripper: GripperArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predicted grasps; confidences rank them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth grasps; only good ones count.
    #[arg(long)]
    gt: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LosscheckArgs {
    /// Predicted volume file.
    #[arg(long)]
    pred: PathBuf,
    /// Target volume file; cells with confidence >= 0.5 are positives.
    #[arg(long)]
    target: PathBuf,
    /// Seed of the gradient-check perturbation.
    #[arg(long)]
    seed: u64,
    /// Finite-difference step, in (0, 1e-3].
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = LossConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = LossConfig::default().gamma)]
    gamma: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda_cls)]
    lambda_cls: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda_rot)]
    lambda_rot: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_x: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_y: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_z: f64,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    /// Ground-truth grasp file.
    #[arg(long)]
    gt: PathBuf,
    /// Output prediction file.
    #[arg(long)]
    out: PathBuf,
    /// Per-axis translation noise (m).
    #[arg(long)]
    sigma_t: f64,
    /// Rotation noise (rad).
    #[arg(long)]
    sigma_r: f64,
    #[arg(long)]
    seed: u64,
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got '{s}'"));
    }
    let mut v = [0.0; 3];
    for (x, p) in v.iter_mut().zip(parts) {
        *x = p.trim().parse().map_err(|_| format!("invalid number '{p}'"))?;
    }
    Ok(Vec3::from(v))
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code: 0 on success, 1 for bad input, 2 for internal errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Sample(a) => sample(a, out),
        Command::Encode(a) => encode(a, out),
        Command::Decode(a) => decode(a, out, err),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Losscheck(a) => losscheck(a, out),
        Command::Perturb(a) => perturb(a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| Error::io("<stdout>", e))
}

fn sample(a: SampleArgs, out: &mut dyn Write) -> Result<()> {
    let gripper = a.gripper.geometry()?;
    let cfg = SamplerConfig {
        neighbors_k: a.neighbors_k,
        num_seed_points: a.num_seeds,
        roll_steps: a.roll_steps,
        depth_steps: a.depth_steps,
        friction_mu: a.friction_mu,
        min_contact_points: a.min_contacts,
        contact_tolerance: a.contact_tolerance,
        max_surface_variation: a.max_surface_variation,
        viewpoint: a.viewpoint,
        rng_seed: a.seed,
    };
    let cloud = io::read_ply(&a.cloud)?;
    let mut set = generate_dataset(&cloud, &gripper, &cfg)?;
    let (good, bad) = (set.count(GraspQuality::Good), set.count(GraspQuality::Bad));
    if a.good_only {
        set = GraspLabelSet::new(set.good().copied().collect(), vec![GraspQuality::Good; good], set.source)?;
    }
    io::write_grasps(&set, &a.out)?;
    say(out, format_args!("{good} good, {bad} bad grasps from {} points", cloud.len()))
}

fn encode(a: EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let gripper = a.gripper.geometry()?;
    let shape = GridShape::new(a.n_y, a.n_z)?;
    let cloud = io::read_ply(&a.cloud)?;
    let gt = io::read_grasps(&a.grasps)?;
    let points: Vec<Vec3> = match (a.num_points, a.seed) {
        (Some(n), Some(seed)) => {
            if n > cloud.len() {
                return Err(Error::invalid(format!(
                    "--num-points {n} exceeds the {} cloud points",
                    cloud.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, cloud.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| cloud.points[i]).collect()
        }
        _ => cloud.points.clone(),
    };
    let targets = encode_labels(&points, &gt, &gripper, shape)?;
    io::write_volume(&targets.volumes, &a.out)?;
    if let Some(path) = &a.positives {
        let mut text = String::from("# point i j grasp\n");
        for (at, g) in &targets.assignments {
            text.push_str(&format!("{} {} {} {}\n", at.point, at.i, at.j, g));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    say(
        out,
        format_args!("{} grasp points, {} positive cells", points.len(), targets.positives.len()),
    )
}

fn decode(a: DecodeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let gripper = a.gripper.geometry()?;
    if !(0.0..=1.0).contains(&a.conf_threshold) {
        return Err(Error::invalid(format!(
            "--conf-threshold {} outside [0, 1]",
            a.conf_threshold
        )));
    }
    let volumes = io::read_volume(&a.volume)?;
    let decoded = decode_volume(&volumes, &gripper, a.conf_threshold)?;
    if decoded.degenerate_cells > 0 {
        let _ = writeln!(
            err,
            "warning: skipped {} cells with a degenerate roll pair",
            decoded.degenerate_cells
        );
    }
    let mut poses = decoded.poses();
    if a.nms {
        let th = MatchThresholds::hard();
        poses = nms(&poses, th.trans_tol, th.rot_tol);
    }
    let n = poses.len();
    let set = GraspLabelSet::new(poses, vec![GraspQuality::Good; n], format!("decoded {}", a.volume.display()))?;
    io::write_grasps(&set, &a.out)?;
    say(out, format_args!("{n} grasps"))
}

/// Plain-text evaluation report.
pub fn format_report(report: &crate::metrics::EvalReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("num_predictions = {}\n", report.num_predictions));
    s.push_str(&format!("num_ground_truth = {}\n", report.num_ground_truth));
    s.push_str(&format!("evaluated = {}\n", report.evaluated.len()));
    s.push_str(&format!("ap_hard = {:.6}\n", report.ap_hard));
    s.push_str(&format!("ap_easy = {:.6}\n", report.ap_easy));
    s.push_str("# rank confidence hard_match easy_match precision_hard precision_easy\n");
    let show = |m: Option<usize>| m.map_or_else(|| "-".to_string(), |g| g.to_string());
    for (k, pose) in report.evaluated.iter().enumerate() {
        s.push_str(&format!(
            "{} {:.6} {} {} {:.6} {:.6}\n",
            k + 1,
            pose.confidence,
            show(report.hard.matches[k]),
            show(report.easy.matches[k]),
            report.hard.precision_at_rank[k],
            report.easy.precision_at_rank[k],
        ));
    }
    s
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let preds = io::read_grasps(&a.pred)?;
    let gt = io::read_grasps(&a.gt)?;
    let gts: Vec<GraspPose> = gt.good().copied().collect();
    let report = evaluate(&preds.grasps, &gts)?;
    let text = format_report(&report);
    if let Some(path) = &a.out {
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn losscheck(a: LosscheckArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = LossConfig {
        alpha: a.alpha,
        gamma: a.gamma,
        lambda_x: a.lambda_x,
        lambda_y: a.lambda_y,
        lambda_z: a.lambda_z,
        lambda_cls: a.lambda_cls,
        lambda_rot: a.lambda_rot,
    };
    cfg.validate()?;
    let pred = io::read_volume(&a.pred)?;
    let targets = TargetSet::from_volumes(io::read_volume(&a.target)?);
    let report = total_loss(&pred, &targets, &cfg)?;
    let check = gradcheck(&pred, &targets, &cfg, a.step, a.seed)?;
    if !check.max_rel_error.is_finite() {
        return Err(Error::Invariant("gradient check produced a non-finite error".into()));
    }
    say(
        out,
        format_args!(
            "positives = {}\ncls = {:.9e}\nrot = {:.9e}\ntrans = {:.9e}\ntotal = {:.9e}\n\
             gradcheck_max_rel_error = {:.3e}\ngradcheck_checked = {}\ngradcheck_skipped = {}",
            targets.positives.len(),
            report.cls,
            report.rot,
            report.trans,
            report.total,
            check.max_rel_error,
            check.checked,
            check.skipped
        ),
    )
}

fn perturb(a: PerturbArgs, out: &mut dyn Write) -> Result<()> {
    let gt = io::read_grasps(&a.gt)?;
    let poses = perturb_gt(&gt, a.sigma_t, a.sigma_r, a.seed)?;
    let n = poses.len();
    let set = GraspLabelSet::new(poses, vec![GraspQuality::Good; n], format!("perturb seed {}", a.seed))?;
    io::write_grasps(&set, &a.out)?;
    say(out, format_args!("{n} perturbed grasps"))
}
