use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use psrom_core::intervention::{lesion_table, suggested_plan, LesionConfig};
use psrom_core::oracle::solution_tables;
use psrom_core::surface::{load_surface, save_surface};
use psrom_core::{
    apply_modification, build_surface, detect_lesions, fit_ideal, load_tree, solve, BoundaryConditionSet,
    ExecutionMode, IdealFitProblem, IdealProfile, ModificationPlan, OracleConfig, SolverConfig, SurfaceConfig,
};

#[derive(Parser)]
#[command(name = "psrom", version, about = "Reduced-order coronary what-if solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the healthy radius profile of a tree.
    FitIdeal {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the four anchors and write the response surface.
    BuildSurface {
        #[arg(long = "in")]
        input: PathBuf,
        /// Boundary conditions; outlet resistances keyed by point id.
        #[arg(long)]
        bc: PathBuf,
        /// Previously fitted profile; fitted afresh when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List lesions of the surface's patient tree.
    Lesions {
        #[arg(long)]
        surface: PathBuf,
    },
    /// Solve a modified geometry and print point and edge tables.
    Solve {
        #[arg(long)]
        surface: PathBuf,
        /// Modified tree; alternatively give --plan.
        #[arg(long, conflicts_with = "plan")]
        modified: Option<PathBuf>,
        /// Comma-separated modified edge ids (distal point ids).
        #[arg(long, value_delimiter = ',')]
        edges: Vec<usize>,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Idealize lesion N fully (index into `lesions` output).
        #[arg(long, conflicts_with_all = ["plan", "modified"])]
        lesion: Option<usize>,
        #[arg(long, default_value_t = 0.02)]
        tol2: f64,
    },
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::FitIdeal { input, out } => {
            let tree = load_tree(fs::File::open(input)?)?;
            let profile = fit_ideal(&IdealFitProblem::new(&tree))?;
            fs::write(out, serde_json::to_string_pretty(&profile)?)?;
        }
        Command::BuildSurface { input, bc, profile, out } => {
            let tree = load_tree(fs::File::open(input)?)?;
            let bc: BoundaryConditionSet = serde_json::from_str(&fs::read_to_string(bc)?)?;
            let profile: IdealProfile = match profile {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => fit_ideal(&IdealFitProblem::new(&tree))?,
            };
            let surface = build_surface(
                &tree,
                &profile,
                &bc,
                &OracleConfig::default(),
                &SurfaceConfig::default(),
                ExecutionMode::Parallel,
            )?;
            save_surface(&surface, fs::File::create(out)?)?;
        }
        Command::Lesions { surface } => {
            let surface = load_surface(fs::File::open(surface)?)?;
            let lesions = detect_lesions(&surface.patient_tree, &surface.ideal_tree.radii(), &LesionConfig::default())?;
            print!("{}", lesion_table(&lesions));
        }
        Command::Solve { surface, modified, edges, plan, lesion, tol2 } => {
            let surface = load_surface(fs::File::open(surface)?)?;
            let ideal = surface.ideal_tree.radii();
            let plan: Option<ModificationPlan> = match (plan, lesion) {
                (Some(p), _) => Some(serde_json::from_str(&fs::read_to_string(p)?)?),
                (None, Some(i)) => {
                    let lesions = detect_lesions(&surface.patient_tree, &ideal, &LesionConfig::default())?;
                    let l = lesions.get(i).ok_or_else(|| format!("no lesion {i}; found {}", lesions.len()))?;
                    Some(suggested_plan(&surface.patient_tree, l, 0.2))
                }
                (None, None) => None,
            };
            let (tree, edge_set) = match (plan, modified) {
                (Some(plan), _) => apply_modification(&surface.patient_tree, &ideal, &plan)?,
                (None, Some(m)) => (load_tree(fs::File::open(m)?)?, edges.into_iter().collect()),
                (None, None) => (surface.patient_tree.clone(), BTreeSet::new()),
            };
            let config = SolverConfig { tol2, ..SolverConfig::default() };
            let sol = solve(&surface, &tree, &edge_set, &config)?;
            let (points, edges) = solution_tables(&tree, &sol);
            eprintln!("converged {} after {} iterations", sol.converged, sol.iterations);
            print!("{points}\n{edges}");
        }
    }
    Ok(())
}
