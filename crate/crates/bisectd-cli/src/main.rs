//! `bisectd`: batch driver for seed generation, refinement, analysis,
//! verification and export.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 invariant violation, 3 budget or limits.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context as _;
use bisectd_core::analysis::lemmas::scan_lemmas;
use bisectd_core::analysis::{
    c_of_seed, gensharp_gap_violations, level_jump_stats, regularized_mesh_size, verify_level_estimate,
    GradingReport, LevelEstimateMode, SeedConstants,
};
use bisectd_core::auxtria::{
    build_aux, decompose_layers, layer_violations, neighborhood_scan, pre_diamond_violations, AuxError,
};
use bisectd_core::forest::{is_conforming, ForestError};
use bisectd_core::io::{export_vtk, load_mesh, IoError, LoadedMesh, MeshDocument};
use bisectd_core::seed::{kuhn_simplex, SeedError};
use bisectd_core::{kuhn_cube, ExecPolicy, Forest, NodeId, Refiner, SeedTriangulation, VertexId};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "bisectd", version, about = "Conforming bisection refinement and grading analysis")]
struct Cli {
    /// Run every scan on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedKind {
    /// Kuhn triangulation of the unit cube (d! simplices).
    Kuhn,
    /// A single Kuhn simplex.
    KuhnSimplex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Vtk,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemmas,
    Grading,
    Jumps,
    Aux,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a builtin seed triangulation.
    Seed {
        kind: SeedKind,
        /// Dimension (alternatively `--dim`).
        #[arg(value_name = "DIM", conflicts_with = "dim")]
        dim_pos: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Apply one full refinement so the result satisfies the matching-neighbor condition.
        #[arg(long)]
        onboard: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refine a mesh with conforming closure.
    Refine {
        /// Mesh file or `kuhn:<d>`.
        input: String,
        /// Uniform refinement rounds (each bisects every leaf once).
        #[arg(long, conflicts_with_all = ["random", "marks"])]
        steps: Option<usize>,
        /// Number of random leaf closures.
        #[arg(long, conflicts_with = "marks")]
        random: Option<usize>,
        /// RNG seed for `--random` (ChaCha8).
        #[arg(long, default_value_t = 0)]
        rng: u64,
        /// JSON array of leaf node ids to mark.
        #[arg(long)]
        marks: Option<PathBuf>,
        /// Maximum bisections per closure.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grading report (regularized mesh size, γ, level jumps).
    Analyze {
        input: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run invariant scanners; exits 2 on any violation.
    Verify {
        input: String,
        /// Suites to run (default: all).
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<Suite>,
        /// Depth of the auxiliary triangulation built by the aux suite (default 2d).
        #[arg(long)]
        steps: Option<usize>,
        /// Vertices sampled by the neighborhood scan.
        #[arg(long, default_value_t = 64)]
        sample: usize,
    },
    /// Convert a mesh to another format.
    Export {
        input: String,
        #[arg(long, value_enum, default_value_t = Format::Vtk)]
        format: Format,
        /// Attach the regularized mesh-size exponent as cell data (VTK).
        #[arg(long)]
        with_report: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the auxiliary triangulation around a vertex.
    Aux {
        input: String,
        #[arg(long, default_value_t = 0)]
        vertex: u32,
        /// Base level `m`.
        #[arg(long, default_value_t = 0)]
        m: i64,
        /// Depth `j`.
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
    Limit(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::BudgetExceeded { .. } => Failure::Limit(e.to_string()),
            ForestError::GenerationConflict { .. } => Failure::Invariant(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Invariant { .. } => Failure::Invariant(e.to_string()),
            IoError::Forest(f) => f.into(),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<AuxError> for Failure {
    fn from(e: AuxError) -> Self {
        match e {
            AuxError::Forest(f) => f.into(),
            AuxError::UnknownVertex(_) | AuxError::LevelTooHigh { .. } => Failure::Usage(e.to_string()),
            e => Failure::Invariant(e.to_string()),
        }
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    configure_threads();
    let exec = if cli.sequential {
        ExecPolicy::Sequential
    } else {
        ExecPolicy::Parallel
    };
    match run(cli.cmd, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (1, m),
                Failure::Other(e) => (1, format!("{e:#}")),
                Failure::Invariant(m) => (2, format!("invariant violation: {m}")),
                Failure::Limit(m) => (3, m),
            };
            eprintln!("bisectd: {msg}");
            ExitCode::from(code)
        }
    }
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("BISECTD_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cmd: Cmd, exec: ExecPolicy) -> Res<()> {
    match cmd {
        Cmd::Seed {
            kind,
            dim_pos,
            dim,
            onboard,
            out,
        } => {
            let d = dim_pos
                .or(dim)
                .ok_or_else(|| Failure::Usage("seed needs a dimension".into()))?;
            let seed = builtin_seed(kind, d)?;
            let seed = if onboard {
                seed.onboard_matching_neighbor().map_err(seed_usage)?
            } else {
                seed
            };
            emit(out.as_deref(), &MeshDocument::from_seed(&seed).to_json())
        }
        Cmd::Refine {
            input,
            steps,
            random,
            rng,
            marks,
            budget,
            out,
        } => {
            let start = Instant::now();
            let LoadedMesh { mut forest, tria, .. } = load_input(&input)?;
            let mut r = Refiner::new(&mut forest, &tria)?;
            if let Some(b) = budget {
                r.set_budget(b);
            }
            if let Some(k) = steps {
                r.uniform(k)?;
            }
            if let Some(k) = random {
                r.random_refine(&mut ChaCha8Rng::seed_from_u64(rng), k)?;
            }
            if let Some(p) = marks {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let ids: Vec<u32> = serde_json::from_str(&text).context("marks must be a JSON array of node ids")?;
                let ids: Vec<NodeId> = ids.into_iter().map(NodeId).collect();
                r.refine_marked(&ids).map_err(|e| match e {
                    ForestError::NotALeaf(n) | ForestError::UnknownNode(n) => {
                        Failure::Usage(format!("mark {n} is not a leaf of the input mesh"))
                    }
                    e => e.into(),
                })?;
            }
            let tria = r.into_triangulation();
            let (max_gen, max_level) = tria
                .leaves()
                .map(|t| (forest.generation(t), forest.level(t)))
                .fold((i64::MIN, i64::MIN), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            emit(out.as_deref(), &MeshDocument::from_forest(&forest, &tria, None).to_json())?;
            eprintln!(
                "leaves={} max_gen={} max_level={} wall_ms={}",
                tria.len(),
                max_gen,
                max_level,
                start.elapsed().as_millis()
            );
            Ok(())
        }
        Cmd::Analyze { input, format, out } => {
            let m = load_input(&input)?;
            let consts = constants(&m.forest)?;
            let rep = regularized_mesh_size(&m.forest, &m.tria, consts.big_gamma, exec)?;
            let text = match format {
                Format::Json => to_json(&rep)?,
                Format::Csv => rep.to_csv(),
                Format::Vtk => return Err(Failure::Usage("analyze writes json or csv".into())),
            };
            emit(out.as_deref(), &text)?;
            eprintln!(
                "leaves={} gamma={} c1={:.6} c2={:.6} level_estimate={}",
                rep.leaves,
                rep.gamma,
                rep.c1,
                rep.c2,
                if rep.level_estimate_ok { "ok" } else { "FAILED" }
            );
            if rep.gamma_exponent > 1 {
                return Err(Failure::Invariant(format!("grading gamma = {} exceeds 2", rep.gamma)));
            }
            Ok(())
        }
        Cmd::Verify {
            input,
            suite,
            steps,
            sample,
        } => {
            let m = load_input(&input)?;
            let suites = if suite.is_empty() {
                vec![Suite::Lemmas, Suite::Grading, Suite::Jumps, Suite::Aux]
            } else {
                suite
            };
            let mut failures = Vec::new();
            for s in suites {
                failures.extend(verify_suite(&m, s, steps, sample, exec)?);
            }
            if failures.is_empty() {
                println!("ok");
                Ok(())
            } else {
                for f in &failures {
                    println!("{f}");
                }
                Err(Failure::Invariant(format!("{} violation(s)", failures.len())))
            }
        }
        Cmd::Export {
            input,
            format,
            with_report,
            out,
        } => {
            let m = load_input(&input)?;
            let text = match format {
                Format::Json => MeshDocument::from_forest(&m.forest, &m.tria, m.layer.clone()).to_json(),
                Format::Csv => {
                    let consts = constants(&m.forest)?;
                    regularized_mesh_size(&m.forest, &m.tria, consts.big_gamma, exec)?.to_csv()
                }
                Format::Vtk => {
                    let mut extra = Vec::new();
                    if with_report {
                        let consts = constants(&m.forest)?;
                        let rep = regularized_mesh_size(&m.forest, &m.tria, consts.big_gamma, exec)?;
                        extra.push(("h_exponent", rep.rows.iter().map(|r| r.h_exponent).collect()));
                    }
                    if let Some(l) = &m.layer {
                        extra.push(("layer", l.clone()));
                    }
                    let (text, warn) = export_vtk(&m.forest, &m.tria, &extra);
                    if let Some(w) = warn {
                        eprintln!("bisectd: warning: {w}");
                    }
                    text
                }
            };
            emit(out.as_deref(), &text)
        }
        Cmd::Aux {
            input,
            vertex,
            m,
            steps,
            format,
            out,
        } => {
            let LoadedMesh { mut forest, .. } = load_input(&input)?;
            let aux = build_aux(&mut forest, VertexId(vertex), m, steps)?;
            let consts = constants(&forest)?;
            let rep = regularized_mesh_size(&forest, &aux.tria, consts.big_gamma, exec)?;
            let layers: Vec<i64> = aux.leaf_layers().iter().map(|(_, l)| l.code()).collect();
            let text = match format {
                Format::Json => MeshDocument::from_forest(&forest, &aux.tria, Some(layers)).to_json(),
                Format::Vtk => export_vtk(&forest, &aux.tria, &[("layer", layers)]).0,
                Format::Csv => rep.to_csv(),
            };
            emit(out.as_deref(), &text)?;
            eprintln!("leaves={} gamma={}", aux.tria.len(), rep.gamma);
            Ok(())
        }
    }
}

fn seed_usage(e: SeedError) -> Failure {
    Failure::Usage(e.to_string())
}

fn builtin_seed(kind: SeedKind, d: usize) -> Res<SeedTriangulation> {
    if d == 0 {
        return Err(Failure::Usage("dimension must be at least 1".into()));
    }
    match kind {
        SeedKind::Kuhn => kuhn_cube(d),
        SeedKind::KuhnSimplex => kuhn_simplex(d),
    }
    .map_err(seed_usage)
}

/// `kuhn:<d>` or a native mesh file.
fn load_input(input: &str) -> Res<LoadedMesh> {
    if let Some(d) = input.strip_prefix("kuhn:") {
        let d: usize = d
            .parse()
            .map_err(|_| Failure::Usage(format!("bad builtin seed {input:?}")))?;
        let (forest, tria) = Forest::new(&builtin_seed(SeedKind::Kuhn, d)?)?;
        return Ok(LoadedMesh {
            forest,
            tria,
            layer: None,
        });
    }
    load_mesh(Path::new(input)).map_err(|e| match e {
        IoError::Io(io) => Failure::Usage(format!("{input}: {io}")),
        e => e.into(),
    })
}

fn constants(forest: &Forest) -> Res<SeedConstants> {
    Ok(c_of_seed(forest.seed())?)
}

fn to_json(x: &GradingReport) -> Res<String> {
    let mut s = serde_json::to_string_pretty(x).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout")?,
    }
    Ok(())
}

fn verify_suite(m: &LoadedMesh, suite: Suite, steps: Option<usize>, sample: usize, exec: ExecPolicy) -> Res<Vec<String>> {
    let (forest, tria) = (&m.forest, &m.tria);
    let mut out = Vec::new();
    match suite {
        Suite::Lemmas => {
            let conf = is_conforming(forest, tria, exec)?;
            if let Some(w) = conf.witness {
                out.push(format!("lemmas: nonconforming: {w:?}"));
            }
            let rep = scan_lemmas(forest, tria, exec)?;
            for v in rep.violations {
                out.push(format!("lemmas: {:?} at node {:?}: {}", v.check, v.node, v.detail));
            }
        }
        Suite::Grading => {
            let consts = constants(forest)?;
            let rep = regularized_mesh_size(forest, tria, consts.big_gamma, exec)?;
            if rep.gamma_exponent > 1 {
                out.push(format!("grading: gamma = {} exceeds 2", rep.gamma));
            }
            if let Some((a, b)) =
                verify_level_estimate(forest, tria, consts.big_gamma, LevelEstimateMode::Exact, exec)?
            {
                out.push(format!(
                    "grading: level estimate with Gamma = {} fails for leaves {} and {}",
                    consts.big_gamma, a.0, b.0
                ));
            }
        }
        Suite::Jumps => {
            let consts = constants(forest)?;
            let st = level_jump_stats(forest, tria, Some(&consts.j), exec)?;
            for v in st.violations {
                out.push(format!(
                    "jumps: vertex {} ({}-macro) jumps {} > {}",
                    v.vertex, v.macro_dim, v.jump, v.bound
                ));
            }
            for v in gensharp_gap_violations(forest, tria, consts.c, exec)? {
                out.push(format!(
                    "jumps: vertex {} ({}-macro) #-generation gap {} > {}",
                    v.vertex, v.macro_dim, v.gap, v.bound
                ));
            }
        }
        Suite::Aux => {
            let consts = constants(forest)?;
            let used: Vec<VertexId> = {
                let mut seen = vec![false; forest.num_vertices()];
                for t in tria.leaves() {
                    for &v in forest.simplex(t) {
                        seen[v.idx()] = true;
                    }
                }
                (0..forest.num_vertices() as u32).map(VertexId).filter(|v| seen[v.idx()]).collect()
            };
            let k = sample.clamp(1, used.len());
            let picks: Vec<VertexId> = (0..k).map(|i| used[i * used.len() / k]).collect();
            let scan = neighborhood_scan(forest, tria, &consts, &picks, exec)?;
            for (v, mm, t) in scan.not_finer {
                out.push(format!("aux: leaf {t} is not in the limit triangulation around vertex {v} at m = {mm}"));
            }
            for c in scan.chains {
                out.push(format!("aux: chain violation {c:?}"));
            }
            // Fresh copy of the seed so the aux construction does not touch the input forest.
            let (mut f, _) = Forest::new(forest.seed())?;
            let j = steps.unwrap_or(2 * f.dim());
            let aux = build_aux(&mut f, VertexId(0), 0, j)?;
            if let Some(w) = is_conforming(&f, &aux.tria, exec)?.witness {
                out.push(format!("aux: nonconforming: {w:?}"));
            }
            let dec = decompose_layers(&f, &aux)?;
            out.extend(layer_violations(&f, &aux, &dec).into_iter().map(|s| format!("aux: {s}")));
            let (_, bad) = pre_diamond_violations(&f, &aux)?;
            for e in bad {
                out.push(format!("aux: diagonal {}-{} has no pre-diamond", e[0].0, e[1].0));
            }
            let rep = regularized_mesh_size(&f, &aux.tria, consts.big_gamma, exec)?;
            if rep.gamma_exponent > 1 {
                out.push(format!("aux: gamma = {} exceeds 2", rep.gamma));
            }
        }
    }
    Ok(out)
}
