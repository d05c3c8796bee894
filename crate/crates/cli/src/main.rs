//! `clustervis`: batch driver for the clustering pipeline and launcher for
//! the HTTP service.
//!
//! Exit codes: 0 on success, 2 on invalid input or parameters, 3 when the
//! graph shows no significant structure (output is still written).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use clustervis_core::explorer::{StatMode, StatRequest};
use clustervis_core::export::{ExportFormat, HierarchyDocument};
use clustervis_core::graph::{load_attributes, write_edge_list, Graph};
use clustervis_core::modularity::{greedy_maximize, write_partition_tsv};
use clustervis_core::pipeline::{self, PipelineParams};
use clustervis_core::significance::{derive_seed, null_distribution, sample_configuration_graph};
use clustervis_core::{fixtures, Explorer};

use config::Settings;

const EXIT_INVALID: u8 = 2;
const EXIT_NO_STRUCTURE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "clustervis", version, about = "Significance-gated hierarchical graph clustering")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Master seed; every stage seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials for the null model.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Restrict to the largest connected component.
    #[arg(long, global = true)]
    largest_component: bool,
    /// Apply the full-graph threshold to the deepest splits as well.
    #[arg(long, global = true)]
    strict_bottom: bool,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo trials; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML file with defaults for any of the flags above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Best partition as `token<TAB>cluster`.
    Cluster { edges: PathBuf },
    /// Null distribution of maximal modularity and the observed p-value.
    Significance { edges: PathBuf },
    /// Full cluster tree as a hierarchy document.
    Hierarchy {
        edges: PathBuf,
        /// Attribute table to carry along for later statistics.
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
    /// Layout of a view of a hierarchy document.
    Layout {
        hierarchy: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, value_enum, default_value = "view-json")]
        format: LayoutFormat,
    },
    /// Chi-squared table of an attribute over a view.
    Stats {
        hierarchy: PathBuf,
        #[arg(long)]
        attribute: String,
        /// Attach this table first (replaces columns of the same name).
        #[arg(long)]
        attributes: Option<PathBuf>,
        #[command(flatten)]
        view: ViewArgs,
    },
    /// Any export of a view of a hierarchy document.
    Export {
        hierarchy: PathBuf,
        #[arg(long)]
        format: String,
        #[command(flatten)]
        view: ViewArgs,
        /// Attribute to color by.
        #[arg(long)]
        stat: Option<String>,
        #[arg(long, default_value = "p")]
        mode: String,
        #[arg(long)]
        category: Option<String>,
    },
    /// Synthetic graphs.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Persist sessions here and reload them on start.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutFormat {
    ViewJson,
    Svg,
}

/// Moves applied to the initial view before output, in this order.
#[derive(Debug, Args)]
struct ViewArgs {
    /// Apply this many recorded merges.
    #[arg(long, default_value_t = 0)]
    coarsen_steps: usize,
    /// Refine these clusters (repeatable).
    #[arg(long = "refine")]
    refine: Vec<usize>,
}

#[derive(Debug, Subcommand)]
enum GenKind {
    /// Two triangles joined by one edge.
    Barbell,
    /// Cliques joined in a ring by single edges.
    Ring {
        #[arg(long, default_value_t = 4)]
        cliques: usize,
        #[arg(long, default_value_t = 5)]
        size: usize,
    },
    /// Blocks with dense insides and sparse links between them.
    Planted {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        /// Also write a `block` attribute table here.
        #[arg(long)]
        attributes_out: Option<PathBuf>,
    },
    /// Groups of blocks: three edge probabilities (block, group, across).
    Hierarchical {
        #[arg(long)]
        groups: usize,
        #[arg(long)]
        blocks: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, value_delimiter = ',', num_args = 3, required = true)]
        p: Vec<f64>,
    },
    /// Erdős–Rényi G(n, p).
    Er {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },
    /// Configuration-model sample with the degrees of an existing graph.
    Config {
        #[arg(long)]
        from: PathBuf,
    },
}

/// Error carrying its exit code; printed as one line.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<clustervis_core::Error> for Failure {
    fn from(e: clustervis_core::Error) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("clustervis: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let settings = Settings::resolve(&cli.global)?;
    if let Some(jobs) = settings.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    let params = settings.params;
    let out = cli.global.out.as_deref();

    match cli.command {
        Command::Cluster { edges } => {
            let prepared = pipeline::prepare(&read(&edges)?, None, &params)?;
            echo_config("cluster", &params);
            let p = greedy_maximize(&prepared.graph, &params.hierarchy_config().maximizer)?;
            emit(out, &write_partition_tsv(&prepared.graph, &p))?;
            eprintln!("Q={:.6} clusters={}", p.modularity(), p.cluster_count());
            Ok(0)
        }
        Command::Significance { edges } => {
            let prepared = pipeline::prepare(&read(&edges)?, None, &params)?;
            echo_config("significance", &params);
            let cfg = params.hierarchy_config();
            let g = &prepared.graph;
            let best = greedy_maximize(g, &cfg.maximizer)?;
            let null = null_distribution(g, cfg.trials, &cfg.maximizer, derive_seed(cfg.seed, 0))?;
            emit(out, &null.to_text())?;
            let q = best.modularity();
            let significant = best.cluster_count() >= 2 && null.is_significant(q, cfg.alpha);
            eprintln!(
                "Q={q:.6} threshold={:.6} p-value={:.6} significant={significant}",
                null.threshold,
                null.p_value(q)
            );
            Ok(if significant { 0 } else { EXIT_NO_STRUCTURE })
        }
        Command::Hierarchy { edges, attributes } => {
            let attrs = attributes.as_deref().map(read).transpose()?;
            let prepared = pipeline::prepare(&read(&edges)?, attrs.as_deref(), &params)?;
            echo_config("hierarchy", &params);
            for w in &prepared.warnings {
                eprintln!("clustervis: warning: {w}");
            }
            let (explorer, summary) = pipeline::run(prepared, &params)?;
            let doc = HierarchyDocument::new(explorer.graph, explorer.tree);
            emit(out, &doc.to_json())?;
            eprintln!(
                "nodes={} edges={} clusters={} Q={:.6} threshold={:.6} p-value={:.6}{}",
                summary.nodes,
                summary.edges,
                summary.clusters,
                summary.q,
                summary.threshold,
                summary.p_value,
                if summary.no_structure { " no-structure" } else { "" }
            );
            Ok(if summary.no_structure { EXIT_NO_STRUCTURE } else { 0 })
        }
        Command::Layout {
            hierarchy,
            view,
            format,
        } => {
            let mut ex = open_view(&hierarchy, None, &view, &settings)?;
            let format = match format {
                LayoutFormat::ViewJson => ExportFormat::ViewJson,
                LayoutFormat::Svg => ExportFormat::Svg,
            };
            emit(out, &ex.export(format, None)?)?;
            Ok(0)
        }
        Command::Stats {
            hierarchy,
            attribute,
            attributes,
            view,
        } => {
            let mut ex = open_view(&hierarchy, attributes.as_deref(), &view, &settings)?;
            emit(out, &ex.stats(&attribute)?.to_tsv())?;
            Ok(0)
        }
        Command::Export {
            hierarchy,
            format,
            view,
            stat,
            mode,
            category,
        } => {
            let format: ExportFormat = format.parse()?;
            let stat = match stat {
                Some(attribute) => Some(StatRequest {
                    attribute,
                    mode: mode.parse::<StatMode>()?,
                    category,
                }),
                None => None,
            };
            let mut ex = open_view(&hierarchy, None, &view, &settings)?;
            emit(out, &ex.export(format, stat.as_ref())?)?;
            Ok(0)
        }
        Command::Gen { kind } => {
            echo_config("gen", &params);
            emit(out, &write_edge_list(&generate(kind, params.seed)?))?;
            Ok(0)
        }
        Command::Serve { addr, data_dir } => {
            let state = match data_dir {
                Some(dir) => clustervis_service::AppState::with_data_dir(dir)
                    .map_err(|e| invalid(e.to_string()))?,
                None => clustervis_service::AppState::in_memory(),
            };
            eprintln!("clustervis: serving /v1 on http://{addr}");
            let runtime = tokio::runtime::Runtime::new().map_err(|e| invalid(e.to_string()))?;
            runtime
                .block_on(clustervis_service::serve(addr, state))
                .map_err(|e| Failure {
                    code: 1,
                    message: e.to_string(),
                })?;
            Ok(0)
        }
    }
}

fn echo_config(command: &str, params: &PipelineParams) {
    eprintln!("# effective-config: command={command} {}", params.effective_config_line());
}

/// Loads a hierarchy document and replays the requested moves. The layout
/// seed comes from `--seed` if given, else from the seed the hierarchy was
/// built with.
fn open_view(
    path: &Path,
    attributes: Option<&Path>,
    view: &ViewArgs,
    settings: &Settings,
) -> CliResult<Explorer> {
    let doc = HierarchyDocument::from_json(&read(path)?)?;
    let params = PipelineParams {
        seed: settings.seed.unwrap_or(doc.tree.config.seed),
        ..settings.params
    };
    echo_config("view", &params);
    let mut graph: Graph = doc.graph;
    if let Some(p) = attributes {
        let loaded = load_attributes(&read(p)?, &graph)?;
        for w in &loaded.warnings {
            eprintln!("clustervis: warning: {w}");
        }
        graph = loaded.graph;
    }
    let mut ex = Explorer::new(graph, doc.tree, params.layout_config())?;
    for _ in 0..view.coarsen_steps {
        ex.coarsen_step()?;
    }
    for &id in &view.refine {
        ex.refine(id)?;
    }
    Ok(ex)
}

fn generate(kind: GenKind, seed: u64) -> CliResult<Graph> {
    let prob = |p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(p)
        } else {
            Err(invalid(format!("probability {p} outside [0, 1]")))
        }
    };
    Ok(match kind {
        GenKind::Barbell => fixtures::barbell(),
        GenKind::Ring { cliques, size } => {
            if size < 2 {
                return Err(invalid("cliques need at least two nodes"));
            }
            fixtures::ring_of_cliques(cliques, size)
        }
        GenKind::Planted {
            sizes,
            p_in,
            p_out,
            attributes_out,
        } => {
            let g = fixtures::planted_partition(&sizes, prob(p_in)?, prob(p_out)?, seed);
            if let Some(path) = attributes_out {
                let mut table = String::from("node\tblock\n");
                let blocks = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s));
                for (v, b) in blocks.enumerate() {
                    table.push_str(&format!("{}\tB{b}\n", g.token(v)));
                }
                emit(Some(&path), &table)?;
            }
            g
        }
        GenKind::Hierarchical {
            groups,
            blocks,
            size,
            p,
        } => fixtures::hierarchical_planted(
            groups,
            blocks,
            size,
            (prob(p[0])?, prob(p[1])?, prob(p[2])?),
            seed,
        ),
        GenKind::Er { n, p } => fixtures::erdos_renyi(n, prob(p)?, seed),
        GenKind::Config { from } => {
            let g = clustervis_core::graph::load_edge_list(&read(&from)?)?.graph;
            sample_configuration_graph(&g.degree_sequence(), seed, &g)?
        }
    })
}
