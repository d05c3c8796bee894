use clustervis_core::export::{ExportFormat, HierarchyDocument};
use clustervis_core::graph::{load_attributes, load_edge_list, write_edge_list};
use clustervis_core::modularity::read_partition_tsv;
use clustervis_core::pipeline::{prepare, run, PipelineParams};
use clustervis_core::significance::NullDistribution;
use clustervis_core::{fixtures, Error};

fn params(seed: u64) -> PipelineParams {
    PipelineParams {
        seed,
        trials: 30,
        ..PipelineParams::default()
    }
}

#[test]
fn edge_list_quirks_are_counted() {
    let loaded = load_edge_list("# comment\na b\nb a\nc c\nb c\n\n").unwrap();
    assert_eq!(loaded.graph.node_count(), 3);
    assert_eq!(loaded.graph.edge_count(), 2);
    assert_eq!(loaded.duplicates_dropped, 1);
    assert_eq!(loaded.self_loops_dropped, 1);
}

#[test]
fn malformed_edge_line_names_its_line() {
    match load_edge_list("a b\nlonely\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn edgeless_input_is_rejected() {
    assert!(prepare("", None, &params(0)).is_err());
}

#[test]
fn duplicate_attribute_rows_are_rejected() {
    let g = load_edge_list("a b\n").unwrap().graph;
    assert!(load_attributes("node\tkind\na\tx\na\ty\n", &g).is_err());
}

#[test]
fn same_seed_same_everything() {
    let edges = write_edge_list(&fixtures::ring_of_cliques(5, 4));
    let outputs: Vec<Vec<String>> = (0..2)
        .map(|_| {
            let (mut ex, _) = run(prepare(&edges, None, &params(3)).unwrap(), &params(3)).unwrap();
            [ExportFormat::Svg, ExportFormat::ViewJson, ExportFormat::HierarchyJson, ExportFormat::PartitionTsv]
                .into_iter()
                .map(|f| ex.export(f, None).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn hierarchy_document_round_trips() {
    let edges = write_edge_list(&fixtures::ring_of_cliques(4, 5));
    let (mut ex, summary) = run(prepare(&edges, None, &params(1)).unwrap(), &params(1)).unwrap();
    assert_eq!(summary.clusters, 4);
    let text = ex.export(ExportFormat::HierarchyJson, None).unwrap();
    let doc = HierarchyDocument::from_json(&text).unwrap();
    assert_eq!(doc.tree, ex.tree);
    assert_eq!(doc.to_json(), text);
}

#[test]
fn exported_partition_reads_back() {
    let edges = write_edge_list(&fixtures::ring_of_cliques(4, 5));
    let (mut ex, _) = run(prepare(&edges, None, &params(1)).unwrap(), &params(1)).unwrap();
    let tsv = ex.export(ExportFormat::PartitionTsv, None).unwrap();
    let p = read_partition_tsv(&tsv, &ex.graph).unwrap();
    assert_eq!(p.cluster_count(), 4);
    assert!((p.modularity() - 29.0 / 44.0).abs() < 1e-12);
}

#[test]
fn null_text_round_trips() {
    let nd = NullDistribution::from_samples(vec![0.1, 0.3, 0.2], 42);
    let back = NullDistribution::from_text(&nd.to_text()).unwrap();
    assert_eq!(back, nd);
    assert_eq!(back.p_value(0.25), 0.5);
}

#[test]
fn dense_random_graph_collapses_to_one_node() {
    let edges = write_edge_list(&fixtures::complete(10));
    let (mut ex, summary) = run(prepare(&edges, None, &params(0)).unwrap(), &params(0)).unwrap();
    assert!(summary.no_structure);
    assert_eq!(ex.view().frontier.len(), 1);
    let doc = ex.document(None).unwrap();
    assert!(doc.no_structure);
    assert_eq!(doc.nodes.len(), 1);
    assert!(!doc.nodes[0].refinable);
}
