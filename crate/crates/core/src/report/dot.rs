use crate::graph::{edge_id, EdgeDesc, GraphDesc, OpChoice};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn op_text(e: &EdgeDesc) -> String {
    match e.op.as_str() {
        "conv2d" => {
            let k = e.kernel.unwrap_or(1);
            format!("conv{k}x{k} s{}", e.stride.unwrap_or(1))
        }
        "linear" => format!("linear {}", e.out_features.map_or("?".into(), |n| n.to_string())),
        "noise" => format!("noise {}", e.sigma.unwrap_or(0.0)),
        other => other.to_string(),
    }
}

/// Graphviz text for a graph description. Nodes and edges appear in
/// declaration order. Edges decided to something other than `same` are red
/// and labeled with the decision; removed edges are also dashed.
pub fn export_dot(desc: &GraphDesc) -> String {
    let mut out = format!("digraph {} {{\n  rankdir=TB;\n  node [shape=box];\n", quote(&desc.name));
    for n in &desc.nodes {
        out.push_str(&format!("  {};\n", quote(n)));
    }
    for (i, e) in desc.edges.iter().enumerate() {
        let (from, to) = (quote(&e.from), quote(&e.to));
        let attrs = match e.choice {
            Some(OpChoice::None) => "label=\"none\", color=red, style=dashed".to_string(),
            Some(OpChoice::Identity) => "label=\"identity\", color=red".to_string(),
            _ => format!("label={}", quote(&format!("{}: {}", edge_id(e, i), op_text(e)))),
        };
        out.push_str(&format!("  {from} -> {to} [{attrs}];\n"));
    }
    out.push_str("}\n");
    out
}
