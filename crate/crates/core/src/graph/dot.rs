use std::fmt::Write;

use super::{NodeState, ReasoningGraph};

const LABEL_CHARS: usize = 40;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

pub(super) fn render(graph: &ReasoningGraph) -> String {
    let mut out = String::from("digraph reasoning {\n    node [shape=box];\n");
    for node in graph.nodes() {
        let label: String = node.text.chars().take(LABEL_CHARS).collect();
        let mut attrs = format!("label=\"{}\"", escape(&label));
        match node.state {
            NodeState::Flagged => attrs.push_str(", color=red"),
            NodeState::UserProvided => attrs.push_str(", style=dashed"),
            NodeState::Valid => {}
        }
        if graph.frontier() == Some(node.id) {
            attrs.push_str(", penwidth=2");
        }
        let _ = writeln!(out, "    {} [{}];", node.id, attrs);
    }
    for (p, c) in graph.edges() {
        let _ = writeln!(out, "    {p} -> {c};");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use crate::graph::{NodeId, ReasoningGraph};
    use crate::parser::StepSeed;

    #[test]
    fn flagged_nodes_are_red_and_labels_truncated() {
        let long = "x".repeat(60);
        let mut g = ReasoningGraph::build_linear(&[
            StepSeed::new("He said \"hi\""),
            StepSeed::new(long.as_str()),
        ])
        .unwrap();
        g.flag(NodeId::new(2)).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains(&format!("v2 [label=\"{}\", color=red];", "x".repeat(40))));
        assert!(dot.contains(r#"v1 [label="He said \"hi\"", penwidth=2];"#));
        assert!(dot.contains("v1 -> v2;"));
    }
}
