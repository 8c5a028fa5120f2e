use std::fmt::Write as _;

use viscot_core::{NodeId, NodeState, NodeType, ReasoningGraph};

fn type_tag(t: NodeType) -> &'static str {
    match t {
        NodeType::Premise => "[P]",
        NodeType::Inference => "[I]",
        NodeType::Conclusion => "[C]",
    }
}

/// Indented tree, one node per line:
/// `v8 [I]! 0.31 There are also 2 legs for the farmer.`
/// `!` marks flagged steps, `*` user-provided ones, and `<` the frontier.
pub fn tree(graph: &ReasoningGraph) -> String {
    let mut out = String::new();
    let Some(root) = graph.root() else {
        out.push_str("(empty graph)\n");
        return out;
    };
    let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
    while let Some((id, depth)) = stack.pop() {
        let node = graph.node(id).expect("reachable node exists");
        let mark = match node.state {
            NodeState::Flagged => "!",
            NodeState::UserProvided => "*",
            NodeState::Valid => " ",
        };
        let conf = node.confidence.map_or_else(|| format!("{:>5}", "n/a"), |c| format!("{c:>5.2}"));
        let frontier = if graph.frontier() == Some(id) { "  <" } else { "" };
        let _ = writeln!(
            out,
            "{:indent$}{id} {}{mark} {conf} {}{frontier}",
            "",
            type_tag(node.node_type),
            node.text,
            indent = depth * 2
        );
        let mut kids: Vec<NodeId> = graph.children(id).collect();
        kids.sort_unstable_by(|a, b| b.cmp(a));
        stack.extend(kids.into_iter().map(|k| (k, depth + 1)));
    }
    out
}
