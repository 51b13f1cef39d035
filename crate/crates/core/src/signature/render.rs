use super::{NodeKind, SignatureNode};

/// Canonical text: every node written as `(body,scope)`, products joined by
/// `x`, weights in minimal decimal form with at most 12 significant digits.
pub fn render_signature(node: &SignatureNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

fn write_node(node: &SignatureNode, out: &mut String) {
    out.push('(');
    match node.kind() {
        NodeKind::Leaf { symbol } => out.push_str(symbol),
        NodeKind::Product { children } => {
            out.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push('x');
                }
                write_node(c, out);
            }
            out.push(')');
        }
        NodeKind::Sum { children } => {
            out.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push('+');
                }
                out.push_str(&render_weight(c.weight));
                write_node(&c.node, out);
            }
            out.push(')');
        }
    }
    out.push(',');
    out.push_str(&node.scope().to_string());
    out.push(')');
}

/// Shortest decimal for `w` after rounding to 12 significant digits.
pub fn render_weight(w: f64) -> String {
    if w == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{w:.11e}").parse().unwrap_or(w);
    let s = format!("{rounded}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
