//! DOT export: instances render with contracted material dashed; a
//! certificate renders as two clusters (extended domain and extended target)
//! with added material in color and edges labeled by their lift slopes.

use std::fmt::Write;

use crate::balanced::BalancedFn;
use crate::graph::{Flag, TropicalCurve};
use crate::harmonic::FlagImage;
use crate::modify::HModCertificate;
use crate::rat::rat_to_string;

fn curve_nodes(out: &mut String, c: &TropicalCurve, prefix: &str, highlight_added: Option<&HModCertificate>) {
    for v in &c.vertices {
        let added = match highlight_added {
            Some(cert) if std::ptr::eq(c, &cert.domain_mod.extended) => {
                !cert.domain_mod.is_anchored_vertex(*v)
            }
            Some(cert) if std::ptr::eq(c, &cert.target_mod.extended) => {
                !cert.target_mod.is_anchored_vertex(*v)
            }
            _ => false,
        };
        let color = if added { ", color=\"red\"" } else { "" };
        let _ = writeln!(out, "    {prefix}v{} [label=\"{}\"{}];", v.0, v.0, color);
    }
}

/// Renders an instance: rays appear as arrow stubs, contracted edges dashed,
/// slopes as labels.
pub fn instance_dot(f: &BalancedFn) -> String {
    let mut out = String::from("graph instance {\n  node [shape=circle, fontsize=10];\n");
    curve_nodes(&mut out, &f.curve, "", None);
    for (id, e) in &f.curve.edges {
        let s = f.slopes[&Flag::Edge(*id, 0)];
        let style = if s == 0 { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "    v{} -- v{} [label=\"{} ({})\"{}];",
            e.ends[0].0,
            e.ends[1].0,
            id,
            rat_to_string(&e.length),
            style
        );
    }
    for (id, r) in &f.curve.rays {
        let s = f.slopes[&Flag::Ray(*id)];
        let style = if s == 0 { ", style=dashed" } else { "" };
        let _ = writeln!(out, "    {}_end [shape=none, label=\"\"];", id);
        let _ = writeln!(
            out,
            "    v{} -- {}_end [label=\"{} s={}\"{}];",
            r.base.0, id, id, s, style
        );
    }
    out.push_str("}\n");
    out
}

/// Renders a certificate: domain and target extended curves side by side,
/// added material in red, lift slopes on the domain edges.
pub fn certificate_dot(cert: &HModCertificate) -> String {
    let mut out = String::from("graph certificate {\n  node [shape=circle, fontsize=10];\n");
    out.push_str("  subgraph cluster_domain {\n    label=\"extended domain\";\n");
    curve_nodes(&mut out, &cert.domain_mod.extended, "d", Some(cert));
    for (id, e) in &cert.domain_mod.extended.edges {
        let label = match cert.lift.flag_image(Flag::Edge(*id, 0)) {
            FlagImage::To(g, s) => format!("{} ~{}x{}", id, g.key(), s),
            FlagImage::Contracted => format!("{id} contracted"),
        };
        let added = !cert.domain_mod.is_anchored_edge(*id);
        let color = if added { ", color=\"red\"" } else { "" };
        let _ = writeln!(
            out,
            "    dv{} -- dv{} [label=\"{}\"{}];",
            e.ends[0].0, e.ends[1].0, label, color
        );
    }
    for (id, r) in &cert.domain_mod.extended.rays {
        let added = !cert.domain_mod.is_anchored_ray(*id);
        let color = if added { ", color=\"red\"" } else { "" };
        let _ = writeln!(out, "    d{}_end [shape=none, label=\"\"];", id);
        let _ = writeln!(out, "    dv{} -- d{}_end [label=\"{}\"{}];", r.base.0, id, id, color);
    }
    out.push_str("  }\n  subgraph cluster_target {\n    label=\"extended target\";\n");
    curve_nodes(&mut out, &cert.target_mod.extended, "t", Some(cert));
    for (id, e) in &cert.target_mod.extended.edges {
        let added = !cert.target_mod.is_anchored_edge(*id);
        let color = if added { ", color=\"red\"" } else { "" };
        let _ = writeln!(
            out,
            "    tv{} -- tv{} [label=\"{} ({})\"{}];",
            e.ends[0].0,
            e.ends[1].0,
            id,
            rat_to_string(&e.length),
            color
        );
    }
    for (id, r) in &cert.target_mod.extended.rays {
        let added = !cert.target_mod.is_anchored_ray(*id);
        let color = if added { ", color=\"red\"" } else { "" };
        let _ = writeln!(out, "    t{}_end [shape=none, label=\"\"];", id);
        let _ = writeln!(out, "    tv{} -- t{}_end [label=\"{}\"{}];", r.base.0, id, id, color);
    }
    out.push_str("  }\n}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hurwitz::DEFAULT_DEGREE_BOUND;

    #[test]
    fn render_smoke() {
        let f = crate::realize1::tests::genus1_instance(&[(0, 2, 1), (1, 2, 1)]);
        let dot = instance_dot(&f);
        assert!(dot.contains("graph instance"));
        assert!(dot.contains("style=dashed"));
        let cert = match crate::realize1::certify_well_spaced(&f, DEFAULT_DEGREE_BOUND).unwrap() {
            crate::realize1::Genus1Certificate::Certificate(c) => c,
            _ => panic!(),
        };
        let dot = certificate_dot(&cert);
        assert!(dot.contains("cluster_domain"));
        assert!(dot.contains("cluster_target"));
        assert!(dot.contains("color=\"red\""));
    }
}
