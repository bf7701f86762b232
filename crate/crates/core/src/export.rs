//! JSON and Graphviz DOT serialization of assemblies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{Assembly, AssemblyError, Binding, Component, PortRef, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Dot,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("malformed assembly json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid assembly: {0}")]
    Invalid(#[from] AssemblyError),
}

#[derive(Serialize, Deserialize)]
struct EndpointDoc {
    component: String,
    port: String,
}

#[derive(Serialize, Deserialize)]
struct BindingDoc {
    source: EndpointDoc,
    target: EndpointDoc,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct AssemblyDoc {
    #[serde(default)]
    components: Vec<Component>,
    #[serde(default)]
    bindings: Vec<BindingDoc>,
}

impl AssemblyDoc {
    fn from_assembly(asm: &Assembly) -> Self {
        AssemblyDoc {
            components: asm.components().cloned().collect(),
            bindings: asm
                .bindings()
                .map(|b| BindingDoc {
                    source: EndpointDoc {
                        component: b.source.component.clone(),
                        port: b.source.port.clone(),
                    },
                    target: EndpointDoc {
                        component: b.target.component.clone(),
                        port: b.target.port.clone(),
                    },
                    provenance: b.provenance.clone(),
                })
                .collect(),
        }
    }

    fn into_assembly(self) -> Result<Assembly, AssemblyError> {
        let bindings = self.bindings.into_iter().map(|b| {
            Binding::between(
                PortRef::required(b.source.component, b.source.port),
                PortRef::provided(b.target.component, b.target.port),
                b.provenance,
            )
        });
        Assembly::from_parts(self.components, bindings)
    }
}

pub fn export(asm: &Assembly, format: Format) -> String {
    match format {
        Format::Json => to_json(asm),
        Format::Dot => to_dot(asm),
    }
}

pub fn to_json(asm: &Assembly) -> String {
    serde_json::to_string_pretty(&AssemblyDoc::from_assembly(asm)).expect("assembly serializes")
}

pub fn to_json_value(asm: &Assembly) -> serde_json::Value {
    serde_json::to_value(AssemblyDoc::from_assembly(asm)).expect("assembly serializes")
}

pub fn from_json(text: &str) -> Result<Assembly, ImportError> {
    let doc: AssemblyDoc = serde_json::from_str(text)?;
    Ok(doc.into_assembly()?)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One node per component labelled `id : type`, one edge per binding
/// labelled with its port names.
pub fn to_dot(asm: &Assembly) -> String {
    let mut out = String::from("digraph assembly {\n    rankdir=LR;\n    node [shape=box];\n");
    for c in asm.components() {
        let style = if c.type_name.starts_with("op.") {
            ", style=rounded"
        } else if !c.provenance.is_base() {
            ", style=dashed"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "    {} [label={}{}];",
            quote(&c.id),
            quote(&format!("{}\\n{}", c.id, c.type_name)),
            style
        );
    }
    for b in asm.bindings() {
        let _ = writeln!(
            out,
            "    {} -> {} [label={}];",
            quote(&b.source.component),
            quote(&b.target.component),
            quote(&format!("{} -> {}", b.source.port, b.target.port))
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::PortSpec;

    #[test]
    fn empty_assembly_json_has_empty_collections() {
        let v = to_json_value(&Assembly::new());
        assert_eq!(v["components"], serde_json::json!([]));
        assert_eq!(v["bindings"], serde_json::json!([]));
    }

    #[test]
    fn dot_has_one_node_per_component_and_one_edge_per_binding() {
        let asm = Assembly::from_parts(
            [
                Component::new("switch", "Switch").with_port(PortSpec::required("value")),
                Component::new("light", "Light").with_port(PortSpec::provided("SetState")),
            ],
            [Binding::new(("switch", "value"), ("light", "SetState"))],
        )
        .unwrap();
        let dot = to_dot(&asm);
        assert_eq!(dot.matches("[label=").count(), 3);
        assert_eq!(dot.matches(" -> \"").count(), 1);
        assert!(dot.contains("\"switch\" -> \"light\""));
    }

    #[test]
    fn rejects_binding_to_missing_port() {
        let text = r#"{"components":[{"id":"a","type":"T"}],
            "bindings":[{"source":{"component":"a","port":"x"},"target":{"component":"a","port":"y"}}]}"#;
        assert!(matches!(
            from_json(text),
            Err(ImportError::Invalid(AssemblyError::DanglingBinding(_)))
        ));
    }
}
