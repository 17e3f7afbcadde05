use alloc::string::String;
use alloc::vec::Vec;

use crate::detect::TextInstance;

/// Joins recognized texts in reading order: top to bottom, then left to
/// right. Empty and missing texts are skipped.
pub fn assemble_premise(instances: &[TextInstance]) -> String {
    let mut ordered: Vec<(&TextInstance, &str)> = instances
        .iter()
        .filter_map(|i| {
            let t = i.text.as_deref()?.trim();
            (!t.is_empty()).then_some((i, t))
        })
        .collect();
    ordered.sort_by(|(a, ta), (b, tb)| {
        a.bbox
            .y
            .total_cmp(&b.bbox.y)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then_with(|| ta.cmp(tb))
    });
    let mut out = String::new();
    for (_, t) in ordered {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
