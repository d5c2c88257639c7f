//! Kernels bundled with the crate (sources under `kernels/`).

use crate::frontend::KernelSource;

const SOURCES: [(&str, &str); 8] = [
    ("toy", include_str!("../../../kernels/toy.mlk")),
    ("scale_rows", include_str!("../../../kernels/scale_rows.mlk")),
    ("gemm", include_str!("../../../kernels/gemm.mlk")),
    ("atax", include_str!("../../../kernels/atax.mlk")),
    ("stencil", include_str!("../../../kernels/stencil.mlk")),
    ("bicg", include_str!("../../../kernels/bicg.mlk")),
    ("gesummv", include_str!("../../../kernels/gesummv.mlk")),
    ("mvt", include_str!("../../../kernels/mvt.mlk")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<KernelSource> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(n, text)| KernelSource {
        name: n.to_string(),
        text: text.to_string(),
        path: format!("kernels/{n}.mlk"),
    })
}

pub fn all() -> Vec<KernelSource> {
    names().filter_map(source).collect()
}
