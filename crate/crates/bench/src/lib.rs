//! Shared fixtures for the criterion benchmarks in `benches/`.

use neyman_scott::{generate_panel, make_spec, MeanScheme, ModelSpec, PanelData};

pub fn fixture_spec(m: usize, n: usize) -> ModelSpec {
    make_spec(m, n, 1.0, &MeanScheme::default()).expect("valid fixture spec")
}

pub fn fixture_panel(m: usize, n: usize) -> PanelData {
    generate_panel(&fixture_spec(m, n), 0xBE7C).expect("valid fixture panel")
}
