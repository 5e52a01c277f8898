#![no_main]

use arclin::waveform::{load_csv_reader, CsvLayout};
use libfuzzer_sys::fuzz_target;

// The first byte steers the column layout, the rest is the CSV body. Any
// input must either parse into a well-formed series or fail with an error;
// panics and non-finite samples are bugs.
fuzz_target!(|data: &[u8]| {
    let Some((&mode, body)) = data.split_first() else {
        return;
    };
    let layout = match mode % 4 {
        0 => CsvLayout::default(),
        1 => CsvLayout::current_only(5e-5),
        2 => CsvLayout {
            time_column: Some(1),
            current_column: 0,
            ..CsvLayout::default()
        },
        _ => CsvLayout {
            time_column: None,
            current_column: 2,
            dt: Some(1e-3),
            t0: Some(-1.0),
        },
    };
    if let Ok(series) = load_csv_reader(body, &layout) {
        assert!(series.dt().is_finite() && series.dt() > 0.0);
        assert!(series.t0().is_finite());
        assert!(!series.is_empty());
        assert!(series.samples().iter().all(|x| x.is_finite()));
    }
});
