//! Plain-text run report.
//!
//! Sections are `[name]` headers followed by `key = value` lines; the final
//! `[summary]` block uses bare `key=value` so it can be grepped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use symabs::kfn::ClassKFn;

/// Shortest round-trip form; scientific outside `[1e-4, 1e9)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Values that can appear on the right of a report line.
pub trait Value {
    fn render(&self) -> String;
}

impl Value for f64 {
    fn render(&self) -> String {
        fmt_f64(*self)
    }
}

impl Value for [f64] {
    fn render(&self) -> String {
        let parts: Vec<String> = self.iter().map(|x| fmt_f64(*x)).collect();
        format!("[{}]", parts.join(", "))
    }
}

impl Value for Vec<f64> {
    fn render(&self) -> String {
        self.as_slice().render()
    }
}

macro_rules! display_value {
    ($($t:ty),*) => {
        $(impl Value for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_value!(usize, u64, bool, str, String, ClassKFn);

impl<T: Value + ?Sized> Value for &T {
    fn render(&self) -> String {
        (**self).render()
    }
}

#[derive(Debug, Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn section(&mut self, name: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "[{name}]");
    }

    pub fn kv(&mut self, key: &str, value: impl Value) {
        let _ = writeln!(self.text, "{key} = {}", value.render());
    }

    pub fn summary(&mut self, entries: &BTreeMap<String, String>) {
        self.section("summary");
        for (k, v) in entries {
            let _ = writeln!(self.text, "{k}={v}");
        }
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Reads the `[summary]` block back into a map.
pub fn parse_summary(report: &str) -> BTreeMap<String, String> {
    report
        .lines()
        .skip_while(|l| *l != "[summary]")
        .skip(1)
        .take_while(|l| !l.starts_with('['))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
