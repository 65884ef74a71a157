//! File formats: CSV input, JSON reports, SVG plots.

pub mod csv;
pub mod report;
pub mod svg;

pub use self::csv::{parse_counts_csv, parse_studies_csv, CountsRow};
pub use report::{read_report_json, write_json, write_report_json, AuditReport, SimulationReport};
pub use svg::{render_pvalue_plot_svg, render_pvalue_plot_svg_string};
