#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choiceeval/core.hpp"
#include "choiceeval/metrics.hpp"

namespace choiceeval {

// ---------------------------------------------------------------------------
// Number formatting (locale-independent)
// ---------------------------------------------------------------------------

// Three significant figures in fixed notation: 4.96, -1.00, 0.690, 0.0848.
// Zero renders "0.00". Throws DomainError on non-finite input.
std::string format_sig3(double x);

// p-value display: exactly zero renders "0.00", values below 1e-3 switch to
// scientific notation ("1.00e-12", "9.31e-8"), everything else keeps three
// significant figures ("0.133", "0.0223").
std::string format_p(double p);

// ---------------------------------------------------------------------------
// Table rendering
// ---------------------------------------------------------------------------

// Row/column order for the grid tables. Empty vectors fall back to the
// lexicographic order of whatever the data mentions.
struct ReportLayout {
    std::vector<std::string> topics;
    std::vector<std::string> models;
};

// One row per topic, two columns per model (preferred entity, PEIR as a
// percentage to one decimal). Rates at or above 60% carry a strong-emphasis
// marker; absent cells and empty preferred entities render as an em-dash.
std::string render_preference_table(const std::vector<PreferenceSummary>& summaries,
                                    const ReportLayout& layout);

// One row per topic, two columns per model (mean log odds ratio to three
// significant figures, p-value). Positive means carry strong emphasis,
// negative means light emphasis, zero none. Only results matching the given
// region pair are considered; others are ignored.
std::string render_lor_table(const std::vector<LorResult>& results, Region region_a,
                             Region region_b, const ReportLayout& layout);

// Lower-triangular repetition-agreement matrix, cells "rho (p)", rows and
// columns labelled Rep1..RepN. Degenerate cells render as an em-dash. The
// matrix must be square, symmetric (within 1e-12) and carry a unit diagonal;
// anything else raises DomainError.
std::string render_stability_matrix(const StabilityResult& result);

// ---------------------------------------------------------------------------
// Assembled documents
// ---------------------------------------------------------------------------

// Everything one audit run produced, plus the provenance needed to interpret
// it. Vectors may arrive in any order; rendering and export impose their own.
struct ResultsBundle {
    std::string created_at;    // analysis timestamp, ISO-8601 UTC
    std::string dataset_hash;  // question-store content hash
    uint64_t seed = 0;
    nlohmann::json config;     // full configuration echo
    std::vector<ModelId> models;      // column order for tables
    std::vector<std::string> topics;  // row order for tables

    std::vector<PreferenceSummary> preference;
    std::vector<LorResult> lor;
    std::vector<StabilityResult> stability;
    std::vector<CountryPresence> country;
};

// Machine-readable export: alphabetically-keyed document with a manifest
// section; arrays are sorted internally so identical inputs serialize to
// identical bytes. Non-finite statistics become nulls (the degenerate flags
// travel separately).
nlohmann::json export_results(const ResultsBundle& bundle);

// export_results serialized with two-space indentation and a trailing newline.
std::string export_results_text(const ResultsBundle& bundle);

// Full human-readable report: run header, preference table, one regional
// table per region pair present, stability matrices, country presence.
std::string render_markdown_report(const ResultsBundle& bundle);

// The same report as a self-contained HTML document (inline styles; emphasis
// becomes CSS classes).
std::string render_html_report(const ResultsBundle& bundle);

// Spreadsheet-friendly flat files keyed by filename: preference.csv, lor.csv,
// stability.csv, country.csv.
std::map<std::string, std::string> render_flat_files(const ResultsBundle& bundle);

}  // namespace choiceeval
