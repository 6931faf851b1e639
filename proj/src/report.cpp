#include "choiceeval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "choiceeval/errors.hpp"

namespace choiceeval {

namespace {

constexpr const char* kEmDash = "—";

// snprintf honors LC_NUMERIC; force the decimal point so reports do not
// depend on the host locale.
std::string de_locale(std::string s) {
    for (char& c : s)
        if (c == ',') c = '.';
    return s;
}

std::string printf_double(const char* fmt, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, x);
    return de_locale(buf);
}

// "9.31e-08" -> "9.31e-8"; exponents never need their padding zero here.
std::string strip_exponent_padding(std::string s) {
    auto e = s.find('e');
    if (e == std::string::npos) return s;
    std::size_t d = e + 1;
    if (d < s.size() && (s[d] == '-' || s[d] == '+')) ++d;
    std::size_t z = d;
    while (z + 1 < s.size() && s[z] == '0') ++z;
    return s.substr(0, d) + s.substr(z);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::string csv_double(double x) { return printf_double("%.12g", x); }

std::string md_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const auto& c : cells) {
        out += ' ';
        out += c;
        out += " |";
    }
    out += '\n';
    return out;
}

std::string md_separator(std::size_t columns) {
    std::string out = "|";
    for (std::size_t i = 0; i < columns; ++i) out += " --- |";
    out += '\n';
    return out;
}

// Layout fallback: configured order when given, else lexicographic over the
// values the data actually mentions.
std::vector<std::string> ordered_or(const std::vector<std::string>& configured,
                                    const std::set<std::string>& seen) {
    if (!configured.empty()) return configured;
    return {seen.begin(), seen.end()};
}

std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct HtmlCell {
    std::string text;
    std::string cls;  // CSS class, empty for plain cells
    bool header = false;
};

std::string html_table(const std::string& caption, const std::vector<std::string>& headers,
                       const std::vector<std::vector<HtmlCell>>& rows) {
    std::string out = "<table>\n";
    if (!caption.empty()) out += "<caption>" + html_escape(caption) + "</caption>\n";
    out += "<tr>";
    for (const auto& h : headers) out += "<th>" + html_escape(h) + "</th>";
    out += "</tr>\n";
    for (const auto& row : rows) {
        out += "<tr>";
        for (const auto& cell : row) {
            const char* tag = cell.header ? "th" : "td";
            out += '<';
            out += tag;
            if (!cell.cls.empty()) out += " class=\"" + cell.cls + "\"";
            out += '>';
            out += html_escape(cell.text);
            out += "</";
            out += tag;
            out += '>';
        }
        out += "</tr>\n";
    }
    out += "</table>\n";
    return out;
}

bool peir_emphasized(double peir) { return peir >= 0.6; }

std::string peir_percent(double peir) { return printf_double("%.1f", peir * 100.0); }

// Region pairs present in a result list, in enum order.
std::vector<std::pair<Region, Region>> region_pairs_of(const std::vector<LorResult>& results) {
    std::set<std::pair<Region, Region>> pairs;
    for (const auto& r : results) pairs.insert({r.region_a, r.region_b});
    return {pairs.begin(), pairs.end()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

std::string format_sig3(double x) {
    if (!std::isfinite(x)) throw DomainError("format_sig3: non-finite value");
    if (x == 0.0) return "0.00";
    int decimals = 2 - static_cast<int>(std::floor(std::log10(std::fabs(x))));
    if (decimals < 0) decimals = 0;
    char fmt[16];
    std::snprintf(fmt, sizeof fmt, "%%.%df", decimals);
    return printf_double(fmt, x);
}

std::string format_p(double p) {
    if (!std::isfinite(p)) throw DomainError("format_p: non-finite value");
    if (p == 0.0) return "0.00";
    if (p < 1e-3) return strip_exponent_padding(printf_double("%.2e", p));
    return format_sig3(p);
}

// ---------------------------------------------------------------------------
// Preference table
// ---------------------------------------------------------------------------

std::string render_preference_table(const std::vector<PreferenceSummary>& summaries,
                                    const ReportLayout& layout) {
    std::map<std::pair<std::string, std::string>, const PreferenceSummary*> grid;
    std::set<std::string> topics_seen, models_seen;
    for (const auto& s : summaries) {
        grid[{s.topic, s.model_label}] = &s;
        topics_seen.insert(s.topic);
        models_seen.insert(s.model_label);
    }
    const auto topics = ordered_or(layout.topics, topics_seen);
    const auto models = ordered_or(layout.models, models_seen);

    std::vector<std::string> header{"Topic"};
    for (const auto& m : models) {
        header.push_back(m + ": entity");
        header.push_back(m + ": PEIR %");
    }
    std::string out = md_row(header) + md_separator(header.size());

    for (const auto& topic : topics) {
        std::vector<std::string> cells{topic};
        for (const auto& m : models) {
            auto it = grid.find({topic, m});
            if (it == grid.end() || it->second->preferred_entity.empty()) {
                cells.push_back(kEmDash);
                cells.push_back(kEmDash);
                continue;
            }
            const auto& s = *it->second;
            cells.push_back(s.preferred_entity);
            std::string pct = peir_percent(s.peir);
            cells.push_back(peir_emphasized(s.peir) ? "**" + pct + "**" : pct);
        }
        out += md_row(cells);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Log-odds-ratio table
// ---------------------------------------------------------------------------

std::string render_lor_table(const std::vector<LorResult>& results, Region region_a,
                             Region region_b, const ReportLayout& layout) {
    std::map<std::pair<std::string, std::string>, const LorResult*> grid;
    std::set<std::string> topics_seen, models_seen;
    for (const auto& r : results) {
        if (r.region_a != region_a || r.region_b != region_b) continue;
        grid[{r.topic, r.model_label}] = &r;
        topics_seen.insert(r.topic);
        models_seen.insert(r.model_label);
    }
    const auto topics = ordered_or(layout.topics, topics_seen);
    const auto models = ordered_or(layout.models, models_seen);

    std::vector<std::string> header{"Topic"};
    for (const auto& m : models) {
        header.push_back(m + ": mean LOR");
        header.push_back(m + ": p");
    }
    std::string out = md_row(header) + md_separator(header.size());

    for (const auto& topic : topics) {
        std::vector<std::string> cells{topic};
        for (const auto& m : models) {
            auto it = grid.find({topic, m});
            if (it == grid.end()) {
                cells.push_back(kEmDash);
                cells.push_back(kEmDash);
                continue;
            }
            const auto& r = *it->second;
            std::string mean = format_sig3(r.mean);
            if (r.mean > 0.0) mean = "**" + mean + "**";
            else if (r.mean < 0.0) mean = "*" + mean + "*";
            cells.push_back(mean);
            cells.push_back(format_p(r.p_value));
        }
        out += md_row(cells);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stability matrix
// ---------------------------------------------------------------------------

namespace {

void check_stability_matrix(const StabilityResult& result) {
    const std::size_t n = result.matrix.size();
    if (n < 2) throw DomainError("stability matrix: need at least two repetitions");
    for (const auto& row : result.matrix)
        if (row.size() != n) throw DomainError("stability matrix: not square");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = result.matrix[i][i];
        if (d.degenerate || std::fabs(d.rho - 1.0) > 1e-12 || std::fabs(d.p) > 1e-12)
            throw DomainError("stability matrix: diagonal must be (1, 0)");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = result.matrix[i][j];
            const auto& b = result.matrix[j][i];
            if (a.degenerate != b.degenerate)
                throw DomainError("stability matrix: asymmetric");
            if (!a.degenerate &&
                (std::fabs(a.rho - b.rho) > 1e-12 || std::fabs(a.p - b.p) > 1e-12))
                throw DomainError("stability matrix: asymmetric");
        }
    }
}

std::string stability_cell(const StabilityCell& cell) {
    if (cell.degenerate) return kEmDash;
    return format_sig3(cell.rho) + " (" + format_p(cell.p) + ")";
}

}  // namespace

std::string render_stability_matrix(const StabilityResult& result) {
    check_stability_matrix(result);
    const std::size_t n = result.matrix.size();

    std::vector<std::string> header{""};
    for (std::size_t j = 0; j < n; ++j) header.push_back("Rep" + std::to_string(j + 1));
    std::string out = md_row(header) + md_separator(header.size());

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> cells{"Rep" + std::to_string(i + 1)};
        for (std::size_t j = 0; j < n; ++j)
            cells.push_back(j <= i ? stability_cell(result.matrix[i][j]) : "");
        out += md_row(cells);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Machine-readable export
// ---------------------------------------------------------------------------

namespace {

nlohmann::json presence_json(const PresenceStats& s) {
    return {{"at_rank1", s.at_rank1},
            {"considered", s.considered},
            {"in_top5", s.in_top5},
            {"mean_rank", s.mean_rank}};
}

nlohmann::json preference_json(const PreferenceSummary& s) {
    nlohmann::json inclusion(nlohmann::json::value_t::object);
    for (const auto& [k, v] : s.inclusion) inclusion[k] = v;
    nlohmann::json display(nlohmann::json::value_t::object);
    for (const auto& [k, v] : s.display) display[k] = v;
    return {{"analyzed_sets", s.analyzed_sets},
            {"display", display},
            {"inclusion", inclusion},
            {"model", s.model_label},
            {"peir", s.peir},
            {"preferred_entity", s.preferred_entity},
            {"topic", s.topic},
            {"total_questions", s.total_questions}};
}

nlohmann::json lor_json(const LorResult& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"cluster", c.cluster_id},
                         {"count_a", c.count_a},
                         {"count_b", c.count_b},
                         {"lor", c.value}});
    return {{"cells", cells},
            {"degenerate", r.degenerate},
            {"mean", r.mean},
            {"model", r.model_label},
            {"p", r.p_value},
            {"region_a", to_string(r.region_a)},
            {"region_b", to_string(r.region_b)},
            {"t", r.t_stat},
            {"topic", r.topic}};
}

nlohmann::json stability_json(const StabilityResult& r) {
    nlohmann::json matrix = nlohmann::json::array();
    for (const auto& row : r.matrix) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : row)
            cells.push_back({{"degenerate", c.degenerate},
                             {"exact_p", c.exact_p},
                             {"p", c.p},
                             {"rho", c.rho}});
        matrix.push_back(cells);
    }
    return {{"entities", r.entities},
            {"kruskal",
             {{"all_identical", r.kruskal.all_identical},
              {"h", r.kruskal.h},
              {"p", r.kruskal.p}}},
            {"kruskal_input", r.kruskal_input},
            {"matrix", matrix},
            {"model", r.model_label},
            {"topic", r.topic}};
}

nlohmann::json country_json(const CountryPresence& c) {
    nlohmann::json clusters(nlohmann::json::value_t::object);
    for (const auto& [k, v] : c.per_cluster) clusters[k] = presence_json(v);
    return {{"clusters", clusters},
            {"country", c.country},
            {"model", c.model_label},
            {"overall", presence_json(c.overall)},
            {"topic", c.topic}};
}

}  // namespace

nlohmann::json export_results(const ResultsBundle& bundle) {
    auto preference = bundle.preference;
    std::sort(preference.begin(), preference.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label) < std::tie(b.topic, b.model_label);
    });
    auto lor = bundle.lor;
    std::sort(lor.begin(), lor.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label, a.region_a, a.region_b) <
               std::tie(b.topic, b.model_label, b.region_a, b.region_b);
    });
    auto stability = bundle.stability;
    std::sort(stability.begin(), stability.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label) < std::tie(b.topic, b.model_label);
    });
    auto country = bundle.country;
    std::sort(country.begin(), country.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label, a.country) <
               std::tie(b.topic, b.model_label, b.country);
    });

    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : bundle.models) models.push_back(to_json(m));

    nlohmann::json doc;
    doc["manifest"] = {{"config", bundle.config},
                       {"created_at", bundle.created_at},
                       {"dataset_hash", bundle.dataset_hash},
                       {"models", models},
                       {"seed", bundle.seed},
                       {"topics", bundle.topics}};
    doc["preference"] = nlohmann::json::array();
    for (const auto& s : preference) doc["preference"].push_back(preference_json(s));
    doc["lor_tests"] = nlohmann::json::array();
    for (const auto& r : lor) doc["lor_tests"].push_back(lor_json(r));
    doc["stability"] = nlohmann::json::array();
    for (const auto& r : stability) doc["stability"].push_back(stability_json(r));
    doc["country_presence"] = nlohmann::json::array();
    for (const auto& c : country) doc["country_presence"].push_back(country_json(c));
    return doc;
}

std::string export_results_text(const ResultsBundle& bundle) {
    return export_results(bundle).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Assembled markdown report
// ---------------------------------------------------------------------------

namespace {

std::string kruskal_line(const StabilityResult& r) {
    std::string h = r.kruskal.all_identical ? "0.00" : format_sig3(r.kruskal.h);
    return "Kruskal–Wallis over " + r.kruskal_input + ": H = " + h +
           ", p = " + format_p(r.kruskal.p) + ".\n";
}

std::string model_label_list(const std::vector<ModelId>& models) {
    std::string out;
    for (const auto& m : models) {
        if (!out.empty()) out += ", ";
        out += m.label;
    }
    return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

// (model, topic) pairs in layout order, restricted to what the data holds.
template <typename T>
std::vector<const T*> in_layout_order(const std::vector<T>& items, const ReportLayout& layout) {
    std::vector<const T*> out;
    for (const auto& topic : layout.topics) {
        for (const auto& model : layout.models) {
            for (const auto& item : items)
                if (item.topic == topic && item.model_label == model) out.push_back(&item);
        }
    }
    return out;
}

std::string presence_row_rank(const PresenceStats& s) {
    return s.in_top5 > 0 ? format_sig3(s.mean_rank) : std::string(kEmDash);
}

}  // namespace

std::string render_markdown_report(const ResultsBundle& bundle) {
    ReportLayout layout;
    layout.topics = bundle.topics;
    for (const auto& m : bundle.models) layout.models.push_back(m.label);

    std::string out = "# Entity-preference audit\n\n";
    out += "- Generated: " + bundle.created_at + "\n";
    out += "- Dataset: " + bundle.dataset_hash + "\n";
    out += "- Seed: " + std::to_string(bundle.seed) + "\n";
    out += "- Models: " + model_label_list(bundle.models) + "\n";
    out += "- Topics: " + join(bundle.topics, ", ") + "\n";

    out += "\n## Preferred-entity inclusion\n\n";
    out +=
        "Share of each topic's questions whose top-five recommendations contain\n"
        "the model's most-included entity (PEIR, shown as a percentage).\n"
        "Emphasis marks rates at or above 60%.\n\n";
    if (bundle.preference.empty()) out += "_No data._\n";
    else out += render_preference_table(bundle.preference, layout);

    for (auto [region_a, region_b] : region_pairs_of(bundle.lor)) {
        out += "\n## Regional preference — " + to_string(region_a) + " vs " +
               to_string(region_b) + "\n\n";
        out +=
            "Mean smoothed log odds ratio of " + to_string(region_a) + " slots against " +
            to_string(region_b) +
            " slots\nacross the buyer mindsets, with the p-value of a two-sided one-sample\n"
            "t-test against zero. Emphasis follows the sign of the mean.\n\n";
        out += render_lor_table(bundle.lor, region_a, region_b, layout);
    }

    out += "\n## Repetition stability\n";
    if (bundle.stability.empty()) out += "\n_No data._\n";
    for (const auto* r : in_layout_order(bundle.stability, layout)) {
        out += "\n### " + r->model_label + " — " + r->topic + "\n\n";
        out += render_stability_matrix(*r);
        out += "\n" + kruskal_line(*r);
    }

    std::set<std::string> countries;
    for (const auto& c : bundle.country) countries.insert(c.country);
    for (const auto& country : countries) {
        out += "\n## Country presence — " + country + "\n\n";
        out += md_row({"Model", "Topic", "Cluster", "Considered", "In top 5", "Ranked first",
                       "Mean rank"});
        out += md_separator(7);
        for (const auto* c : in_layout_order(bundle.country, layout)) {
            if (c->country != country) continue;
            out += md_row({c->model_label, c->topic, "(overall)",
                           std::to_string(c->overall.considered),
                           std::to_string(c->overall.in_top5),
                           std::to_string(c->overall.at_rank1),
                           presence_row_rank(c->overall)});
            for (const auto& [cluster, s] : c->per_cluster)
                out += md_row({c->model_label, c->topic, cluster, std::to_string(s.considered),
                               std::to_string(s.in_top5), std::to_string(s.at_rank1),
                               presence_row_rank(s)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// HTML report
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kHtmlStyle = R"(body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 72rem; padding: 0 1rem; color: #1a1a1a; }
table { border-collapse: collapse; margin: 1rem 0; }
th, td { border: 1px solid #bbb; padding: 0.3rem 0.6rem; text-align: left; }
td.num { text-align: right; }
td.hot { background: #bfe3bf; font-weight: 600; }
td.pos { background: #d9f0d9; }
td.neg { background: #f3d2d2; }
caption { caption-side: top; text-align: left; font-weight: 600; padding: 0.3rem 0; }
h1, h2, h3 { margin-top: 1.6rem; }
)";

}  // namespace

std::string render_html_report(const ResultsBundle& bundle) {
    ReportLayout layout;
    layout.topics = bundle.topics;
    for (const auto& m : bundle.models) layout.models.push_back(m.label);

    std::string body = "<h1>Entity-preference audit</h1>\n<ul>\n";
    body += "<li>Generated: " + html_escape(bundle.created_at) + "</li>\n";
    body += "<li>Dataset: " + html_escape(bundle.dataset_hash) + "</li>\n";
    body += "<li>Seed: " + std::to_string(bundle.seed) + "</li>\n";
    body += "<li>Models: " + html_escape(model_label_list(bundle.models)) + "</li>\n";
    body += "</ul>\n";

    // Preference grid.
    {
        std::map<std::pair<std::string, std::string>, const PreferenceSummary*> grid;
        for (const auto& s : bundle.preference) grid[{s.topic, s.model_label}] = &s;
        std::vector<std::string> headers{"Topic"};
        for (const auto& m : layout.models) {
            headers.push_back(m + ": entity");
            headers.push_back(m + ": PEIR %");
        }
        std::vector<std::vector<HtmlCell>> rows;
        for (const auto& topic : layout.topics) {
            std::vector<HtmlCell> row{{topic, "", true}};
            for (const auto& m : layout.models) {
                auto it = grid.find({topic, m});
                if (it == grid.end() || it->second->preferred_entity.empty()) {
                    row.push_back({kEmDash, ""});
                    row.push_back({kEmDash, "num"});
                    continue;
                }
                const auto& s = *it->second;
                row.push_back({s.preferred_entity, ""});
                row.push_back({peir_percent(s.peir),
                               peir_emphasized(s.peir) ? "num hot" : "num"});
            }
            rows.push_back(std::move(row));
        }
        body += "<h2>Preferred-entity inclusion</h2>\n";
        body += html_table("PEIR %, emphasis at 60% and above", headers, rows);
    }

    // One LOR grid per region pair.
    for (auto [region_a, region_b] : region_pairs_of(bundle.lor)) {
        std::map<std::pair<std::string, std::string>, const LorResult*> grid;
        for (const auto& r : bundle.lor)
            if (r.region_a == region_a && r.region_b == region_b)
                grid[{r.topic, r.model_label}] = &r;
        std::vector<std::string> headers{"Topic"};
        for (const auto& m : layout.models) {
            headers.push_back(m + ": mean LOR");
            headers.push_back(m + ": p");
        }
        std::vector<std::vector<HtmlCell>> rows;
        for (const auto& topic : layout.topics) {
            std::vector<HtmlCell> row{{topic, "", true}};
            for (const auto& m : layout.models) {
                auto it = grid.find({topic, m});
                if (it == grid.end()) {
                    row.push_back({kEmDash, "num"});
                    row.push_back({kEmDash, "num"});
                    continue;
                }
                const auto& r = *it->second;
                std::string cls = "num";
                if (r.mean > 0.0) cls = "num pos";
                else if (r.mean < 0.0) cls = "num neg";
                row.push_back({format_sig3(r.mean), cls});
                row.push_back({format_p(r.p_value), "num"});
            }
            rows.push_back(std::move(row));
        }
        body += "<h2>Regional preference — " + html_escape(to_string(region_a)) + " vs " +
                html_escape(to_string(region_b)) + "</h2>\n";
        body += html_table("Positive favors " + to_string(region_a) + ", negative favors " +
                               to_string(region_b),
                           headers, rows);
    }

    // Stability matrices.
    if (!bundle.stability.empty()) body += "<h2>Repetition stability</h2>\n";
    for (const auto* r : in_layout_order(bundle.stability, layout)) {
        check_stability_matrix(*r);
        const std::size_t n = r->matrix.size();
        std::vector<std::string> headers{""};
        for (std::size_t j = 0; j < n; ++j) headers.push_back("Rep" + std::to_string(j + 1));
        std::vector<std::vector<HtmlCell>> rows;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<HtmlCell> row{{"Rep" + std::to_string(i + 1), "", true}};
            for (std::size_t j = 0; j < n; ++j)
                row.push_back({j <= i ? stability_cell(r->matrix[i][j]) : "", "num"});
            rows.push_back(std::move(row));
        }
        body += "<h3>" + html_escape(r->model_label) + " — " + html_escape(r->topic) +
                "</h3>\n";
        body += html_table("", headers, rows);
        body += "<p>" + html_escape(kruskal_line(*r)) + "</p>\n";
    }

    // Country presence.
    std::set<std::string> countries;
    for (const auto& c : bundle.country) countries.insert(c.country);
    for (const auto& country : countries) {
        std::vector<std::vector<HtmlCell>> rows;
        for (const auto* c : in_layout_order(bundle.country, layout)) {
            if (c->country != country) continue;
            rows.push_back({{c->model_label, "", true},
                            {c->topic, ""},
                            {"(overall)", ""},
                            {std::to_string(c->overall.considered), "num"},
                            {std::to_string(c->overall.in_top5), "num"},
                            {std::to_string(c->overall.at_rank1), "num"},
                            {presence_row_rank(c->overall), "num"}});
            for (const auto& [cluster, s] : c->per_cluster)
                rows.push_back({{c->model_label, "", true},
                                {c->topic, ""},
                                {cluster, ""},
                                {std::to_string(s.considered), "num"},
                                {std::to_string(s.in_top5), "num"},
                                {std::to_string(s.at_rank1), "num"},
                                {presence_row_rank(s), "num"}});
        }
        body += "<h2>Country presence — " + html_escape(country) + "</h2>\n";
        body += html_table("", {"Model", "Topic", "Cluster", "Considered", "In top 5",
                                "Ranked first", "Mean rank"},
                           rows);
    }

    std::string out = "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
    out += "<title>Entity-preference audit</title>\n<style>\n";
    out += kHtmlStyle;
    out += "</style>\n</head>\n<body>\n";
    out += body;
    out += "</body>\n</html>\n";
    return out;
}

// ---------------------------------------------------------------------------
// Flat files
// ---------------------------------------------------------------------------

std::map<std::string, std::string> render_flat_files(const ResultsBundle& bundle) {
    std::map<std::string, std::string> files;

    auto preference = bundle.preference;
    std::sort(preference.begin(), preference.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label) < std::tie(b.topic, b.model_label);
    });
    std::string pref = "model,topic,preferred_entity,peir,analyzed_sets,total_questions\n";
    for (const auto& s : preference) {
        pref += csv_field(s.model_label) + ',' + csv_field(s.topic) + ',' +
                csv_field(s.preferred_entity) + ',' + csv_double(s.peir) + ',' +
                std::to_string(s.analyzed_sets) + ',' + std::to_string(s.total_questions) + '\n';
    }
    files["preference.csv"] = pref;

    auto lor = bundle.lor;
    std::sort(lor.begin(), lor.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label, a.region_a, a.region_b) <
               std::tie(b.topic, b.model_label, b.region_a, b.region_b);
    });
    std::string lors =
        "model,topic,region_a,region_b,cluster,count_a,count_b,lor,mean_lor,t_stat,p_value,"
        "degenerate\n";
    for (const auto& r : lor) {
        const std::string prefix = csv_field(r.model_label) + ',' + csv_field(r.topic) + ',' +
                                   to_string(r.region_a) + ',' + to_string(r.region_b) + ',';
        const std::string suffix = ',' + csv_double(r.mean) + ',' + csv_double(r.t_stat) + ',' +
                                   csv_double(r.p_value) + ',' +
                                   (r.degenerate ? "true" : "false") + '\n';
        for (const auto& c : r.cells)
            lors += prefix + csv_field(c.cluster_id) + ',' + std::to_string(c.count_a) + ',' +
                    std::to_string(c.count_b) + ',' + csv_double(c.value) + suffix;
    }
    files["lor.csv"] = lors;

    auto stability = bundle.stability;
    std::sort(stability.begin(), stability.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label) < std::tie(b.topic, b.model_label);
    });
    std::string stab =
        "model,topic,rep_a,rep_b,rho,p,degenerate,exact_p,kruskal_h,kruskal_p,kruskal_input\n";
    for (const auto& r : stability) {
        for (std::size_t i = 1; i < r.matrix.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                const auto& c = r.matrix[i][j];
                stab += csv_field(r.model_label) + ',' + csv_field(r.topic) + ',' +
                        std::to_string(i + 1) + ',' + std::to_string(j + 1) + ',' +
                        (c.degenerate ? "" : csv_double(c.rho)) + ',' +
                        (c.degenerate ? "" : csv_double(c.p)) + ',' +
                        (c.degenerate ? "true" : "false") + ',' +
                        (c.exact_p ? "true" : "false") + ',' + csv_double(r.kruskal.h) + ',' +
                        csv_double(r.kruskal.p) + ',' + csv_field(r.kruskal_input) + '\n';
            }
        }
    }
    files["stability.csv"] = stab;

    auto country = bundle.country;
    std::sort(country.begin(), country.end(), [](const auto& a, const auto& b) {
        return std::tie(a.topic, a.model_label, a.country) <
               std::tie(b.topic, b.model_label, b.country);
    });
    std::string ctry = "model,topic,country,cluster,considered,in_top5,at_rank1,mean_rank\n";
    auto presence_csv = [&](const CountryPresence& c, const std::string& cluster,
                            const PresenceStats& s) {
        ctry += csv_field(c.model_label) + ',' + csv_field(c.topic) + ',' +
                csv_field(c.country) + ',' + csv_field(cluster) + ',' +
                std::to_string(s.considered) + ',' + std::to_string(s.in_top5) + ',' +
                std::to_string(s.at_rank1) + ',' + csv_double(s.mean_rank) + '\n';
    };
    for (const auto& c : country) {
        presence_csv(c, "(overall)", c.overall);
        for (const auto& [cluster, s] : c.per_cluster) presence_csv(c, cluster, s);
    }
    files["country.csv"] = ctry;

    return files;
}

}  // namespace choiceeval
