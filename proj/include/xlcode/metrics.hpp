#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "codeexec.hpp"
#include "error.hpp"
#include "lang.hpp"

namespace xlcode::metrics {

using json = nlohmann::json;

struct OutcomeTally {
    std::uint64_t n_total = 0;
    std::uint64_t n_syntax = 0;
    std::uint64_t n_logical = 0;
    std::uint64_t n_all_passed = 0;
    std::uint64_t n_complete = 0;

    bool consistent() const {
        return n_syntax + n_logical + n_all_passed == n_total && n_complete <= n_total;
    }
};

inline OutcomeTally tally(const std::vector<codeexec::OutcomeRecord>& outcomes) {
    if (outcomes.empty())
        throw InvalidArgument("empty cell");
    OutcomeTally t;
    for (const auto& o : outcomes) {
        ++t.n_total;
        switch (o.cls) {
        case codeexec::OutcomeClass::syntax_error: ++t.n_syntax; break;
        case codeexec::OutcomeClass::logical_failure: ++t.n_logical; break;
        case codeexec::OutcomeClass::all_passed: ++t.n_all_passed; break;
        }
        if (o.complete)
            ++t.n_complete;
    }
    return t;
}

// A percentage held exactly as count/total; rounding happens only when rendered.
struct Rate {
    std::uint64_t count = 0;
    std::uint64_t total = 1;

    double value() const { return 100.0 * static_cast<double>(count) / static_cast<double>(total); }

    // Half-up rounding to hundredths of a percent, computed in integers:
    // floor((10000*count/total) + 1/2).
    std::int64_t hundredths() const {
        auto num = static_cast<unsigned __int128>(count) * 20000u + total;
        return static_cast<std::int64_t>(num / (static_cast<unsigned __int128>(total) * 2u));
    }

    double rounded() const { return static_cast<double>(hundredths()) / 100.0; }

    std::string str() const {
        auto h = hundredths();
        std::ostringstream os;
        os << h / 100 << '.' << (h % 100 < 10 ? "0" : "") << h % 100;
        return os.str();
    }
};

struct MetricsRow {
    std::string model;
    std::string lang;
    std::string mode;
    OutcomeTally counts;
    Rate ler, ser, total_er, atpr, ccr;

    json to_json() const {
        return {{"model", model},
                {"lang", lang},
                {"mode", mode},
                {"n_total", counts.n_total},
                {"n_syntax", counts.n_syntax},
                {"n_logical", counts.n_logical},
                {"n_all_passed", counts.n_all_passed},
                {"n_complete", counts.n_complete},
                {"total_er_pct", total_er.rounded()},
                {"ler_pct", ler.rounded()},
                {"ser_pct", ser.rounded()},
                {"atpr_pct", atpr.rounded()},
                {"ccr_pct", ccr.rounded()}};
    }
};

inline MetricsRow compute_rates(const OutcomeTally& t, std::string model = {}, std::string lang = {},
                                std::string mode = {}) {
    if (t.n_total == 0)
        throw InvalidArgument("cannot compute rates for an empty tally");
    if (!t.consistent())
        throw InvalidArgument("inconsistent tally: classes do not sum to n_total");
    MetricsRow r;
    r.model = std::move(model);
    r.lang = std::move(lang);
    r.mode = std::move(mode);
    r.counts = t;
    r.ler = {t.n_logical, t.n_total};
    r.ser = {t.n_syntax, t.n_total};
    r.total_er = {t.n_syntax + t.n_logical, t.n_total};
    r.atpr = {t.n_all_passed, t.n_total};
    r.ccr = {t.n_complete, t.n_total};
    if (r.total_er.count != r.ler.count + r.ser.count || r.atpr.count != t.n_total - r.total_er.count)
        throw InvalidArgument("metric identity violated in count space");
    return r;
}

enum class Metric { total_er, ler, ser, atpr, ccr };
inline constexpr std::array<Metric, 5> kMetricOrder = {Metric::total_er, Metric::ler, Metric::ser,
                                                       Metric::atpr, Metric::ccr};

inline std::string metric_name(Metric m) {
    switch (m) {
    case Metric::total_er: return "TotalER";
    case Metric::ler: return "LER";
    case Metric::ser: return "SER";
    case Metric::atpr: return "ATPR";
    case Metric::ccr: return "CCR";
    }
    return "?";
}

inline const Rate& metric_of(const MetricsRow& r, Metric m) {
    switch (m) {
    case Metric::total_er: return r.total_er;
    case Metric::ler: return r.ler;
    case Metric::ser: return r.ser;
    case Metric::atpr: return r.atpr;
    case Metric::ccr: return r.ccr;
    }
    return r.ccr;
}

// ---------------------------------------------------------------------------
// English gap

struct GapEntry {
    std::string model;
    std::string mode;
    Metric metric = Metric::total_er;
    std::map<std::string, double> deviation; // lang -> value(lang) - value(en), unrounded
    double mean_abs_deviation = 0;           // over non-English languages present
};

struct GapReport {
    std::vector<GapEntry> entries;

    const GapEntry& find(const std::string& model, const std::string& mode, Metric m) const {
        for (const auto& e : entries)
            if (e.model == model && e.mode == mode && e.metric == m)
                return e;
        throw InvalidArgument("no gap entry for " + model + "/" + mode + "/" + metric_name(m));
    }
};

inline GapReport gap_vs_english(const std::vector<MetricsRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> cells;
    for (const auto& r : rows)
        cells[{r.model, r.mode}].push_back(&r);
    GapReport rep;
    for (const auto& [key, group] : cells) {
        const MetricsRow* en = nullptr;
        for (const auto* r : group)
            if (r->lang == "en")
                en = r;
        if (!en)
            throw InvalidArgument("missing English row for model " + key.first + ", mode " + key.second);
        for (auto m : kMetricOrder) {
            GapEntry e{key.first, key.second, m, {}, 0};
            double sum = 0;
            std::size_t n = 0;
            for (const auto* r : group) {
                double d = metric_of(*r, m).value() - metric_of(*en, m).value();
                e.deviation[r->lang] = d;
                if (r->lang != "en") {
                    sum += std::abs(d);
                    ++n;
                }
            }
            e.mean_abs_deviation = n ? sum / static_cast<double>(n) : 0.0;
            rep.entries.push_back(std::move(e));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Rendering

enum class Format { table, csv, json };

inline Format parse_format(std::string_view s) {
    if (s == "table") return Format::table;
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw InvalidArgument("unknown report format \"" + std::string(s) + "\"");
}

inline std::vector<const MetricsRow*> ordered(const std::vector<MetricsRow>& rows) {
    std::vector<const MetricsRow*> out;
    for (const auto& r : rows)
        out.push_back(&r);
    std::stable_sort(out.begin(), out.end(), [](const MetricsRow* a, const MetricsRow* b) {
        return std::make_tuple(a->model, a->mode, lang_rank(a->lang), a->lang) <
               std::make_tuple(b->model, b->mode, lang_rank(b->lang), b->lang);
    });
    return out;
}

inline std::string fixed2(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << (std::abs(v) < 0.005 ? 0.0 : v);
    return os.str();
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t w, bool right = true) {
    if (s.size() >= w)
        return s;
    return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

inline std::string render_table(const std::vector<const MetricsRow*>& rows) {
    // Table-3 layout: one block per metric, one column per mode.
    std::vector<std::string> models, modes;
    for (const auto* r : rows) {
        if (std::find(models.begin(), models.end(), r->model) == models.end())
            models.push_back(r->model);
        if (std::find(modes.begin(), modes.end(), r->mode) == modes.end())
            modes.push_back(r->mode);
    }
    static const std::vector<std::string> mode_order = {"orig", "cot", "bft", "lp"};
    std::stable_sort(modes.begin(), modes.end(), [](const std::string& a, const std::string& b) {
        auto ia = std::find(mode_order.begin(), mode_order.end(), a) - mode_order.begin();
        auto ib = std::find(mode_order.begin(), mode_order.end(), b) - mode_order.begin();
        return ia < ib;
    });
    std::size_t model_w = 5;
    for (const auto& m : models)
        model_w = std::max(model_w, m.size());
    const std::size_t cell_w = 7;

    std::ostringstream os;
    os << pad("LLM", model_w, false) << " | Lang";
    for (auto m : kMetricOrder) {
        std::string title = metric_name(m);
        os << " | " << pad(title, modes.size() * (cell_w + 1) - 1, false);
    }
    os << "\n" << pad("", model_w, false) << " |     ";
    for (std::size_t k = 0; k < kMetricOrder.size(); ++k) {
        os << " |";
        for (const auto& md : modes)
            os << " " << pad(md, cell_w);
    }
    os << "\n";
    for (const auto& model : models) {
        std::vector<std::string> langs;
        for (const auto* r : rows)
            if (r->model == model && std::find(langs.begin(), langs.end(), r->lang) == langs.end())
                langs.push_back(r->lang);
        std::stable_sort(langs.begin(), langs.end(), [](const std::string& a, const std::string& b) {
            return std::make_pair(lang_rank(a), a) < std::make_pair(lang_rank(b), b);
        });
        bool first = true;
        for (const auto& lang : langs) {
            os << pad(first ? model : "", model_w, false) << " | " << pad(lang, 4, false);
            first = false;
            for (auto m : kMetricOrder) {
                os << " |";
                for (const auto& md : modes) {
                    const MetricsRow* hit = nullptr;
                    for (const auto* r : rows)
                        if (r->model == model && r->lang == lang && r->mode == md)
                            hit = r;
                    os << " " << pad(hit ? metric_of(*hit, m).str() : "-", cell_w);
                }
            }
            os << "\n";
        }
    }
    return os.str();
}

} // namespace detail

// Byte-stable rendering; columns TotalER, LER, SER, ATPR, CCR; languages en, es, hi, ja, ru, zh.
inline std::string render_report(const std::vector<MetricsRow>& rows, const GapReport* gaps, Format format) {
    if (rows.empty())
        throw InvalidArgument("nothing to render: no metrics rows");
    auto sorted = ordered(rows);
    switch (format) {
    case Format::csv: {
        std::string out = "model,lang,mode,n_total,TotalER,LER,SER,ATPR,CCR\n";
        for (const auto* r : sorted) {
            out += r->model + "," + r->lang + "," + r->mode + "," + std::to_string(r->counts.n_total);
            for (auto m : kMetricOrder)
                out += "," + metric_of(*r, m).str();
            out += "\n";
        }
        return out;
    }
    case Format::json: {
        json j;
        j["rounding"] = "half-up, 2 decimals";
        json arr = json::array();
        for (const auto* r : sorted)
            arr.push_back(r->to_json());
        j["rows"] = std::move(arr);
        if (gaps) {
            json g = json::array();
            for (const auto& e : gaps->entries) {
                json dev = json::object();
                for (const auto& [lang, d] : e.deviation)
                    dev[lang] = std::round(d * 100.0) / 100.0;
                g.push_back({{"model", e.model},
                             {"mode", e.mode},
                             {"metric", metric_name(e.metric)},
                             {"deviation", dev},
                             {"mean_abs_deviation", std::round(e.mean_abs_deviation * 100.0) / 100.0}});
            }
            j["gaps"] = std::move(g);
        }
        return j.dump(2) + "\n";
    }
    case Format::table: {
        std::string out = detail::render_table(sorted);
        if (gaps) {
            out += "\nDeviation from English (mean |value - en| over languages)\n";
            for (const auto& e : gaps->entries)
                out += e.model + " " + e.mode + " " + metric_name(e.metric) + ": " +
                       fixed2(e.mean_abs_deviation) + "\n";
        }
        return out;
    }
    }
    throw InvalidArgument("unknown report format");
}

// Groups outcome records into (lang, mode) cells for one model and computes each row.
inline std::vector<MetricsRow> rows_from_outcomes(const std::string& model,
                                                  const std::vector<codeexec::OutcomeRecord>& outcomes) {
    std::map<std::pair<std::string, std::string>, std::vector<codeexec::OutcomeRecord>> cells;
    for (const auto& o : outcomes)
        cells[{o.lang, codeexec::to_string(o.mode)}].push_back(o);
    std::vector<MetricsRow> rows;
    for (const auto& [key, group] : cells)
        rows.push_back(compute_rates(tally(group), model, key.first, key.second));
    return rows;
}

} // namespace xlcode::metrics
