#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleu.hpp"
#include "codeexec.hpp"
#include "error.hpp"
#include "jsonl.hpp"
#include "lang.hpp"
#include "llmgateway.hpp"
#include "random.hpp"

namespace xlcode::bootstrap {

using json = nlohmann::json;

inline constexpr double kAlgorithmThreshold = 0.9; // strict preset
inline constexpr double kTextThreshold = 0.8;      // lenient preset
inline constexpr int kRecommendedEpochs = 2;

struct BootstrapConfig {
    int n_attempts = 1;
    double threshold = kAlgorithmThreshold;
    std::vector<std::string> target_langs = {"es", "hi", "ja", "ru", "zh"};
    std::string gen_prompt = "Generate 100 python problems";
    std::uint64_t seed = 0;
    std::size_t max_in_flight = 4;
    bool include_source_pairs = false; // also emit the English <q, a> pairs
    llm::ChatRequest base;             // model, sampling settings; prompts are filled per call

    void validate() const {
        if (n_attempts < 1)
            throw InvalidArgument("n_attempts must be >= 1");
        if (threshold < 0.0 || threshold > 1.0)
            throw InvalidArgument("threshold must be in [0, 1]");
        for (const auto& l : target_langs)
            if (l == "en" || !is_known_lang(l))
                throw InvalidArgument("invalid target language \"" + l + "\"");
    }
};

struct CandidatePair {
    std::string q; // English problem
    std::string a; // answer code
};

struct RoundTrip {
    std::string q;
    std::string lang;
    std::string t;
    std::string bt;
    double bleu = 0.0;
    bool accepted = false;
    std::string error; // translation failure; pair skipped

    json to_json() const {
        json j = {{"q", q}, {"lang", lang}, {"t", t}, {"bt", bt}, {"bleu", bleu}, {"accepted", accepted}};
        if (!error.empty())
            j["error"] = error;
        return j;
    }
};

struct TrainingExample {
    std::string prompt;
    std::string completion;
    std::string lang;
};

struct GenerationResult {
    std::vector<CandidatePair> pairs;
    std::vector<std::string> warnings;
    int requests_issued = 0;
};

// Numbered ("1." / "1)") or bulleted list items, one per line. Exact duplicates dropped.
inline std::vector<std::string> parse_problem_list(const std::string& text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& raw : codeexec::detail::split_lines(text)) {
        auto line = codeexec::detail::trim(raw);
        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])))
            ++i;
        std::string item;
        if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')'))
            item = codeexec::detail::trim(line.substr(i + 1));
        else if (!line.empty() && (line[0] == '-' || line[0] == '*') && line.size() > 1 && line[1] == ' ')
            item = codeexec::detail::trim(line.substr(2));
        if (item.size() >= 2 && item.front() == '*' && item[1] == '*') {
            // Markdown bold "**Title**: text" keeps the text only when present.
            auto close = item.find("**", 2);
            if (close != std::string::npos) {
                auto rest = codeexec::detail::trim(item.substr(close + 2));
                if (!rest.empty() && rest[0] == ':')
                    rest = codeexec::detail::trim(rest.substr(1));
                item = rest.empty() ? item.substr(2, close - 2) : rest;
            }
        }
        if (!item.empty() && seen.insert(item).second)
            out.push_back(item);
    }
    return out;
}

inline llm::ChatRequest generation_request(const BootstrapConfig& cfg, int attempt) {
    llm::ChatRequest r = cfg.base;
    r.user_prompt = cfg.gen_prompt;
    // Distinct seeds give each attempt its own transcript entry.
    r.seed = static_cast<std::int64_t>(cfg.seed) + attempt;
    return r;
}

inline llm::ChatRequest answer_request(const BootstrapConfig& cfg, const std::string& q) {
    llm::ChatRequest r = cfg.base;
    r.user_prompt = q;
    return r;
}

inline llm::ChatRequest translate_request(const BootstrapConfig& cfg, const std::string& text,
                                          const std::string& lang) {
    llm::ChatRequest r = cfg.base;
    r.system_prompt = "Translate from English into " + lang_display_name(lang);
    r.user_prompt = text;
    return r;
}

inline llm::ChatRequest back_translate_request(const BootstrapConfig& cfg, const std::string& text,
                                               const std::string& lang) {
    llm::ChatRequest r = cfg.base;
    r.system_prompt = "Translate from " + lang_display_name(lang) + " into English";
    r.user_prompt = text;
    return r;
}

// n_attempts generation calls, then one answer call per distinct problem.
// Answers without complete code are dropped with a warning.
inline GenerationResult generate_candidates(const BootstrapConfig& cfg, const llm::Client& client,
                                            const codeexec::PythonToolchain& toolchain) {
    cfg.validate();
    GenerationResult res;
    std::vector<std::string> problems;
    std::set<std::string> seen;
    bool any_text = false;
    for (int i = 0; i < cfg.n_attempts; ++i) {
        ++res.requests_issued;
        llm::ChatResponse resp;
        try {
            resp = client.complete(generation_request(cfg, i));
        } catch (const llm::ReplayMiss&) {
            throw;
        } catch (const std::exception& e) {
            res.warnings.push_back("generation attempt " + std::to_string(i) + " failed: " + e.what());
            continue;
        }
        if (!resp.text || codeexec::detail::trim(*resp.text).empty()) {
            res.warnings.push_back("generation attempt " + std::to_string(i) + " returned no text");
            continue;
        }
        any_text = true;
        auto items = parse_problem_list(*resp.text);
        if (items.empty())
            res.warnings.push_back("generation attempt " + std::to_string(i) + " contained no problem list");
        for (auto& q : items)
            if (seen.insert(q).second)
                problems.push_back(std::move(q));
    }
    if (!any_text)
        throw Error("all generation attempts came back empty");

    std::vector<llm::ChatRequest> reqs;
    for (const auto& q : problems)
        reqs.push_back(answer_request(cfg, q));
    auto answers = client.batch(reqs, cfg.max_in_flight);
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const auto& item = answers[i];
        if (!item.ok()) {
            res.warnings.push_back("answer for \"" + problems[i] + "\" failed: " + item.error);
            continue;
        }
        if (!item.response->text) {
            res.warnings.push_back("answer for \"" + problems[i] + "\" is empty");
            continue;
        }
        auto prog = codeexec::extract_code({"", "en", codeexec::Mode::orig, *item.response->text}, toolchain);
        if (!prog.complete) {
            res.warnings.push_back("answer for \"" + problems[i] + "\" has no parseable function");
            continue;
        }
        res.pairs.push_back({problems[i], prog.code});
    }
    return res;
}

struct FilterResult {
    std::vector<TrainingExample> data;
    std::vector<RoundTrip> audit; // one entry per input pair, input order
};

// Translate q into `lang`, translate back, and keep (t, a) when
// BLEU(back-translation, q) > threshold.
inline FilterResult round_trip_filter(const std::vector<CandidatePair>& pairs, const std::string& lang,
                                      const BootstrapConfig& cfg, const llm::Client& client) {
    if (lang == "en")
        throw InvalidArgument("round trip needs a non-English target language");
    cfg.validate();
    FilterResult out;
    out.audit.resize(pairs.size());

    std::vector<llm::ChatRequest> fwd;
    for (const auto& p : pairs)
        fwd.push_back(translate_request(cfg, p.q, lang));
    auto t_items = client.batch(fwd, cfg.max_in_flight);

    std::vector<llm::ChatRequest> back;
    std::vector<std::size_t> back_idx;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto& rt = out.audit[i];
        rt.q = pairs[i].q;
        rt.lang = lang;
        if (!t_items[i].ok() || !t_items[i].response->text) {
            rt.error = "translation failed: " + (t_items[i].ok() ? std::string("no text") : t_items[i].error);
            continue;
        }
        rt.t = codeexec::detail::trim(*t_items[i].response->text);
        back.push_back(back_translate_request(cfg, rt.t, lang));
        back_idx.push_back(i);
    }
    auto bt_items = client.batch(back, cfg.max_in_flight);
    for (std::size_t k = 0; k < back_idx.size(); ++k) {
        auto i = back_idx[k];
        auto& rt = out.audit[i];
        if (!bt_items[k].ok() || !bt_items[k].response->text) {
            rt.error = "back-translation failed: " + (bt_items[k].ok() ? std::string("no text") : bt_items[k].error);
            continue;
        }
        rt.bt = codeexec::detail::trim(*bt_items[k].response->text);
        try {
            rt.bleu = bleu::bleu_sentence(rt.bt, rt.q).score;
        } catch (const InvalidArgument& e) {
            rt.error = e.what();
            continue;
        }
        rt.accepted = rt.bleu > cfg.threshold;
        if (rt.accepted)
            out.data.push_back({rt.t, pairs[i].a, lang});
    }
    return out;
}

// Permutation depends only on the seed, not on the standard library.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    rnd::seeded_shuffle(v, seed);
}

struct DatasetMeta {
    double threshold = kAlgorithmThreshold;
    std::uint64_t seed = 0;
    double temperature = llm::kDefaultTemperature;
    int epochs = kRecommendedEpochs;
};

inline std::filesystem::path metadata_path(const std::filesystem::path& dataset) {
    auto p = dataset;
    p += ".meta.json";
    return p;
}

// Writes the shuffled JSONL dataset and a sidecar `<path>.meta.json`.
inline json emit_dataset(std::vector<TrainingExample> data, const std::filesystem::path& path,
                         std::uint64_t shuffle_seed, const DatasetMeta& meta) {
    if (data.empty())
        throw InvalidArgument("empty dataset: no examples passed the filter");
    seeded_shuffle(data, shuffle_seed);
    std::vector<json> rows;
    std::map<std::string, std::size_t> per_lang;
    for (const auto& ex : data) {
        rows.push_back({{"prompt", ex.prompt}, {"completion", ex.completion}, {"lang", ex.lang}});
        ++per_lang[ex.lang];
    }
    jsonl::write_all(path, rows);
    json m = {{"threshold", meta.threshold},
              {"seed", shuffle_seed},
              {"temperature", meta.temperature},
              {"epochs", meta.epochs},
              {"count", data.size()},
              {"per_lang", per_lang},
              {"bleu", {{"compare", "back_translation_vs_source"}, {"smoothing", bleu::BleuScore::smoothing}}}};
    jsonl::write_text(metadata_path(path), m.dump(2) + "\n");
    return m;
}

inline void write_audit(const std::filesystem::path& path, const std::vector<RoundTrip>& audit) {
    std::vector<json> rows;
    for (const auto& r : audit)
        rows.push_back(r.to_json());
    jsonl::write_all(path, rows);
}

} // namespace xlcode::bootstrap
