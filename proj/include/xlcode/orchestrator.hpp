#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "align.hpp"
#include "bootstrap.hpp"
#include "codeexec.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "jsonl.hpp"
#include "lang.hpp"
#include "llmgateway.hpp"
#include "metrics.hpp"
#include "projector.hpp"
#include "xlingual.hpp"

namespace xlcode::orchestrator {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct GatewaySettings {
    std::optional<fs::path> replay; // transcript to answer from; no network
    std::optional<fs::path> record; // transcript file appended to in live mode
    llm::EndpointConfig endpoint;   // credentials only via environment
};

struct LpSettings {
    fs::path encoder;   // EMBT, multilingual encoder words
    fs::path projector; // PROJ
    fs::path llm_table; // EMBT; empty: the toy model's own table over toy_vocabulary()
    std::map<std::string, fs::path> lexicons; // lang -> word list for zh/ja segmentation
    std::uint64_t toy_seed = 0;
    std::size_t max_new = 64;
    bool export_sequences = true;
};

struct RunConfig {
    std::string mode = "orig"; // orig | cot | bft | lp
    std::string model = "model";
    std::vector<std::string> langs = {"en", "es", "hi", "ja", "ru", "zh"};
    fs::path tasks;
    std::optional<fs::path> translations;
    codeexec::SandboxConfig sandbox;
    std::size_t workers = 4; // shared by the gateway and the sandbox pool
    fs::path out_dir = "runs";
    std::string run_id; // empty: UTC timestamp
    std::uint64_t seed = 0;
    llm::ChatRequest base; // model_name, system prompt, sampling
    GatewaySettings gateway;
    std::optional<fs::path> responses; // evaluate these instead of querying a model
    LpSettings lp;

    void validate() const {
        static const std::set<std::string> kModes = {"orig", "cot", "bft", "lp"};
        if (!kModes.count(mode))
            throw ConfigError("unknown mode \"" + mode + "\" (orig|cot|bft|lp)");
        if (langs.empty())
            throw ConfigError("no languages configured");
        for (const auto& l : langs) {
            if (!is_known_lang(l))
                throw ConfigError("unknown language \"" + l + "\"");
            if (mode == "cot" && l == "en")
                throw ConfigError("mode cot is undefined for English; remove \"en\" from langs");
        }
        if (tasks.empty())
            throw ConfigError("corpus tasks path is required");
        if (workers < 1)
            throw ConfigError("workers must be >= 1");
        if (mode == "lp" && !responses && (lp.encoder.empty() || lp.projector.empty()))
            throw ConfigError("mode lp needs lp.encoder and lp.projector");
        sandbox.validate();
    }

    json to_json() const {
        json j = {{"mode", mode},
                  {"model", model},
                  {"langs", langs},
                  {"seed", seed},
                  {"workers", workers},
                  {"tasks", tasks.string()},
                  {"request", {{"model_name", base.model_name},
                               {"system_prompt", base.system_prompt},
                               {"temperature", base.temperature},
                               {"max_tokens", base.max_tokens}}},
                  {"sandbox", {{"interpreter", sandbox.interpreter_command},
                               {"per_assertion_timeout_ms", sandbox.per_assertion_timeout.count()},
                               {"isolate_network", sandbox.isolate_network}}}};
        if (translations)
            j["translations"] = translations->string();
        if (gateway.replay)
            j["replay"] = gateway.replay->string();
        if (responses)
            j["responses"] = responses->string();
        if (mode == "lp")
            j["lp"] = {{"encoder", lp.encoder.string()}, {"projector", lp.projector.string()},
                       {"llm_table", lp.llm_table.string()}, {"toy_seed", lp.toy_seed}, {"max_new", lp.max_new}};
        return j;
    }
};

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

// Creates out_dir/<id>, suffixing the id if it already exists.
inline fs::path make_run_dir(const fs::path& out_dir, const std::string& run_id) {
    std::string base = run_id.empty() ? utc_timestamp() : run_id;
    fs::create_directories(out_dir);
    for (int i = 0;; ++i) {
        auto dir = out_dir / (i == 0 ? base : base + "-" + std::to_string(i));
        if (fs::create_directory(dir))
            return dir;
    }
}

inline void write_json(const fs::path& path, const json& j) { jsonl::write_text(path, j.dump(2) + "\n"); }

inline llm::Client make_client(const GatewaySettings& g) {
    if (g.replay)
        return llm::Client::replay(llm::Transcript::load(*g.replay));
    auto endpoint = llm::EndpointConfig::from_env(g.endpoint);
    auto recorder = std::make_shared<llm::Transcript>();
    if (g.record)
        recorder->attach_file(*g.record);
    return llm::Client::live(std::make_shared<llm::HttpTransport>(endpoint), recorder);
}

// Fills the request's model name from the endpoint/environment when unset and
// pins the run seed.
inline llm::ChatRequest resolve_base(const llm::ChatRequest& base, const GatewaySettings& g, std::uint64_t seed) {
    auto r = base;
    if (r.system_prompt.empty())
        r.system_prompt = g.endpoint.system_prompt;
    if (r.model_name.empty())
        r.model_name = llm::EndpointConfig::from_env(g.endpoint).model_name;
    if (r.model_name.empty())
        throw ConfigError("no model name: set llm.model_name or XLCODE_MODEL");
    r.seed = static_cast<std::int64_t>(seed);
    return r;
}

struct Failure {
    std::string lang;
    std::string task_id;
    std::string error;
    json to_json() const { return {{"lang", lang}, {"task_id", task_id}, {"error", error}}; }
};

struct CellResult {
    std::string lang;
    std::optional<metrics::MetricsRow> row;
    std::vector<Failure> failures;
    fs::path dir;
};

struct EvalResult {
    fs::path run_dir;
    std::vector<metrics::MetricsRow> rows;
    std::vector<CellResult> cells;
    bool ok() const {
        return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.row.has_value(); });
    }
};

// Gap entries for every (model, mode) group that has an English row.
inline metrics::GapReport available_gaps(const std::vector<metrics::MetricsRow>& rows) {
    std::set<std::pair<std::string, std::string>> with_en;
    for (const auto& r : rows)
        if (r.lang == "en")
            with_en.insert({r.model, r.mode});
    std::vector<metrics::MetricsRow> keep;
    for (const auto& r : rows)
        if (with_en.count({r.model, r.mode}))
            keep.push_back(r);
    return keep.empty() ? metrics::GapReport{} : metrics::gap_vs_english(keep);
}

inline std::string render_run_report(const std::vector<metrics::MetricsRow>& rows, metrics::Format f) {
    auto gaps = available_gaps(rows);
    return metrics::render_report(rows, gaps.entries.empty() ? nullptr : &gaps, f);
}

inline void write_reports(const fs::path& dir, const std::vector<metrics::MetricsRow>& rows) {
    jsonl::write_text(dir / "report.txt", render_run_report(rows, metrics::Format::table));
    jsonl::write_text(dir / "report.csv", render_run_report(rows, metrics::Format::csv));
    jsonl::write_text(dir / "report.json", render_run_report(rows, metrics::Format::json));
}

namespace detail {

struct LpStack {
    align::EmbeddingTable encoder;
    projector::Projector<double> proj;
    align::EmbeddingTable llm;
    std::unique_ptr<xlingual::ToyDecoder> model;
    xlingual::Stack stack;
};

inline std::unique_ptr<LpStack> load_lp_stack(const LpSettings& s) {
    auto st = std::make_unique<LpStack>();
    st->encoder = align::EmbeddingTable::load(s.encoder);
    st->proj = projector::load_projector<double>(s.projector);
    xlingual::ToyConfig tc;
    tc.seed = s.toy_seed;
    if (s.llm_table.empty()) {
        st->model = std::make_unique<xlingual::ToyDecoder>(tc);
        st->llm = st->model->embedding_table(xlingual::toy_vocabulary());
    } else {
        st->llm = align::EmbeddingTable::load(s.llm_table);
        st->model = std::make_unique<xlingual::ToyDecoder>(tc, st->llm);
    }
    st->stack = {&st->encoder, &st->proj, &st->llm, st->model.get(), {}};
    for (const auto& [lang, path] : s.lexicons)
        st->stack.tokenizer.segmenters[lang] =
            std::make_shared<align::LexiconSegmenter>(align::LexiconSegmenter::from_file(path));
    return st;
}

// Responses for one language; prompt-level problems become failures.
inline std::vector<codeexec::ModelResponse> generate(const RunConfig& cfg, const corpus::Corpus& corpus,
                                                     const std::string& lang, const llm::Client* client,
                                                     const llm::ChatRequest& base, LpStack* lp,
                                                     const fs::path& cell_dir, json& extra,
                                                     std::vector<Failure>& failures) {
    const auto mode = codeexec::parse_mode(cfg.mode);
    std::vector<const corpus::Task*> tasks;
    for (const auto& t : corpus.tasks()) {
        if (corpus.has_prompt(t.id, lang))
            tasks.push_back(&t);
        else
            failures.push_back({lang, t.id, "no " + lang + " prompt"});
    }
    std::vector<codeexec::ModelResponse> out;

    if (mode == codeexec::Mode::lp) {
        json cov = json::array();
        if (cfg.lp.export_sequences)
            fs::create_directories(cell_dir / "sequences");
        for (const auto* t : tasks) {
            try {
                const auto& prompt = corpus.prompt(t->id, lang);
                auto seq = xlingual::build_input_embeddings(base.system_prompt, prompt, lang, lp->stack);
                if (cfg.lp.export_sequences)
                    xlingual::save_sequence(cell_dir / "sequences" / (t->id + ".embs"), seq);
                auto r = xlingual::zero_shot_infer(t->id, prompt, lang, lp->stack, base.system_prompt,
                                                   cfg.lp.max_new);
                out.push_back(r.response);
                cov.push_back({{"task_id", t->id}, {"coverage", r.coverage.to_json()}});
            } catch (const std::exception& e) {
                failures.push_back({lang, t->id, e.what()});
            }
        }
        extra["coverage"] = std::move(cov);
        return out;
    }

    std::vector<std::string> prompts;
    for (const auto* t : tasks)
        prompts.push_back(corpus.prompt(t->id, lang));

    std::vector<bool> usable(tasks.size(), true);
    if (mode == codeexec::Mode::cot) {
        std::vector<llm::ChatRequest> bt;
        for (const auto& p : prompts) {
            auto r = base;
            r.user_prompt = llm::render_backtranslation(p, lang);
            bt.push_back(std::move(r));
        }
        auto items = client->batch(bt, cfg.workers);
        json trans = json::array();
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (!items[i].ok() || !items[i].response->text) {
                usable[i] = false;
                failures.push_back({lang, tasks[i]->id,
                                    "back-translation failed: " +
                                        (items[i].ok() ? "no text (" + items[i].response->finish_reason + ")"
                                                       : items[i].error)});
                continue;
            }
            prompts[i] = codeexec::detail::trim(*items[i].response->text);
            trans.push_back({{"task_id", tasks[i]->id}, {"translation", prompts[i]}});
        }
        extra["back_translations"] = std::move(trans);
    }

    std::vector<llm::ChatRequest> reqs;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!usable[i])
            continue;
        auto r = base;
        r.user_prompt = prompts[i];
        reqs.push_back(std::move(r));
        idx.push_back(i);
    }
    auto items = client->batch(reqs, cfg.workers);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto* t = tasks[idx[k]];
        if (!items[k].ok()) {
            failures.push_back({lang, t->id, items[k].error});
            continue;
        }
        // A refusal or filtered completion is a response without code.
        out.push_back({t->id, lang, mode, items[k].response->text.value_or("")});
    }
    return out;
}

} // namespace detail

// Evaluates every configured language for one mode and writes
// <out_dir>/<run>/<mode>/<lang>/{responses,outcomes}.jsonl, metrics.json and
// manifest.json, plus run-level reports.
inline EvalResult run_eval(const RunConfig& cfg) {
    cfg.validate();
    auto corpus = corpus::Corpus::load(cfg.tasks, cfg.translations);
    EvalResult res;
    res.run_dir = make_run_dir(cfg.out_dir, cfg.run_id);

    std::optional<llm::Client> client;
    llm::ChatRequest base = cfg.base;
    if (base.system_prompt.empty())
        base.system_prompt = cfg.gateway.endpoint.system_prompt;
    std::unique_ptr<detail::LpStack> lp;
    std::map<std::pair<std::string, std::string>, std::vector<codeexec::ModelResponse>> given;
    if (cfg.responses) {
        jsonl::for_each(*cfg.responses, [&](const json& j, std::size_t) {
            auto r = codeexec::ModelResponse::from_json(j);
            given[{r.lang, codeexec::to_string(r.mode)}].push_back(std::move(r));
        });
    } else if (cfg.mode == "lp") {
        lp = detail::load_lp_stack(cfg.lp);
    } else {
        client = make_client(cfg.gateway);
        base = resolve_base(cfg.base, cfg.gateway, cfg.seed);
    }

    for (const auto& lang : cfg.langs) {
        CellResult cell;
        cell.lang = lang;
        cell.dir = res.run_dir / cfg.mode / lang;
        fs::create_directories(cell.dir);
        json extra = json::object();
        std::vector<codeexec::ModelResponse> responses;
        if (cfg.responses) {
            responses = given[{lang, cfg.mode}];
            for (const auto& r : responses)
                if (!corpus.has_prompt(r.task_id, "en"))
                    throw FormatError("response for unknown task " + r.task_id);
        } else {
            responses = detail::generate(cfg, corpus, lang, client ? &*client : nullptr, base, lp.get(), cell.dir,
                                         extra, cell.failures);
        }
        std::vector<json> rows;
        for (const auto& r : responses)
            rows.push_back(r.to_json());
        jsonl::write_all(cell.dir / "responses.jsonl", rows);

        std::vector<codeexec::OutcomeRecord> outcomes;
        try {
            outcomes = codeexec::classify_batch(responses, corpus, cfg.sandbox, cfg.workers);
        } catch (const InfrastructureError& e) {
            cell.failures.push_back({lang, "", std::string("sandbox: ") + e.what()});
        }
        rows.clear();
        for (const auto& o : outcomes)
            rows.push_back(o.to_json());
        jsonl::write_all(cell.dir / "outcomes.jsonl", rows);

        if (!outcomes.empty()) {
            auto mrows = metrics::rows_from_outcomes(cfg.model, outcomes);
            cell.row = mrows.front();
            write_json(cell.dir / "metrics.json", cell.row->to_json());
            res.rows.push_back(*cell.row);
        } else {
            cell.failures.push_back({lang, "", "no responses to evaluate"});
        }
        json fails = json::array();
        for (const auto& f : cell.failures)
            fails.push_back(f.to_json());
        json manifest = {{"mode", cfg.mode},         {"lang", lang},
                         {"model", cfg.model},       {"seed", cfg.seed},
                         {"tasks", corpus.size()},   {"responses", responses.size()},
                         {"outcomes", outcomes.size()}, {"failures", fails}};
        manifest.update(extra);
        write_json(cell.dir / "manifest.json", manifest);
        res.cells.push_back(std::move(cell));
    }

    if (!res.rows.empty())
        write_reports(res.run_dir, res.rows);
    json cells = json::array(), failures = json::array();
    for (const auto& c : res.cells) {
        cells.push_back({{"mode", cfg.mode}, {"lang", c.lang}, {"ok", c.row.has_value()},
                         {"failures", c.failures.size()}});
        for (const auto& f : c.failures)
            failures.push_back(f.to_json());
    }
    write_json(res.run_dir / "manifest.json",
               {{"run_id", res.run_dir.filename().string()}, {"config", cfg.to_json()}, {"cells", cells}});
    write_json(res.run_dir / "summary.json", {{"ok", res.ok()}, {"failures", failures}});
    return res;
}

// Recomputes metrics rows from the outcomes persisted under a run directory.
inline std::vector<metrics::MetricsRow> rows_from_run(const fs::path& run_dir) {
    auto manifest = json::parse(jsonl::read_text(run_dir / "manifest.json"));
    const auto model = manifest.at("config").at("model").get<std::string>();
    std::vector<metrics::MetricsRow> rows;
    for (const auto& c : manifest.at("cells")) {
        if (!c.at("ok").get<bool>())
            continue;
        auto path = run_dir / c.at("mode").get<std::string>() / c.at("lang").get<std::string>() / "outcomes.jsonl";
        std::vector<codeexec::OutcomeRecord> outcomes;
        jsonl::for_each(path, [&](const json& j, std::size_t) { outcomes.push_back(codeexec::OutcomeRecord::from_json(j)); });
        for (auto& r : metrics::rows_from_outcomes(model, outcomes))
            rows.push_back(std::move(r));
    }
    if (rows.empty())
        throw InvalidArgument("run " + run_dir.string() + " has no evaluated cells");
    return rows;
}

// ---- bootstrap ----

struct BootstrapRunConfig {
    bootstrap::BootstrapConfig bootstrap;
    GatewaySettings gateway;
    std::string interpreter = "python3";
    fs::path out_dir = "runs";
    std::string run_id;
};

struct BootstrapRunResult {
    fs::path dir;
    std::size_t candidates = 0;
    std::vector<bootstrap::RoundTrip> audit;
    std::map<std::string, std::size_t> accepted; // per language
    json meta;
};

// Algorithm: generate candidates once, round-trip filter per target language,
// write one partition per language and a shuffled merged dataset.
inline BootstrapRunResult run_bootstrap(const BootstrapRunConfig& cfg) {
    auto bc = cfg.bootstrap;
    bc.validate();
    auto client = make_client(cfg.gateway);
    bc.base = resolve_base(bc.base, cfg.gateway, bc.seed);
    bc.base.seed.reset(); // generation requests carry per-attempt seeds instead
    codeexec::PythonToolchain toolchain(cfg.interpreter);

    BootstrapRunResult res;
    res.dir = make_run_dir(cfg.out_dir, cfg.run_id) / "bootstrap";
    fs::create_directories(res.dir / "partitions");
    auto gen = bootstrap::generate_candidates(bc, client, toolchain);
    res.candidates = gen.pairs.size();
    std::vector<json> cand;
    for (const auto& p : gen.pairs)
        cand.push_back({{"q", p.q}, {"a", p.a}});
    jsonl::write_all(res.dir / "candidates.jsonl", cand);

    std::vector<bootstrap::TrainingExample> merged;
    if (bc.include_source_pairs)
        for (const auto& p : gen.pairs)
            merged.push_back({p.q, p.a, "en"});
    for (std::size_t li = 0; li < bc.target_langs.size(); ++li) {
        const auto& lang = bc.target_langs[li];
        auto fr = bootstrap::round_trip_filter(gen.pairs, lang, bc, client);
        res.accepted[lang] = fr.data.size();
        auto part = fr.data;
        bootstrap::seeded_shuffle(part, bc.seed + 1 + li);
        std::vector<json> rows;
        for (const auto& ex : part)
            rows.push_back({{"prompt", ex.prompt}, {"completion", ex.completion}, {"lang", ex.lang}});
        jsonl::write_all(res.dir / "partitions" / (lang + ".jsonl"), rows);
        merged.insert(merged.end(), fr.data.begin(), fr.data.end());
        res.audit.insert(res.audit.end(), fr.audit.begin(), fr.audit.end());
    }
    bootstrap::write_audit(res.dir / "audit.jsonl", res.audit);
    write_json(res.dir / "manifest.json", {{"config", {{"n_attempts", bc.n_attempts},
                                                       {"threshold", bc.threshold},
                                                       {"target_langs", bc.target_langs},
                                                       {"seed", bc.seed},
                                                       {"model_name", bc.base.model_name},
                                                       {"include_source_pairs", bc.include_source_pairs}}},
                                           {"candidates", res.candidates},
                                           {"accepted", res.accepted},
                                           {"warnings", gen.warnings}});
    bootstrap::DatasetMeta meta;
    meta.threshold = bc.threshold;
    meta.seed = bc.seed;
    meta.temperature = bc.base.temperature;
    res.meta = bootstrap::emit_dataset(std::move(merged), res.dir / "dataset.jsonl", bc.seed, meta);
    return res;
}

// ---- projector training ----

struct TrainRunConfig {
    std::optional<fs::path> pairs; // JSONL pairs, or build them from the fields below
    fs::path encoder, llm_table, subwords;
    std::vector<fs::path> texts; // English text files, one sentence per line
    projector::TrainConfig train;
    fs::path out; // PROJ output
};

struct TrainRunResult {
    projector::TrainReport report;
    std::optional<align::Coverage> coverage;
    double ols_mse = std::numeric_limits<double>::quiet_NaN();
};

inline TrainRunResult run_train_projector(const TrainRunConfig& cfg) {
    if (cfg.out.empty())
        throw ConfigError("projector output path is required");
    std::vector<align::TrainingPair> pairs;
    TrainRunResult res;
    if (cfg.pairs) {
        pairs = align::load_pairs(*cfg.pairs);
    } else {
        if (cfg.encoder.empty() || cfg.llm_table.empty() || cfg.subwords.empty() || cfg.texts.empty())
            throw ConfigError("need --pairs, or --encoder, --llm-table, --subwords and --texts");
        auto enc = align::EmbeddingTable::load(cfg.encoder);
        auto llm = align::EmbeddingTable::load(cfg.llm_table);
        auto sub = align::load_subword_map(cfg.subwords);
        std::vector<std::string> texts;
        for (const auto& p : cfg.texts)
            for (auto& line : codeexec::detail::split_lines(jsonl::read_text(p)))
                if (!codeexec::detail::trim(line).empty())
                    texts.push_back(line);
        auto ps = align::build_training_pairs(texts, enc, llm, sub);
        pairs = std::move(ps.pairs);
        res.coverage = ps.coverage;
    }
    auto data = projector::stack_pairs(pairs);
    auto [proj, rep] = projector::train_mse(data, cfg.train);
    projector::save_projector(cfg.out, proj);
    if (cfg.train.activation == projector::Activation::identity) {
        try {
            res.ols_mse = projector::ols_fit(data.X, data.Y).mse;
        } catch (const InvalidArgument&) {
        }
    }
    res.report = std::move(rep);
    json j = res.report.to_json();
    if (res.coverage)
        j["coverage"] = res.coverage->to_json();
    if (!std::isnan(res.ols_mse))
        j["ols_mse"] = res.ols_mse;
    auto report_path = cfg.out;
    report_path += ".report.json";
    write_json(report_path, j);
    return res;
}

// ---- script export ----

inline std::vector<fs::path> export_scripts(const std::vector<codeexec::ModelResponse>& responses,
                                            const corpus::Corpus& corpus, const fs::path& dir,
                                            const std::string& interpreter = "python3") {
    fs::create_directories(dir);
    codeexec::PythonToolchain toolchain(interpreter);
    std::vector<fs::path> out;
    for (const auto& r : responses)
        out.push_back(codeexec::emit_script(dir, r, corpus.task(r.task_id), toolchain));
    return out;
}

} // namespace xlcode::orchestrator
