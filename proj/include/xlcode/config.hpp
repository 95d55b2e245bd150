#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <toml.hpp>

#include "error.hpp"
#include "orchestrator.hpp"

namespace xlcode::config {

namespace fs = std::filesystem;

struct Config {
    fs::path source; // config file, empty when built from defaults
    orchestrator::RunConfig run;
    orchestrator::BootstrapRunConfig bootstrap;
    orchestrator::TrainRunConfig projector;
};

namespace detail {

// Reads typed keys from one section and rejects keys nobody asked for.
class Section {
public:
    Section(const toml::table* t, std::string name, fs::path base)
        : t_(t), name_(std::move(name)), base_(std::move(base)) {}

    const toml::node* get(const std::string& key) {
        seen_.insert(key);
        return t_ ? t_->get(key) : nullptr;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const auto* n = get(key);
        if (!n)
            return;
        if constexpr (std::is_same_v<T, bool>) {
            if (!n->is_boolean())
                fail(key, "a boolean");
            out = **n->as_boolean();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (auto v = n->value<double>())
                out = static_cast<T>(*v);
            else
                fail(key, "a number");
        } else if constexpr (std::is_integral_v<T>) {
            auto v = n->as_integer();
            if (!v)
                fail(key, "an integer");
            if (std::is_unsigned_v<T> && **v < 0)
                fail(key, "a non-negative integer");
            out = static_cast<T>(**v);
        } else {
            auto v = n->as_string();
            if (!v)
                fail(key, "a string");
            out = **v;
        }
    }

    void read_path(const std::string& key, fs::path& out) {
        std::string s;
        read(key, s);
        if (!s.empty())
            out = resolve(s);
    }

    void read_path(const std::string& key, std::optional<fs::path>& out) {
        fs::path p;
        read_path(key, p);
        if (!p.empty())
            out = p;
    }

    void read_strings(const std::string& key, std::vector<std::string>& out) {
        const auto* n = get(key);
        if (!n)
            return;
        auto arr = n->as_array();
        if (!arr)
            fail(key, "an array of strings");
        out.clear();
        for (const auto& e : *arr) {
            auto s = e.as_string();
            if (!s)
                fail(key, "an array of strings");
            out.push_back(**s);
        }
    }

    void read_paths(const std::string& key, std::vector<fs::path>& out) {
        std::vector<std::string> v;
        read_strings(key, v);
        if (!v.empty())
            out.clear();
        for (const auto& s : v)
            out.push_back(resolve(s));
    }

    const toml::table* subtable(const std::string& key) {
        const auto* n = get(key);
        if (!n)
            return nullptr;
        if (!n->is_table())
            fail(key, "a table");
        return n->as_table();
    }

    void finish() const {
        if (!t_)
            return;
        for (const auto& [k, v] : *t_)
            if (!seen_.count(std::string(k.str())))
                throw ConfigError("unknown key " + name_ + "." + std::string(k.str()));
    }

    fs::path resolve(const std::string& s) const {
        fs::path p(s);
        return p.is_absolute() || base_.empty() ? p : base_ / p;
    }

private:
    [[noreturn]] void fail(const std::string& key, const char* what) const {
        throw ConfigError(name_ + "." + key + " must be " + what);
    }

    const toml::table* t_;
    std::string name_;
    fs::path base_;
    std::set<std::string> seen_;
};

inline const toml::table* section(const toml::table& root, const char* name) {
    auto n = root.get(name);
    if (n && !n->is_table())
        throw ConfigError(std::string("[") + name + "] must be a table");
    return n ? n->as_table() : nullptr;
}

} // namespace detail

// Relative paths resolve against `base` (the config file's directory).
inline Config from_toml(const toml::table& root, const fs::path& base = {}) {
    static const std::set<std::string> kSections = {"run", "corpus", "sandbox", "llm", "lp", "bootstrap", "projector"};
    for (const auto& [k, v] : root)
        if (!kSections.count(std::string(k.str())))
            throw ConfigError("unknown section [" + std::string(k.str()) + "]");

    Config c;
    auto& r = c.run;
    {
        detail::Section s(detail::section(root, "run"), "run", base);
        s.read("mode", r.mode);
        s.read("model", r.model);
        s.read_strings("langs", r.langs);
        s.read_path("out_dir", r.out_dir);
        s.read("run_id", r.run_id);
        s.read("seed", r.seed);
        s.read("workers", r.workers);
        s.read_path("responses", r.responses);
        s.finish();
    }
    {
        detail::Section s(detail::section(root, "corpus"), "corpus", base);
        s.read_path("tasks", r.tasks);
        s.read_path("translations", r.translations);
        s.finish();
    }
    {
        detail::Section s(detail::section(root, "sandbox"), "sandbox", base);
        auto& sb = r.sandbox;
        s.read("interpreter", sb.interpreter_command);
        std::int64_t ms = sb.per_assertion_timeout.count();
        s.read("timeout_ms", ms);
        sb.per_assertion_timeout = std::chrono::milliseconds(ms);
        s.read("max_output_bytes", sb.max_output_bytes);
        s.read_path("work_root", sb.work_root);
        s.read("isolate_network", sb.isolate_network);
        std::size_t mb = 0;
        s.read("address_space_mb", mb);
        if (mb)
            sb.address_space_bytes = mb << 20;
        s.finish();
    }
    {
        detail::Section s(detail::section(root, "llm"), "llm", base);
        auto& ep = r.gateway.endpoint;
        if (s.get("api_key"))
            throw ConfigError("llm.api_key is not accepted in config files; set XLCODE_API_KEY");
        s.read("base_url", ep.base_url);
        s.read("model_name", r.base.model_name);
        s.read("system_prompt", r.base.system_prompt);
        s.read("temperature", r.base.temperature);
        s.read("max_tokens", r.base.max_tokens);
        std::int64_t secs = ep.timeout.count();
        s.read("timeout_s", secs);
        ep.timeout = std::chrono::seconds(secs);
        s.read("max_attempts", ep.retry.max_attempts);
        s.read_path("replay", r.gateway.replay);
        s.read_path("record", r.gateway.record);
        s.finish();
        ep.model_name = r.base.model_name;
        r.base.validate();
    }
    {
        detail::Section s(detail::section(root, "lp"), "lp", base);
        s.read_path("encoder", r.lp.encoder);
        s.read_path("projector", r.lp.projector);
        s.read_path("llm_table", r.lp.llm_table);
        s.read("toy_seed", r.lp.toy_seed);
        s.read("max_new", r.lp.max_new);
        s.read("export_sequences", r.lp.export_sequences);
        if (const auto* lex = s.subtable("lexicons")) {
            for (const auto& [lang, v] : *lex) {
                auto p = v.as_string();
                if (!p)
                    throw ConfigError("lp.lexicons." + std::string(lang.str()) + " must be a path string");
                r.lp.lexicons[std::string(lang.str())] = s.resolve(**p);
            }
        }
        s.finish();
    }
    {
        detail::Section s(detail::section(root, "bootstrap"), "bootstrap", base);
        auto& b = c.bootstrap.bootstrap;
        s.read("n_attempts", b.n_attempts);
        s.read("threshold", b.threshold);
        s.read_strings("target_langs", b.target_langs);
        s.read("gen_prompt", b.gen_prompt);
        s.read("include_source_pairs", b.include_source_pairs);
        s.finish();
        b.seed = r.seed;
        b.max_in_flight = r.workers;
        b.base = r.base;
        c.bootstrap.gateway = r.gateway;
        c.bootstrap.interpreter = r.sandbox.interpreter_command;
        c.bootstrap.out_dir = r.out_dir;
        c.bootstrap.run_id = r.run_id;
    }
    {
        detail::Section s(detail::section(root, "projector"), "projector", base);
        auto& p = c.projector;
        s.read_path("pairs", p.pairs);
        s.read_path("encoder", p.encoder);
        s.read_path("llm_table", p.llm_table);
        s.read_path("subwords", p.subwords);
        s.read_paths("texts", p.texts);
        s.read_path("out", p.out);
        s.read("epochs", p.train.epochs);
        s.read("learning_rate", p.train.learning_rate);
        s.read("batch_size", p.train.batch_size);
        s.read("seed", p.train.seed);
        s.read("hidden", p.train.hidden);
        std::string opt = p.train.optimizer == projector::Optimizer::sgd ? "sgd" : "adam";
        s.read("optimizer", opt);
        p.train.optimizer = projector::parse_optimizer(opt);
        std::string act = projector::to_string(p.train.activation);
        s.read("activation", act);
        p.train.activation = projector::parse_activation(act);
        s.finish();
    }
    return c;
}

inline Config parse(std::string_view text, const fs::path& base = {}) {
    try {
        return from_toml(toml::parse(text), base);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(os.str());
    }
}

inline Config load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        auto c = parse(ss.str(), fs::absolute(path).parent_path());
        c.source = path;
        return c;
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace xlcode::config
