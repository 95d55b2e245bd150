#pragma once

#include <stdlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "jsonl.hpp"
#include "parallel.hpp"
#include "process.hpp"

namespace xlcode::codeexec {

using json = nlohmann::json;

enum class Mode { orig, cot, bft, lp };

inline std::string to_string(Mode m) {
    switch (m) {
    case Mode::orig: return "orig";
    case Mode::cot: return "cot";
    case Mode::bft: return "bft";
    case Mode::lp: return "lp";
    }
    return "?";
}

inline Mode parse_mode(std::string_view s) {
    if (s == "orig") return Mode::orig;
    if (s == "cot") return Mode::cot;
    if (s == "bft") return Mode::bft;
    if (s == "lp") return Mode::lp;
    throw InvalidArgument("unknown mode \"" + std::string(s) + "\" (expected orig, cot, bft or lp)");
}

struct ModelResponse {
    std::string task_id;
    std::string lang;
    Mode mode = Mode::orig;
    std::string raw_text;

    json to_json() const {
        return {{"task_id", task_id}, {"lang", lang}, {"mode", to_string(mode)}, {"raw_text", raw_text}};
    }
    static ModelResponse from_json(const json& j) {
        return {j.at("task_id").get<std::string>(), j.at("lang").get<std::string>(),
                parse_mode(j.at("mode").get<std::string>()), j.at("raw_text").get<std::string>()};
    }
};

struct ExtractedProgram {
    std::string code;
    std::vector<std::string> function_names; // top-level, definition order
    bool parses = false;
    bool complete = false; // non-empty && parses && has a function
    std::string rule;      // which extraction rule fired: tagged, untagged, unfenced, none
};

struct RewrittenSuite {
    std::string program;
    std::array<std::string, 3> assertions;
    std::string entry_point;     // function now called by the assertions
    std::string original_callee; // name the assertions called before rewriting
};

enum class OutcomeClass { syntax_error, logical_failure, all_passed };

inline std::string to_string(OutcomeClass c) {
    switch (c) {
    case OutcomeClass::syntax_error: return "SyntaxError";
    case OutcomeClass::logical_failure: return "LogicalFailure";
    case OutcomeClass::all_passed: return "AllPassed";
    }
    return "?";
}

inline OutcomeClass parse_outcome_class(std::string_view s) {
    if (s == "SyntaxError") return OutcomeClass::syntax_error;
    if (s == "LogicalFailure") return OutcomeClass::logical_failure;
    if (s == "AllPassed") return OutcomeClass::all_passed;
    throw FormatError("unknown outcome class \"" + std::string(s) + "\"");
}

enum class AssertionResult { pass, fail, error, timeout, not_run };

inline std::string to_string(AssertionResult r) {
    switch (r) {
    case AssertionResult::pass: return "pass";
    case AssertionResult::fail: return "fail";
    case AssertionResult::error: return "error";
    case AssertionResult::timeout: return "timeout";
    case AssertionResult::not_run: return "not_run";
    }
    return "?";
}

inline AssertionResult parse_assertion_result(std::string_view s) {
    if (s == "pass") return AssertionResult::pass;
    if (s == "fail") return AssertionResult::fail;
    if (s == "error") return AssertionResult::error;
    if (s == "timeout") return AssertionResult::timeout;
    if (s == "not_run") return AssertionResult::not_run;
    throw FormatError("unknown assertion result \"" + std::string(s) + "\"");
}

using PerAssertion = std::array<AssertionResult, 3>;
inline constexpr PerAssertion kNotRun = {AssertionResult::not_run, AssertionResult::not_run,
                                         AssertionResult::not_run};

struct ExecutionOutcome {
    OutcomeClass cls = OutcomeClass::logical_failure;
    PerAssertion per_assertion = kNotRun;
    std::array<double, 3> wall_times{0, 0, 0};
};

// Class from per-assertion results, given that the program parsed.
inline OutcomeClass classify_results(const PerAssertion& r) {
    for (auto a : r)
        if (a != AssertionResult::pass)
            return OutcomeClass::logical_failure;
    return OutcomeClass::all_passed;
}

struct SandboxConfig {
    std::string interpreter_command = "python3";
    std::chrono::milliseconds per_assertion_timeout{10000};
    std::size_t max_output_bytes = 64 * 1024;
    std::filesystem::path work_root; // empty: system temp directory
    bool isolate_network = true;     // best effort: falls back when unshare is refused
    std::optional<std::size_t> address_space_bytes;

    void validate() const {
        if (per_assertion_timeout.count() <= 0)
            throw ConfigError("sandbox timeout must be > 0");
        if (!process::find_executable(interpreter_command))
            throw ConfigError("interpreter not found: " + interpreter_command);
    }
};

// ---------------------------------------------------------------------------
// Python toolchain helpers (parse-only checks run in the target interpreter)

namespace detail {

inline constexpr std::string_view kAnalyzeScript = R"PY(
import ast, json, sys
req = json.loads(sys.stdin.read())
def parses(src):
    try:
        compile(src, "solution.py", "exec", dont_inherit=True)
        return True
    except (SyntaxError, ValueError, MemoryError, RecursionError):
        return False
if req["op"] == "analyze":
    src = req["source"]
    ok = parses(src)
    names = []
    if ok:
        for node in ast.parse(src).body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                names.append(node.name)
    print(json.dumps({"parses": ok, "functions": names}))
else:
    lines = req["lines"]
    best = 0
    for k in range(len(lines), 0, -1):
        if parses("\n".join(lines[:k])):
            best = k
            break
    print(json.dumps({"length": best}))
)PY";

inline constexpr std::string_view kHarnessScript = R"PY(
import sys, traceback
with open(sys.argv[1], encoding="utf-8") as f:
    program = f.read()
with open(sys.argv[2], encoding="utf-8") as f:
    check = f.read()
scope = {"__name__": "__main__"}
try:
    exec(compile(program, "solution.py", "exec", dont_inherit=True), scope)
except BaseException:
    traceback.print_exc()
    sys.exit(2)
try:
    exec(compile(check, "assertion.py", "exec", dont_inherit=True), scope)
except AssertionError:
    traceback.print_exc()
    sys.exit(1)
except BaseException:
    traceback.print_exc()
    sys.exit(2)
sys.exit(0)
)PY";

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
    for (auto& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (true) {
        auto nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        lines.push_back(std::move(line));
        if (nl == std::string::npos)
            break;
        start = nl + 1;
    }
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        out += lines[i];
        if (i + 1 < to)
            out += '\n';
    }
    return out;
}

inline bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// "def name(" or "async def name(" at the given indentation prefix.
inline bool is_def_line(std::string_view line, bool top_level_only) {
    std::size_t i = 0;
    if (!top_level_only)
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
            ++i;
    auto rest = line.substr(i);
    if (rest.substr(0, 6) == "async ") {
        rest.remove_prefix(6);
        while (!rest.empty() && rest.front() == ' ')
            rest.remove_prefix(1);
    }
    if (rest.substr(0, 4) != "def ")
        return false;
    auto name = rest.find_first_not_of(' ', 4);
    return name != std::string_view::npos && is_ident_start(rest[name]);
}

struct Fence {
    std::string tag;
    std::string body;
};

// ``` fences; an unterminated fence runs to the end of the text.
inline std::vector<Fence> find_fences(const std::vector<std::string>& lines) {
    std::vector<Fence> fences;
    std::optional<Fence> open;
    std::vector<std::string> body;
    for (const auto& raw : lines) {
        auto t = trim(raw);
        if (t.rfind("```", 0) == 0) {
            if (!open) {
                open = Fence{trim(t.substr(3)), {}};
                body.clear();
            } else {
                open->body = join_lines(body, 0, body.size());
                fences.push_back(std::move(*open));
                open.reset();
            }
            continue;
        }
        if (open)
            body.push_back(raw);
    }
    if (open) {
        open->body = join_lines(body, 0, body.size());
        fences.push_back(std::move(*open));
    }
    return fences;
}

inline const std::set<std::string>& python_builtins() {
    static const std::set<std::string> names = {
        "abs", "all", "any", "bin", "bool", "bytes", "callable", "chr", "dict", "divmod",
        "enumerate", "filter", "float", "format", "frozenset", "getattr", "hasattr", "hash",
        "hex", "int", "isinstance", "issubclass", "iter", "len", "list", "map", "max", "min",
        "next", "oct", "ord", "pow", "range", "repr", "reversed", "round", "set", "sorted",
        "str", "sum", "tuple", "type", "zip", "isclose", "math", "not", "and", "or", "in",
        "is", "lambda", "assert", "print", "id"};
    return names;
}

// Identifiers immediately followed by '(' and not preceded by '.', in order.
inline std::vector<std::pair<std::size_t, std::string>> called_names(std::string_view src) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::size_t i = 0;
    char quote = 0;
    while (i < src.size()) {
        char c = src[i];
        if (quote) {
            if (c == '\\')
                i += 2;
            else {
                if (c == quote)
                    quote = 0;
                ++i;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
            ++i;
            continue;
        }
        if (is_ident_start(c) && (i == 0 || !is_ident_char(src[i - 1]))) {
            std::size_t j = i;
            while (j < src.size() && is_ident_char(src[j]))
                ++j;
            std::size_t k = j;
            while (k < src.size() && src[k] == ' ')
                ++k;
            std::size_t p = i;
            while (p > 0 && src[p - 1] == ' ')
                --p;
            bool after_dot = p > 0 && src[p - 1] == '.';
            if (k < src.size() && src[k] == '(' && !after_dot)
                out.emplace_back(i, std::string(src.substr(i, j - i)));
            i = j;
            continue;
        }
        ++i;
    }
    return out;
}

} // namespace detail

class PythonToolchain {
public:
    explicit PythonToolchain(std::string interpreter = "python3",
                             std::chrono::milliseconds timeout = std::chrono::milliseconds(20000))
        : interpreter_(std::move(interpreter)), timeout_(timeout) {}

    const std::string& interpreter() const { return interpreter_; }

    struct Analysis {
        bool parses = false;
        std::vector<std::string> functions;
    };

    Analysis analyze(const std::string& source) const {
        auto r = call({{"op", "analyze"}, {"source", source}});
        return {r.at("parses").get<bool>(), r.at("functions").get<std::vector<std::string>>()};
    }

    bool parses(const std::string& source) const { return analyze(source).parses; }

    // Largest k such that lines[0..k) parses; 0 when no non-empty prefix does.
    std::size_t longest_parseable_prefix(const std::vector<std::string>& lines) const {
        if (lines.empty())
            return 0;
        return call({{"op", "prefix"}, {"lines", lines}}).at("length").get<std::size_t>();
    }

private:
    json call(const json& request) const {
        process::RunOptions opts;
        opts.timeout = timeout_;
        opts.stdin_data = request.dump();
        opts.max_output_bytes = 1 << 20;
        auto r = process::run({interpreter_, "-I", "-c", std::string(detail::kAnalyzeScript)}, opts);
        if (r.timed_out || r.signaled || r.exit_code != 0)
            throw InfrastructureError("python analysis helper failed: " + r.stderr_data);
        try {
            return json::parse(r.stdout_data);
        } catch (const json::exception& e) {
            throw InfrastructureError(std::string("python analysis helper output: ") + e.what());
        }
    }

    std::string interpreter_;
    std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------
// Extraction

inline bool is_target_tag(const std::string& tag, const std::string& target_lang) {
    auto t = detail::lower(tag);
    auto sp = t.find_first_of(" \t{");
    if (sp != std::string::npos)
        t = t.substr(0, sp);
    if (target_lang == "python")
        return t == "python" || t == "py" || t == "python3";
    return t == target_lang;
}

// Priority: tagged fences, then untagged fences holding a def, then (no
// fences at all) the longest parseable run of lines starting at the first def.
inline ExtractedProgram extract_code(const ModelResponse& response, const PythonToolchain& toolchain,
                                     const std::string& target_lang = "python") {
    ExtractedProgram out;
    auto lines = detail::split_lines(response.raw_text);
    auto fences = detail::find_fences(lines);

    std::vector<std::string> picked;
    if (!fences.empty()) {
        for (const auto& f : fences)
            if (is_target_tag(f.tag, target_lang))
                picked.push_back(f.body);
        if (!picked.empty()) {
            out.rule = "tagged";
        } else {
            for (const auto& f : fences) {
                if (!f.tag.empty())
                    continue;
                bool has_def = false;
                for (const auto& l : detail::split_lines(f.body))
                    has_def = has_def || detail::is_def_line(l, false);
                if (has_def)
                    picked.push_back(f.body);
            }
            if (!picked.empty())
                out.rule = "untagged";
        }
        for (std::size_t i = 0; i < picked.size(); ++i) {
            out.code += picked[i];
            if (i + 1 < picked.size())
                out.code += "\n";
        }
    } else {
        std::optional<std::size_t> first_def;
        for (std::size_t i = 0; i < lines.size() && !first_def; ++i)
            if (detail::is_def_line(lines[i], true))
                first_def = i;
        if (first_def) {
            out.rule = "unfenced";
            std::vector<std::string> tail(lines.begin() + static_cast<std::ptrdiff_t>(*first_def), lines.end());
            auto k = toolchain.longest_parseable_prefix(tail);
            // Nothing parses: keep the whole tail so the response scores as a syntax error.
            out.code = detail::join_lines(tail, 0, k > 0 ? k : tail.size());
        }
    }
    if (out.rule.empty())
        out.rule = "none";

    while (!out.code.empty() && (out.code.back() == '\n' || out.code.back() == ' '))
        out.code.pop_back();
    if (detail::trim(out.code).empty()) {
        out.code.clear();
        return out;
    }
    auto a = toolchain.analyze(out.code);
    out.parses = a.parses;
    out.function_names = std::move(a.functions);
    out.complete = out.parses && !out.function_names.empty();
    return out;
}

// ---------------------------------------------------------------------------
// Assertion rewriting

// The function the MBPP assertions exercise: first non-builtin call in the first assertion.
inline std::optional<std::string> assertion_callee(const std::array<std::string, 3>& assertions) {
    for (const auto& a : assertions) {
        for (const auto& [pos, name] : detail::called_names(a))
            if (!detail::python_builtins().count(name))
                return name;
    }
    return std::nullopt;
}

inline std::string replace_callee(const std::string& src, const std::string& from, const std::string& to) {
    std::string out;
    std::size_t last = 0;
    for (const auto& [pos, name] : detail::called_names(src)) {
        if (name != from)
            continue;
        out.append(src, last, pos - last);
        out += to;
        last = pos + name.size();
    }
    out.append(src, last, std::string::npos);
    return out;
}

inline RewrittenSuite rewrite_assertions(const ExtractedProgram& program, const corpus::Task& task) {
    if (!program.complete)
        throw InvalidArgument("nothing to rewrite: program is incomplete");
    RewrittenSuite suite;
    suite.program = program.code;
    suite.assertions = task.assertions;
    auto callee = assertion_callee(task.assertions);
    suite.original_callee = callee.value_or("");
    const auto& names = program.function_names;
    if (callee && std::find(names.begin(), names.end(), *callee) != names.end()) {
        suite.entry_point = *callee;
        return suite;
    }
    suite.entry_point = names.back();
    if (callee)
        for (auto& a : suite.assertions)
            a = replace_callee(a, *callee, suite.entry_point);
    return suite;
}

// ---------------------------------------------------------------------------
// Sandboxed execution

namespace detail {

class TempDir {
public:
    explicit TempDir(const std::filesystem::path& root) {
        auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
        std::filesystem::create_directories(base);
        std::string templ = (base / "xlcode-XXXXXX").string();
        if (!::mkdtemp(templ.data()))
            throw InfrastructureError("cannot create sandbox directory under " + base.string());
        path_ = templ;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace detail

inline ExecutionOutcome execute_sandboxed(const RewrittenSuite& suite, const SandboxConfig& cfg) {
    cfg.validate();
    ExecutionOutcome out;
    detail::TempDir dir(cfg.work_root);

    process::RunOptions base;
    base.timeout = cfg.per_assertion_timeout;
    base.max_output_bytes = cfg.max_output_bytes;
    base.isolate_network = cfg.isolate_network;
    if (cfg.address_space_bytes)
        base.address_space_bytes = static_cast<rlim_t>(*cfg.address_space_bytes);

    {
        process::RunOptions opts = base;
        opts.working_dir = dir.path();
        opts.stdin_data = json{{"op", "analyze"}, {"source", suite.program}}.dump();
        auto r = process::run({cfg.interpreter_command, "-I", "-c", std::string(detail::kAnalyzeScript)}, opts);
        if (r.timed_out || r.signaled || r.exit_code != 0)
            throw InfrastructureError("parse check failed to run: " + r.stderr_data);
        if (!json::parse(r.stdout_data).at("parses").get<bool>()) {
            out.cls = OutcomeClass::syntax_error;
            out.per_assertion = kNotRun;
            return out;
        }
    }

    jsonl::write_text(dir.path() / "harness.py", std::string(detail::kHarnessScript));
    for (std::size_t i = 0; i < 3; ++i) {
        auto run_dir = dir.path() / ("run" + std::to_string(i));
        std::filesystem::create_directories(run_dir);
        jsonl::write_text(run_dir / "solution.py", suite.program + "\n");
        jsonl::write_text(run_dir / "assertion.py", suite.assertions[i] + "\n");
        process::RunOptions opts = base;
        opts.working_dir = run_dir;
        auto r = process::run({cfg.interpreter_command, "-I", (dir.path() / "harness.py").string(),
                               "solution.py", "assertion.py"},
                              opts);
        out.wall_times[i] = r.wall_seconds;
        if (r.timed_out)
            out.per_assertion[i] = AssertionResult::timeout;
        else if (r.signaled)
            out.per_assertion[i] = AssertionResult::error;
        else if (r.exit_code == 0)
            out.per_assertion[i] = AssertionResult::pass;
        else if (r.exit_code == 1)
            out.per_assertion[i] = AssertionResult::fail;
        else
            out.per_assertion[i] = AssertionResult::error;
    }
    out.cls = classify_results(out.per_assertion);
    return out;
}

struct Classified {
    ExtractedProgram program;
    ExecutionOutcome outcome;
    std::optional<std::string> entry_point;
};

// No code at all is a logical failure; code that does not parse is a syntax error.
inline Classified classify_response(const ModelResponse& response, const corpus::Task& task,
                                    const SandboxConfig& cfg, const PythonToolchain& toolchain) {
    Classified c;
    c.program = extract_code(response, toolchain);
    if (!c.program.code.empty() && !c.program.parses) {
        c.outcome.cls = OutcomeClass::syntax_error;
        return c;
    }
    if (!c.program.complete) {
        c.outcome.cls = OutcomeClass::logical_failure;
        return c;
    }
    auto suite = rewrite_assertions(c.program, task);
    c.entry_point = suite.entry_point;
    c.outcome = execute_sandboxed(suite, cfg);
    return c;
}

// ---------------------------------------------------------------------------
// Outcome records

struct OutcomeRecord {
    std::string task_id;
    std::string lang;
    Mode mode = Mode::orig;
    OutcomeClass cls = OutcomeClass::logical_failure;
    PerAssertion per_assertion = kNotRun;
    bool complete = false;
    std::optional<std::string> entry_point;

    json to_json() const {
        json pa = json::array();
        for (auto r : per_assertion)
            pa.push_back(to_string(r));
        return {{"task_id", task_id},
                {"lang", lang},
                {"mode", to_string(mode)},
                {"class", to_string(cls)},
                {"per_assertion", pa},
                {"complete", complete},
                {"entry_point", entry_point ? json(*entry_point) : json(nullptr)}};
    }

    static OutcomeRecord from_json(const json& j) {
        OutcomeRecord r;
        r.task_id = j.at("task_id").get<std::string>();
        r.lang = j.at("lang").get<std::string>();
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.cls = parse_outcome_class(j.at("class").get<std::string>());
        const auto& pa = j.at("per_assertion");
        if (!pa.is_array() || pa.size() != 3)
            throw FormatError("per_assertion must have 3 entries");
        for (std::size_t i = 0; i < 3; ++i)
            r.per_assertion[i] = parse_assertion_result(pa[i].get<std::string>());
        r.complete = j.at("complete").get<bool>();
        if (j.contains("entry_point") && !j.at("entry_point").is_null())
            r.entry_point = j.at("entry_point").get<std::string>();
        return r;
    }
};

inline bool record_order(const OutcomeRecord& a, const OutcomeRecord& b) {
    return std::make_tuple(a.task_id, lang_rank(a.lang), a.lang, static_cast<int>(a.mode)) <
           std::make_tuple(b.task_id, lang_rank(b.lang), b.lang, static_cast<int>(b.mode));
}

// Classifies every response on a bounded worker pool; results are sorted by
// (task_id, lang, mode) regardless of completion order.
inline std::vector<OutcomeRecord> classify_batch(const std::vector<ModelResponse>& responses,
                                                 const corpus::Corpus& corpus, const SandboxConfig& cfg,
                                                 std::size_t workers) {
    cfg.validate();
    PythonToolchain toolchain(cfg.interpreter_command);
    std::vector<OutcomeRecord> out(responses.size());
    parallel_for(responses.size(), workers, [&](std::size_t i) {
        const auto& resp = responses[i];
        auto c = classify_response(resp, corpus.task(resp.task_id), cfg, toolchain);
        out[i] = {resp.task_id, resp.lang, resp.mode, c.outcome.cls, c.outcome.per_assertion,
                  c.program.complete, c.entry_point};
    });
    std::sort(out.begin(), out.end(), record_order);
    return out;
}

// One bash script per sample: program followed by the (rewritten) assertions.
inline std::string render_script(const std::string& interpreter, const std::string& program,
                                 const std::array<std::string, 3>& assertions) {
    std::string delim = "XLCODE_EOF";
    while (program.find(delim) != std::string::npos)
        delim += "_";
    std::string s = "#!/usr/bin/env bash\n" + interpreter + " - <<'" + delim + "'\n" + program + "\n\n";
    for (const auto& a : assertions)
        s += a + "\n";
    s += delim + "\n";
    return s;
}

inline std::filesystem::path emit_script(const std::filesystem::path& dir, const ModelResponse& resp,
                                         const corpus::Task& task, const PythonToolchain& toolchain) {
    auto program = extract_code(resp, toolchain);
    std::array<std::string, 3> assertions = task.assertions;
    if (program.complete)
        assertions = rewrite_assertions(program, task).assertions;
    auto path = dir / (resp.task_id + "_" + resp.lang + "_" + to_string(resp.mode) + ".sh");
    jsonl::write_text(path, render_script(toolchain.interpreter(), program.code, assertions));
    std::filesystem::permissions(path, std::filesystem::perms::owner_exec | std::filesystem::perms::group_exec |
                                           std::filesystem::perms::others_exec,
                                 std::filesystem::perm_options::add);
    return path;
}

} // namespace xlcode::codeexec
