#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <xlcode/config.hpp>
#include <xlcode/orchestrator.hpp>

namespace fs = std::filesystem;
using namespace xlcode;

namespace {

constexpr int kExitError = 1;
constexpr int kExitIncomplete = 2;

// Flag values that override the config file when given.
struct Overrides {
    std::string config;
    std::optional<std::string> mode, model, run_id, interpreter, model_name;
    std::optional<std::vector<std::string>> langs;
    std::optional<std::string> tasks, translations, replay, record, responses, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<double> temperature;

    void add_common(CLI::App* sub) {
        sub->add_option("-c,--config", config, "TOML config file")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory for runs");
        sub->add_option("--run-id", run_id, "Run directory name (default: UTC timestamp)");
        sub->add_option("--seed", seed, "Run seed");
        sub->add_option("--workers", workers, "Parallel requests and sandboxes");
    }
    void add_gateway(CLI::App* sub) {
        sub->add_option("--replay", replay, "Answer requests from a recorded transcript");
        sub->add_option("--record", record, "Append live exchanges to this transcript");
        sub->add_option("--model-name", model_name, "Model name sent to the endpoint");
        sub->add_option("--temperature", temperature, "Sampling temperature");
    }

    config::Config load() const {
        auto c = config.empty() ? config::Config{} : config::load(config);
        auto& r = c.run;
        if (mode) r.mode = *mode;
        if (model) r.model = *model;
        if (langs) r.langs = *langs;
        if (tasks) r.tasks = *tasks;
        if (translations) r.translations = fs::path(*translations);
        if (replay) r.gateway.replay = fs::path(*replay);
        if (record) r.gateway.record = fs::path(*record);
        if (responses) r.responses = fs::path(*responses);
        if (out_dir) r.out_dir = *out_dir;
        if (run_id) r.run_id = *run_id;
        if (seed) r.seed = *seed;
        if (workers) r.workers = *workers;
        if (interpreter) r.sandbox.interpreter_command = *interpreter;
        if (model_name) r.base.model_name = *model_name;
        if (temperature) r.base.temperature = *temperature;

        auto& b = c.bootstrap;
        b.gateway = r.gateway;
        b.out_dir = r.out_dir;
        b.run_id = r.run_id;
        b.interpreter = r.sandbox.interpreter_command;
        b.bootstrap.seed = r.seed;
        b.bootstrap.max_in_flight = r.workers;
        b.bootstrap.base = r.base;
        return c;
    }
};

int cmd_evaluate(const Overrides& o) {
    auto c = o.load();
    auto res = orchestrator::run_eval(c.run);
    if (!res.rows.empty())
        std::cout << orchestrator::render_run_report(res.rows, metrics::Format::table);
    for (const auto& cell : res.cells)
        for (const auto& f : cell.failures)
            std::cerr << "warning: " << f.lang << (f.task_id.empty() ? "" : "/" + f.task_id) << ": " << f.error
                      << "\n";
    std::cerr << "run written to " << res.run_dir.string() << "\n";
    return res.ok() ? 0 : kExitIncomplete;
}

int cmd_bootstrap(const Overrides& o, std::optional<double> threshold, std::optional<int> attempts,
                  std::optional<std::vector<std::string>> targets) {
    auto c = o.load();
    auto& b = c.bootstrap.bootstrap;
    if (threshold) b.threshold = *threshold;
    if (attempts) b.n_attempts = *attempts;
    if (targets) b.target_langs = *targets;
    auto res = orchestrator::run_bootstrap(c.bootstrap);
    std::cout << "candidates: " << res.candidates << "\n";
    for (const auto& [lang, n] : res.accepted)
        std::cout << "accepted[" << lang << "]: " << n << "\n";
    std::cout << "dataset: " << (res.dir / "dataset.jsonl").string() << "\n";
    return 0;
}

struct TrainFlags {
    std::optional<std::string> pairs, encoder, llm_table, subwords, out, activation, optimizer;
    std::optional<std::vector<std::string>> texts;
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch;
    std::optional<std::uint32_t> hidden;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const Overrides& o, const TrainFlags& f) {
    auto c = o.load();
    auto& p = c.projector;
    if (f.pairs) p.pairs = fs::path(*f.pairs);
    if (f.encoder) p.encoder = *f.encoder;
    if (f.llm_table) p.llm_table = *f.llm_table;
    if (f.subwords) p.subwords = *f.subwords;
    if (f.texts) p.texts.assign(f.texts->begin(), f.texts->end());
    if (f.out) p.out = *f.out;
    if (f.epochs) p.train.epochs = *f.epochs;
    if (f.lr) p.train.learning_rate = *f.lr;
    if (f.batch) p.train.batch_size = *f.batch;
    if (f.hidden) p.train.hidden = *f.hidden;
    if (f.seed) p.train.seed = *f.seed;
    if (f.activation) p.train.activation = projector::parse_activation(*f.activation);
    if (f.optimizer) p.train.optimizer = projector::parse_optimizer(*f.optimizer);
    auto res = orchestrator::run_train_projector(p);
    if (res.coverage)
        std::cout << "coverage: " << res.coverage->to_json().dump() << "\n";
    std::cout << "final_mse: " << res.report.final_mse << "\n";
    if (!std::isnan(res.ols_mse))
        std::cout << "ols_mse: " << res.ols_mse << "\n";
    std::cout << "wall_seconds: " << res.report.wall_seconds << "\nprojector: " << p.out.string() << "\n";
    return 0;
}

struct InferFlags {
    std::optional<std::string> encoder, projector, llm_table, prompt_file, embs, lexicon;
    std::string prompt, lang = "en", task_id = "prompt";
    std::optional<std::size_t> max_new;
    std::optional<std::uint64_t> toy_seed;
};

int cmd_infer(const Overrides& o, const InferFlags& f) {
    auto c = o.load();
    auto lp = c.run.lp;
    if (f.encoder) lp.encoder = *f.encoder;
    if (f.projector) lp.projector = *f.projector;
    if (f.llm_table) lp.llm_table = *f.llm_table;
    if (f.max_new) lp.max_new = *f.max_new;
    if (f.toy_seed) lp.toy_seed = *f.toy_seed;
    if (f.lexicon) lp.lexicons[f.lang] = *f.lexicon;
    if (lp.encoder.empty() || lp.projector.empty())
        throw ConfigError("infer needs --encoder and --projector (or [lp] in the config)");
    std::string prompt = f.prompt;
    if (f.prompt_file)
        prompt = jsonl::read_text(*f.prompt_file);
    if (prompt.empty())
        throw ConfigError("infer needs --prompt or --prompt-file");
    if (!is_known_lang(f.lang))
        throw ConfigError("unknown language \"" + f.lang + "\"");
    auto st = orchestrator::detail::load_lp_stack(lp);
    auto system = c.run.base.system_prompt.empty() ? c.run.gateway.endpoint.system_prompt : c.run.base.system_prompt;
    if (f.embs)
        xlingual::save_sequence(*f.embs, xlingual::build_input_embeddings(system, prompt, f.lang, st->stack));
    auto r = xlingual::zero_shot_infer(f.task_id, prompt, f.lang, st->stack, system, lp.max_new);
    std::cout << r.response.raw_text << "\n";
    std::cerr << r.coverage.to_json().dump() << "\n";
    return 0;
}

int cmd_export(const Overrides& o, const std::string& dir) {
    auto c = o.load();
    if (!c.run.responses)
        throw ConfigError("export-scripts needs --responses");
    if (c.run.tasks.empty())
        throw ConfigError("export-scripts needs --tasks");
    auto corpus = corpus::Corpus::load(c.run.tasks, c.run.translations);
    std::vector<codeexec::ModelResponse> responses;
    jsonl::for_each(*c.run.responses, [&](const nlohmann::json& j, std::size_t) {
        responses.push_back(codeexec::ModelResponse::from_json(j));
    });
    auto paths = orchestrator::export_scripts(responses, corpus, dir, c.run.sandbox.interpreter_command);
    std::cout << paths.size() << " scripts written to " << dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-lingual code generation evaluation toolkit"};
    app.require_subcommand(1);
    Overrides o;

    auto* eval = app.add_subcommand("evaluate", "Query a model (or load responses), execute and score them");
    o.add_common(eval);
    o.add_gateway(eval);
    eval->add_option("--mode", o.mode, "orig | cot | bft | lp");
    eval->add_option("--model", o.model, "Model label used in reports");
    eval->add_option("--langs", o.langs, "Languages to evaluate")->delimiter(',');
    eval->add_option("--tasks", o.tasks, "Task corpus (JSONL)");
    eval->add_option("--translations", o.translations, "Prompt translations (JSONL)");
    eval->add_option("--responses", o.responses, "Evaluate these responses instead of querying");
    eval->add_option("--interpreter", o.interpreter, "Python interpreter for the sandbox");

    auto* boot = app.add_subcommand("bootstrap", "Build a round-trip filtered multilingual dataset");
    o.add_common(boot);
    o.add_gateway(boot);
    std::optional<double> threshold;
    std::optional<int> attempts;
    std::optional<std::vector<std::string>> targets;
    boot->add_option("--threshold", threshold, "Keep pairs whose back-translation BLEU exceeds this");
    boot->add_option("--attempts", attempts, "Generation attempts");
    boot->add_option("--langs", targets, "Target languages")->delimiter(',');
    boot->add_option("--interpreter", o.interpreter, "Python interpreter used to parse answers");

    auto* train = app.add_subcommand("train-projector", "Fit the encoder-to-LLM embedding projector");
    o.add_common(train);
    TrainFlags tf;
    train->add_option("--pairs", tf.pairs, "Training pairs (JSONL)");
    train->add_option("--encoder", tf.encoder, "Encoder word table (EMBT)");
    train->add_option("--llm-table", tf.llm_table, "LLM subword table (EMBT)");
    train->add_option("--subwords", tf.subwords, "Word to subword map (JSONL)");
    train->add_option("--texts", tf.texts, "English text files")->delimiter(',');
    train->add_option("-o,--output", tf.out, "Projector output (PROJ)");
    train->add_option("--epochs", tf.epochs);
    train->add_option("--lr", tf.lr);
    train->add_option("--batch-size", tf.batch);
    train->add_option("--hidden", tf.hidden);
    train->add_option("--train-seed", tf.seed);
    train->add_option("--activation", tf.activation, "identity | gelu");
    train->add_option("--optimizer", tf.optimizer, "sgd | adam");

    auto* infer = app.add_subcommand("infer", "Zero-shot generation from projected word embeddings");
    o.add_common(infer);
    InferFlags inf;
    infer->add_option("--encoder", inf.encoder, "Encoder word table (EMBT)");
    infer->add_option("--projector", inf.projector, "Projector (PROJ)");
    infer->add_option("--llm-table", inf.llm_table, "LLM embedding table (EMBT); default: toy model's own");
    infer->add_option("--prompt", inf.prompt);
    infer->add_option("--prompt-file", inf.prompt_file);
    infer->add_option("--lang", inf.lang);
    infer->add_option("--lexicon", inf.lexicon, "Word list for segmenting --lang text");
    infer->add_option("--embs", inf.embs, "Also write the input embedding sequence here");
    infer->add_option("--max-new", inf.max_new);
    infer->add_option("--toy-seed", inf.toy_seed);

    auto* report = app.add_subcommand("report", "Rebuild the report of a finished run");
    std::string run_dir, format = "table";
    report->add_option("run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    report->add_option("--format", format, "table | csv | json");

    auto* exp = app.add_subcommand("export-scripts", "Write one standalone shell script per response");
    o.add_common(exp);
    std::string script_dir = "scripts";
    exp->add_option("--responses", o.responses, "Responses (JSONL)");
    exp->add_option("--tasks", o.tasks, "Task corpus (JSONL)");
    exp->add_option("--translations", o.translations);
    exp->add_option("--dir", script_dir, "Output directory");
    exp->add_option("--interpreter", o.interpreter);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*eval) return cmd_evaluate(o);
        if (*boot) return cmd_bootstrap(o, threshold, attempts, targets);
        if (*train) return cmd_train(o, tf);
        if (*infer) return cmd_infer(o, inf);
        if (*exp) return cmd_export(o, script_dir);
        if (*report) {
            auto rows = orchestrator::rows_from_run(run_dir);
            std::cout << orchestrator::render_run_report(rows, metrics::parse_format(format));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
