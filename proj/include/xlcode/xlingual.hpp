#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "align.hpp"
#include "binary_io.hpp"
#include "codeexec.hpp"
#include "error.hpp"
#include "projector.hpp"
#include "random.hpp"
#include "utf8.hpp"

namespace xlcode::xlingual {

using json = nlohmann::json;

// ---- embedding sequences ----

enum class Provenance : std::uint8_t { system_token = 0, projected_word = 1 };

struct SequenceCoverage {
    std::size_t prompt_words = 0;
    std::vector<std::string> dropped; // prompt words missing from the encoder table

    double drop_rate() const { return prompt_words == 0 ? 0.0 : double(dropped.size()) / double(prompt_words); }
    json to_json() const {
        return {{"prompt_words", prompt_words}, {"dropped", dropped.size()}, {"drop_rate", drop_rate()},
                {"dropped_words", dropped}};
    }
};

struct EmbeddingSequence {
    Eigen::MatrixXd vectors; // dim x length, one position per column
    std::vector<Provenance> provenance;
    std::vector<std::string> labels; // token or word per position, for diagnostics
    SequenceCoverage coverage;

    Eigen::Index dim() const { return vectors.rows(); }
    std::size_t size() const { return provenance.size(); }

    void append(const Eigen::VectorXd& v, Provenance p, std::string label) {
        if (vectors.cols() > 0 && v.size() != vectors.rows())
            throw InvalidArgument("sequence dim mismatch: " + std::to_string(v.size()) + " vs " +
                                  std::to_string(vectors.rows()));
        vectors.conservativeResize(v.size(), vectors.cols() + 1);
        vectors.col(vectors.cols() - 1) = v;
        provenance.push_back(p);
        labels.push_back(std::move(label));
    }
};

inline constexpr std::string_view kEmbsMagic = "EMBS";
inline constexpr std::uint32_t kEmbsVersion = 1;

// "EMBS", u32 version, u32 rows, u32 dim, rows x u8 provenance, rows x dim f32.
inline void save_sequence(const std::filesystem::path& path, const EmbeddingSequence& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    binio::write_magic(out, kEmbsMagic);
    binio::write_u32(out, kEmbsVersion);
    binio::write_u32(out, static_cast<std::uint32_t>(s.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(s.dim()));
    for (auto p : s.provenance)
        binio::write_u8(out, static_cast<std::uint8_t>(p));
    for (Eigen::Index c = 0; c < s.vectors.cols(); ++c)
        for (Eigen::Index r = 0; r < s.vectors.rows(); ++r)
            binio::write_f32(out, static_cast<float>(s.vectors(r, c)));
    if (!out)
        throw Error("write failed for " + path.string());
}

inline EmbeddingSequence load_sequence(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    try {
        binio::expect_magic(in, kEmbsMagic);
        if (auto v = binio::read_u32(in); v != kEmbsVersion)
            throw FormatError("unsupported EMBS version " + std::to_string(v));
        auto n = binio::read_u32(in), dim = binio::read_u32(in);
        if (dim == 0)
            throw FormatError("dim must be positive");
        std::uintmax_t need = 16 + std::uintmax_t(n) * (1 + 4ull * dim);
        if (std::filesystem::file_size(path) != need)
            throw FormatError(std::filesystem::file_size(path) < need ? "unexpected EOF" : "trailing bytes");
        EmbeddingSequence s;
        s.vectors.resize(dim, n);
        for (std::uint32_t i = 0; i < n; ++i) {
            auto p = binio::read_u8(in);
            if (p > 1)
                throw FormatError("unknown provenance byte " + std::to_string(p));
            s.provenance.push_back(static_cast<Provenance>(p));
            s.labels.emplace_back();
        }
        for (std::uint32_t c = 0; c < n; ++c)
            for (std::uint32_t r = 0; r < dim; ++r)
                s.vectors(r, c) = binio::read_f32(in);
        return s;
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---- LLM-side tokenization of the system prompt ----

inline const std::string kWordBoundary = "\xE2\x96\x81"; // U+2581

// Greedy longest match over the vocabulary, with U+2581 marking a word start.
class SubwordTokenizer {
public:
    explicit SubwordTokenizer(const align::EmbeddingTable& vocab, std::string unk = "<unk>") : vocab_(vocab) {
        for (const auto& t : vocab.tokens())
            max_len_ = std::max(max_len_, t.size());
        unk_ = vocab.index_of(unk);
    }

    std::vector<std::size_t> encode(const std::string& text) const {
        std::vector<std::size_t> ids;
        std::size_t i = 0;
        while (i < text.size()) {
            auto c = utf8::decode(text, i);
            if (utf8::is_space(c.cp)) {
                i += c.len;
                continue;
            }
            std::size_t j = i;
            while (j < text.size()) {
                auto d = utf8::decode(text, j);
                if (utf8::is_space(d.cp))
                    break;
                j += d.len;
            }
            encode_word(kWordBoundary + text.substr(i, j - i), ids);
            i = j;
        }
        return ids;
    }

    std::string decode(const std::vector<std::size_t>& ids) const {
        std::string s;
        for (auto id : ids)
            s += vocab_.token(id);
        for (auto p = s.find(kWordBoundary); p != std::string::npos; p = s.find(kWordBoundary, p + 1))
            s.replace(p, kWordBoundary.size(), " ");
        return s.empty() || s[0] != ' ' ? s : s.substr(1);
    }

private:
    void encode_word(const std::string& w, std::vector<std::size_t>& ids) const {
        std::size_t pos = 0;
        while (pos < w.size()) {
            std::size_t best_len = 0, best_id = 0;
            for (std::size_t len = std::min(max_len_, w.size() - pos); len > 0; --len) {
                if (auto id = vocab_.index_of(std::string_view(w).substr(pos, len))) {
                    best_len = len;
                    best_id = *id;
                    break;
                }
            }
            if (best_len == 0) {
                if (!unk_)
                    throw InvalidArgument("cannot tokenize \"" + w.substr(pos) + "\" with the LLM vocabulary");
                best_id = *unk_;
                best_len = utf8::decode(w, pos).len;
            }
            ids.push_back(best_id);
            pos += best_len;
        }
    }

    const align::EmbeddingTable& vocab_;
    std::size_t max_len_ = 1;
    std::optional<std::size_t> unk_;
};

// ---- nearest-token decoding ----

class NearestTokenDecoder {
public:
    explicit NearestTokenDecoder(const align::EmbeddingTable& table) : table_(table) {
        if (table.size() == 0)
            throw InvalidArgument("nearest-token decoding needs a non-empty table");
        normalized_.resize(table.dim(), static_cast<Eigen::Index>(table.size()));
        for (std::size_t i = 0; i < table.size(); ++i) {
            Eigen::VectorXd v = table.vector(i);
            double n = v.norm();
            normalized_.col(static_cast<Eigen::Index>(i)) = n > 0 ? Eigen::VectorXd(v / n) : Eigen::VectorXd(v);
        }
    }

    // Argmax cosine similarity; exact ties go to the lexicographically smaller token.
    std::size_t nearest_index(const Eigen::VectorXd& v) const {
        if (v.size() != normalized_.rows())
            throw InvalidArgument("nearest_token dim mismatch: " + std::to_string(v.size()) + " vs " +
                                  std::to_string(normalized_.rows()));
        double n = v.norm();
        if (!(n > 0))
            throw InvalidArgument("cosine similarity is undefined for a zero vector");
        Eigen::VectorXd sims = normalized_.transpose() * (v / n);
        std::size_t best = 0;
        for (std::size_t i = 1; i < table_.size(); ++i) {
            double s = sims(static_cast<Eigen::Index>(i)), b = sims(static_cast<Eigen::Index>(best));
            if (s > b || (s == b && table_.token(i) < table_.token(best)))
                best = i;
        }
        return best;
    }

    const std::string& nearest(const Eigen::VectorXd& v) const { return table_.token(nearest_index(v)); }

private:
    const align::EmbeddingTable& table_;
    Eigen::MatrixXd normalized_;
};

inline std::string nearest_token(const Eigen::VectorXd& v, const align::EmbeddingTable& table) {
    return NearestTokenDecoder(table).nearest(v);
}

// ---- embedding-consuming language models ----

class EmbeddingLM {
public:
    virtual ~EmbeddingLM() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual Eigen::Index dim() const = 0;
    virtual Eigen::MatrixXd embed(const std::vector<std::size_t>& ids) const = 0;
    // vocab x length; column t depends only on input columns 0..t
    virtual Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const = 0;
};

struct Generation {
    std::vector<std::size_t> tokens;
    std::vector<Eigen::VectorXd> step_logits; // logits that chose each new token
};

// Greedy decoding; lowest id wins exact ties.
inline Generation greedy_generate(const EmbeddingLM& lm, const Eigen::MatrixXd& inputs, std::size_t max_new) {
    if (inputs.cols() == 0)
        throw InvalidArgument("generation input is empty");
    if (inputs.rows() != lm.dim())
        throw InvalidArgument("input embedding dim " + std::to_string(inputs.rows()) + " != model dim " +
                              std::to_string(lm.dim()));
    Generation g;
    Eigen::MatrixXd x = inputs;
    for (std::size_t step = 0; step < max_new; ++step) {
        Eigen::VectorXd last = lm.logits(x).col(x.cols() - 1);
        Eigen::Index best;
        last.maxCoeff(&best);
        g.tokens.push_back(static_cast<std::size_t>(best));
        g.step_logits.push_back(std::move(last));
        x.conservativeResize(Eigen::NoChange, x.cols() + 1);
        x.col(x.cols() - 1) = lm.embed({static_cast<std::size_t>(best)}).col(0);
    }
    return g;
}

inline Generation greedy_generate(const EmbeddingLM& lm, const std::vector<std::size_t>& ids, std::size_t max_new) {
    if (ids.empty())
        throw InvalidArgument("generation input is empty");
    return greedy_generate(lm, lm.embed(ids), max_new);
}

inline Generation greedy_generate(const EmbeddingLM& lm, const EmbeddingSequence& seq, std::size_t max_new) {
    return greedy_generate(lm, seq.vectors, max_new);
}

struct ToyConfig {
    std::size_t vocab = 256;
    Eigen::Index dim = 64;
    int layers = 2;
    int heads = 4;
    std::uint64_t seed = 0;
};

// Small pre-norm causal transformer with deterministic seeded weights. Token
// ids go through embed() and then the same logits() path as raw embeddings.
class ToyDecoder : public EmbeddingLM {
public:
    explicit ToyDecoder(ToyConfig cfg = {}) : cfg_(cfg) {
        if (cfg.vocab == 0 || cfg.dim <= 0 || cfg.layers < 1 || cfg.heads < 1 || cfg.dim % cfg.heads != 0)
            throw InvalidArgument("invalid toy decoder shape");
        rnd::Engine rng(cfg.seed);
        auto init = [&](Eigen::Index r, Eigen::Index c, double scale) {
            Eigen::MatrixXd m(r, c);
            for (Eigen::Index j = 0; j < c; ++j)
                for (Eigen::Index i = 0; i < r; ++i)
                    m(i, j) = scale * rnd::normal(rng);
            return m;
        };
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
        // float32-representable so an EMBT export matches the model exactly
        embedding_ = init(cfg.dim, static_cast<Eigen::Index>(cfg.vocab), 1.0).cast<float>().cast<double>();
        for (int l = 0; l < cfg.layers; ++l) {
            Layer L;
            L.Wq = init(cfg.dim, cfg.dim, s);
            L.Wk = init(cfg.dim, cfg.dim, s);
            L.Wv = init(cfg.dim, cfg.dim, s);
            L.Wo = init(cfg.dim, cfg.dim, s);
            L.W1 = init(4 * cfg.dim, cfg.dim, s);
            L.W2 = init(cfg.dim, 4 * cfg.dim, 0.5 * s);
            layers_.push_back(std::move(L));
        }
        unembed_ = init(static_cast<Eigen::Index>(cfg.vocab), cfg.dim, s);
    }

    // Adopts `table` as the input embedding matrix; vocab and dim follow the table.
    ToyDecoder(ToyConfig cfg, const align::EmbeddingTable& table)
        : ToyDecoder([&] {
              cfg.vocab = table.size();
              cfg.dim = static_cast<Eigen::Index>(table.dim());
              return cfg;
          }()) {
        for (std::size_t i = 0; i < table.size(); ++i)
            embedding_.col(static_cast<Eigen::Index>(i)) = table.vector(i);
    }

    std::size_t vocab_size() const override { return cfg_.vocab; }
    Eigen::Index dim() const override { return cfg_.dim; }
    const ToyConfig& config() const { return cfg_; }
    const Eigen::MatrixXd& embedding_matrix() const { return embedding_; }

    Eigen::MatrixXd embed(const std::vector<std::size_t>& ids) const override {
        Eigen::MatrixXd x(cfg_.dim, static_cast<Eigen::Index>(ids.size()));
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] >= cfg_.vocab)
                throw InvalidArgument("token id " + std::to_string(ids[t]) + " out of range");
            x.col(static_cast<Eigen::Index>(t)) = embedding_.col(static_cast<Eigen::Index>(ids[t]));
        }
        return x;
    }

    Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const override {
        if (inputs.rows() != cfg_.dim)
            throw InvalidArgument("input embedding dim " + std::to_string(inputs.rows()) + " != model dim " +
                                  std::to_string(cfg_.dim));
        const Eigen::Index T = inputs.cols();
        Eigen::MatrixXd x = inputs;
        for (Eigen::Index t = 0; t < T; ++t)
            x.col(t) += position(t);
        const Eigen::Index hd = cfg_.dim / cfg_.heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
        for (const auto& L : layers_) {
            Eigen::MatrixXd h = layer_norm(x);
            Eigen::MatrixXd q = L.Wq * h, k = L.Wk * h, v = L.Wv * h;
            Eigen::MatrixXd att(cfg_.dim, T);
            for (Eigen::Index t = 0; t < T; ++t) {
                for (int head = 0; head < cfg_.heads; ++head) {
                    const Eigen::Index off = head * hd;
                    // Only positions j <= t take part in row t.
                    Eigen::VectorXd sc(t + 1);
                    for (Eigen::Index j = 0; j <= t; ++j)
                        sc(j) = q.col(t).segment(off, hd).dot(k.col(j).segment(off, hd)) * scale;
                    sc = (sc.array() - sc.maxCoeff()).exp();
                    sc /= sc.sum();
                    Eigen::VectorXd o = Eigen::VectorXd::Zero(hd);
                    for (Eigen::Index j = 0; j <= t; ++j)
                        o += sc(j) * v.col(j).segment(off, hd);
                    att.col(t).segment(off, hd) = o;
                }
            }
            x += L.Wo * att;
            Eigen::MatrixXd m = (L.W1 * layer_norm(x)).unaryExpr([](double z) { return z > 0 ? z : 0.0; });
            x += L.W2 * m;
        }
        return unembed_ * layer_norm(x);
    }

    // LLM-side embedding table for this model under the given vocabulary.
    align::EmbeddingTable embedding_table(const std::vector<std::string>& vocab, const std::string& name = "toy") const {
        if (vocab.size() != cfg_.vocab)
            throw InvalidArgument("vocabulary size " + std::to_string(vocab.size()) + " != model vocab " +
                                  std::to_string(cfg_.vocab));
        align::EmbeddingTable t(name, static_cast<std::uint32_t>(cfg_.dim));
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            Eigen::VectorXf v = embedding_.col(static_cast<Eigen::Index>(i)).cast<float>();
            t.add(vocab[i], v);
        }
        return t;
    }

private:
    struct Layer {
        Eigen::MatrixXd Wq, Wk, Wv, Wo, W1, W2;
    };

    Eigen::VectorXd position(Eigen::Index t) const {
        Eigen::VectorXd p(cfg_.dim);
        for (Eigen::Index i = 0; i < cfg_.dim; ++i) {
            double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(cfg_.dim));
            p(i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
        }
        return p;
    }

    static Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x) {
        Eigen::MatrixXd y(x.rows(), x.cols());
        for (Eigen::Index t = 0; t < x.cols(); ++t) {
            double mean = x.col(t).mean();
            Eigen::VectorXd c = x.col(t).array() - mean;
            double var = c.squaredNorm() / static_cast<double>(x.rows());
            y.col(t) = c / std::sqrt(var + 1e-5);
        }
        return y;
    }

    ToyConfig cfg_;
    Eigen::MatrixXd embedding_;
    std::vector<Layer> layers_;
    Eigen::MatrixXd unembed_;
};

// 256-entry vocabulary for the toy model: specials, single printable ASCII
// characters, word-initial letters and digits, and common prompt/code words.
inline std::vector<std::string> toy_vocabulary() {
    std::vector<std::string> v = {"<unk>", kWordBoundary, "\n"};
    for (char c = 0x21; c < 0x7F; ++c)
        v.emplace_back(1, c);
    for (char c = 'a'; c <= 'z'; ++c)
        v.push_back(kWordBoundary + std::string(1, c));
    for (char c = 'A'; c <= 'Z'; ++c)
        v.push_back(kWordBoundary + std::string(1, c));
    for (char c = '0'; c <= '9'; ++c)
        v.push_back(kWordBoundary + std::string(1, c));
    static const char* kWords[] = {
        "def", "return", "for", "in", "if", "else", "elif", "while", "import", "from", "class", "lambda", "not",
        "and", "or", "is", "None", "True", "False", "print", "range", "len", "list", "dict", "set", "str", "int",
        "sum", "max", "min", "sorted", "append", "the", "a", "an", "to", "of", "that", "with", "given", "Write",
        "write", "function", "python", "Python", "number", "numbers", "string", "strings", "array", "element",
        "elements", "find", "count", "check", "whether", "two", "first", "last", "all", "You", "are", "expert",
        "programmer", "Answer", "single", "code", "block", "```", "```python", "add", "remove", "reverse", "words",
        "sort", "value", "values", "index", "result", "self", "x", "y", "n", "s", "i", "j", "k", "arr", "lst",
        "nums", "text", "char", "total", "maximum", "minimum", "volume", "prism", "occurrence", "character"};
    for (const char* w : kWords) {
        if (v.size() == 256)
            break;
        auto tok = kWordBoundary + w;
        if (std::find(v.begin(), v.end(), tok) == v.end())
            v.push_back(tok);
    }
    for (int i = 0; v.size() < 256; ++i)
        v.push_back("<extra_" + std::to_string(i) + ">");
    return v;
}

// ---- assembly and zero-shot inference ----

struct Stack {
    const align::EmbeddingTable* encoder = nullptr;
    const projector::Projector<double>* projector = nullptr;
    const align::EmbeddingTable* llm = nullptr;
    const EmbeddingLM* model = nullptr; // may be null for build_input_embeddings alone
    align::TokenizerOptions tokenizer;
};

// System prompt embedded natively from the LLM table, then each prompt word
// projected from the encoder space. Words absent from the encoder table are
// dropped and counted.
inline EmbeddingSequence build_input_embeddings(const std::string& system_prompt, const std::string& prompt,
                                                const std::string& lang, const Stack& stack) {
    if (!stack.encoder || !stack.projector || !stack.llm)
        throw InvalidArgument("stack needs encoder table, projector and LLM table");
    const auto& p = *stack.projector;
    if (p.in_dim() != stack.encoder->dim() || p.out_dim() != stack.llm->dim())
        throw InvalidArgument("projector maps " + std::to_string(p.in_dim()) + "->" + std::to_string(p.out_dim()) +
                              " but tables are " + std::to_string(stack.encoder->dim()) + " and " +
                              std::to_string(stack.llm->dim()));
    EmbeddingSequence seq;
    SubwordTokenizer tok(*stack.llm);
    for (auto id : tok.encode(system_prompt))
        seq.append(stack.llm->vector(id), Provenance::system_token, stack.llm->token(id));
    for (const auto& w : align::word_tokenize(prompt, lang, stack.tokenizer)) {
        ++seq.coverage.prompt_words;
        auto row = stack.encoder->find(w.surface);
        if (!row) {
            seq.coverage.dropped.push_back(w.surface);
            continue;
        }
        seq.append(p.project(stack.encoder->vector(w.surface)), Provenance::projected_word, w.surface);
    }
    if (seq.size() == 0)
        throw InvalidArgument("input sequence is empty: no system tokens and no covered prompt words");
    return seq;
}

struct ZeroShotResult {
    codeexec::ModelResponse response;
    SequenceCoverage coverage;
    std::vector<std::size_t> generated;
};

inline ZeroShotResult zero_shot_infer(const std::string& task_id, const std::string& prompt, const std::string& lang,
                                      const Stack& stack, const std::string& system_prompt, std::size_t max_new) {
    if (!stack.model)
        throw InvalidArgument("zero-shot inference needs a model");
    if (stack.model->dim() != static_cast<Eigen::Index>(stack.llm->dim()) ||
        stack.model->vocab_size() != stack.llm->size())
        throw InvalidArgument("model shape does not match the LLM table");
    auto seq = build_input_embeddings(system_prompt, prompt, lang, stack);
    auto gen = greedy_generate(*stack.model, seq, max_new);
    ZeroShotResult r;
    r.response = {task_id, lang, codeexec::Mode::lp, SubwordTokenizer(*stack.llm).decode(gen.tokens)};
    r.coverage = std::move(seq.coverage);
    r.generated = std::move(gen.tokens);
    return r;
}

} // namespace xlcode::xlingual
