#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "binary_io.hpp"
#include "error.hpp"
#include "jsonl.hpp"
#include "process.hpp"
#include "utf8.hpp"

namespace xlcode::align {

using json = nlohmann::json;

inline constexpr std::string_view kEmbtMagic = "EMBT";
inline constexpr std::uint32_t kEmbtVersion = 1;
inline constexpr std::uint32_t kEncoderDim = 1024;

// Token -> float32 vector, rows kept in insertion order so save() reproduces
// the loaded file byte for byte.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::string name, std::uint32_t dim, bool normalized = false)
        : name_(std::move(name)), dim_(dim), normalized_(normalized) {
        if (dim == 0)
            throw InvalidArgument("embedding dim must be positive");
    }

    const std::string& name() const { return name_; }
    std::uint32_t dim() const { return dim_; }
    bool normalized() const { return normalized_; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(std::size_t i) const { return tokens_.at(i); }

    void add(const std::string& token, std::span<const float> vec) {
        if (vec.size() != dim_)
            throw InvalidArgument("vector for \"" + token + "\" has dim " + std::to_string(vec.size()) +
                                  ", table dim is " + std::to_string(dim_));
        for (float v : vec)
            if (!std::isfinite(v))
                throw InvalidArgument("non-finite value in vector for token \"" + token + "\"");
        if (!index_.emplace(token, tokens_.size()).second)
            throw InvalidArgument("duplicate token \"" + token + "\"");
        tokens_.push_back(token);
        data_.insert(data_.end(), vec.begin(), vec.end());
    }
    void add(const std::string& token, const Eigen::VectorXf& v) { add(token, std::span<const float>(v.data(), v.size())); }

    bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

    std::optional<std::size_t> index_of(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end())
            return std::nullopt;
        return it->second;
    }

    std::span<const float> row(std::size_t i) const {
        if (i >= tokens_.size())
            throw InvalidArgument("row index out of range");
        return {data_.data() + i * dim_, dim_};
    }

    std::optional<std::span<const float>> find(std::string_view token) const {
        auto i = index_of(token);
        if (!i)
            return std::nullopt;
        return row(*i);
    }

    std::span<const float> at(std::string_view token) const {
        auto r = find(token);
        if (!r)
            throw InvalidArgument("token \"" + std::string(token) + "\" not in table " + name_);
        return *r;
    }

    Eigen::VectorXd vector(std::size_t i) const {
        auto r = row(i);
        return Eigen::Map<const Eigen::VectorXf>(r.data(), dim_).cast<double>();
    }
    Eigen::VectorXd vector(std::string_view token) const { return vector(*index_of_or_throw(token)); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + path.string());
        binio::write_magic(out, kEmbtMagic);
        binio::write_u32(out, kEmbtVersion);
        binio::write_u32(out, static_cast<std::uint32_t>(tokens_.size()));
        binio::write_u32(out, dim_);
        binio::write_u8(out, normalized_ ? 1 : 0);
        for (const auto& t : tokens_) {
            binio::write_u32(out, static_cast<std::uint32_t>(t.size()));
            out.write(t.data(), static_cast<std::streamsize>(t.size()));
        }
        for (float v : data_)
            binio::write_f32(out, v);
        if (!out)
            throw Error("write failed for " + path.string());
    }

    // expected_dim pins the role dimension (1024 for the encoder side).
    static EmbeddingTable load(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim = {}) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error("cannot open " + path.string());
        auto file_size = std::filesystem::file_size(path);
        try {
            return read(in, path.filename().string(), file_size, expected_dim);
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
    }

private:
    std::optional<std::size_t> index_of_or_throw(std::string_view token) const {
        auto i = index_of(token);
        if (!i)
            throw InvalidArgument("token \"" + std::string(token) + "\" not in table " + name_);
        return i;
    }

    static EmbeddingTable read(std::istream& in, std::string name, std::uintmax_t file_size,
                               std::optional<std::uint32_t> expected_dim) {
        binio::expect_magic(in, kEmbtMagic);
        auto version = binio::read_u32(in);
        if (version != kEmbtVersion)
            throw FormatError("unsupported EMBT version " + std::to_string(version));
        auto vocab = binio::read_u32(in);
        auto dim = binio::read_u32(in);
        auto norm = binio::read_u8(in);
        if (dim == 0)
            throw FormatError("dim must be positive");
        if (expected_dim && dim != *expected_dim)
            throw FormatError("dim mismatch: file has " + std::to_string(dim) + ", expected " +
                              std::to_string(*expected_dim));
        if (norm > 1)
            throw FormatError("normalized flag must be 0 or 1");
        // Each record needs at least 4 + 4*dim bytes; reject absurd counts before allocating.
        if (static_cast<std::uintmax_t>(vocab) * (4 + 4ull * dim) > file_size)
            throw FormatError("unexpected EOF: file too short for " + std::to_string(vocab) + " rows");
        EmbeddingTable t(std::move(name), dim, norm == 1);
        t.tokens_.reserve(vocab);
        for (std::uint32_t i = 0; i < vocab; ++i) {
            auto len = binio::read_u32(in);
            if (len > file_size)
                throw FormatError("unexpected EOF in token list");
            auto tok = binio::read_bytes(in, len);
            if (!t.index_.emplace(tok, i).second)
                throw FormatError("duplicate token \"" + tok + "\"");
            t.tokens_.push_back(std::move(tok));
        }
        t.data_.resize(static_cast<std::size_t>(vocab) * dim);
        for (std::uint32_t i = 0; i < vocab; ++i)
            for (std::uint32_t k = 0; k < dim; ++k) {
                float v = binio::read_f32(in);
                if (!std::isfinite(v))
                    throw FormatError("non-finite value in vector for token \"" + t.tokens_[i] + "\"");
                t.data_[static_cast<std::size_t>(i) * dim + k] = v;
            }
        if (in.peek() != std::char_traits<char>::eof())
            throw FormatError("trailing bytes after vector block");
        return t;
    }

    std::string name_;
    std::uint32_t dim_ = 0;
    bool normalized_ = false;
    std::vector<std::string> tokens_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---- word tokenization ----

struct WordToken {
    std::string surface;
    std::string lang;
    std::size_t begin = 0; // byte offsets into the source text
    std::size_t end = 0;
    bool operator==(const WordToken&) const = default;
};

// Splits a run of non-space, non-punctuation text into words. The pieces must
// concatenate back to the input.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::vector<std::string> segment(std::string_view chunk) const = 0;
};

// Forward maximum matching over a word list; characters not covered by any
// lexicon entry become single-character words.
class LexiconSegmenter : public Segmenter {
public:
    LexiconSegmenter() = default;
    explicit LexiconSegmenter(const std::vector<std::string>& words) {
        for (const auto& w : words)
            add(w);
    }

    void add(const std::string& w) {
        if (w.empty())
            return;
        std::size_t n = 0;
        for (std::size_t i = 0; i < w.size(); i += utf8::decode(w, i).len)
            ++n;
        max_chars_ = std::max(max_chars_, n);
        words_.insert(w);
    }

    // One word per line; blank lines and '#' comments ignored.
    static LexiconSegmenter from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot open lexicon " + path.string());
        LexiconSegmenter seg;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
                line.pop_back();
            if (!line.empty() && line[0] != '#')
                seg.add(line);
        }
        return seg;
    }

    std::size_t size() const { return words_.size(); }

    std::vector<std::string> segment(std::string_view chunk) const override {
        std::vector<std::size_t> starts; // code point boundaries
        for (std::size_t i = 0; i < chunk.size(); i += utf8::decode(chunk, i).len)
            starts.push_back(i);
        starts.push_back(chunk.size());
        std::vector<std::string> out;
        std::size_t p = 0;
        const std::size_t n = starts.size() - 1;
        while (p < n) {
            std::size_t take = 1;
            for (std::size_t k = std::min(max_chars_, n - p); k > 1; --k) {
                if (words_.count(std::string(chunk.substr(starts[p], starts[p + k] - starts[p])))) {
                    take = k;
                    break;
                }
            }
            out.emplace_back(chunk.substr(starts[p], starts[p + take] - starts[p]));
            p += take;
        }
        return out;
    }

private:
    std::set<std::string> words_;
    std::size_t max_chars_ = 1;
};

// Delegates to an external program that reads text on stdin and writes the
// words separated by whitespace on stdout.
class CommandSegmenter : public Segmenter {
public:
    explicit CommandSegmenter(std::vector<std::string> argv, std::chrono::milliseconds timeout = std::chrono::seconds(10))
        : argv_(std::move(argv)), timeout_(timeout) {
        if (argv_.empty())
            throw ConfigError("segmenter command is empty");
    }

    std::vector<std::string> segment(std::string_view chunk) const override {
        process::RunOptions opts;
        opts.timeout = timeout_;
        opts.stdin_data = std::string(chunk);
        opts.isolate_network = false;
        auto r = process::run(argv_, opts);
        if (r.timed_out || r.signaled || r.exit_code != 0)
            throw Error("segmenter command \"" + argv_[0] + "\" failed: " + r.stderr_data);
        std::vector<std::string> out;
        std::size_t i = 0;
        const auto& s = r.stdout_data;
        while (i < s.size()) {
            auto c = utf8::decode(s, i);
            if (utf8::is_space(c.cp)) {
                i += c.len;
                continue;
            }
            std::size_t j = i;
            while (j < s.size()) {
                auto d = utf8::decode(s, j);
                if (utf8::is_space(d.cp))
                    break;
                j += d.len;
            }
            out.push_back(s.substr(i, j - i));
            i = j;
        }
        return out;
    }

private:
    std::vector<std::string> argv_;
    std::chrono::milliseconds timeout_;
};

inline bool needs_segmenter(std::string_view lang) { return lang == "zh" || lang == "ja"; }

struct TokenizerOptions {
    std::map<std::string, std::shared_ptr<const Segmenter>> segmenters; // lang -> segmenter
    bool allow_fallback = true; // per-character LexiconSegmenter when none registered
};

namespace detail {

inline void push_segmented(std::vector<WordToken>& out, const std::string& text, std::size_t begin, std::size_t end,
                           const std::string& lang, const Segmenter* seg) {
    if (!seg) {
        out.push_back({text.substr(begin, end - begin), lang, begin, end});
        return;
    }
    auto chunk = std::string_view(text).substr(begin, end - begin);
    std::size_t pos = begin;
    for (auto& w : seg->segment(chunk)) {
        if (w.empty())
            continue;
        if (text.compare(pos, w.size(), w) != 0)
            throw FormatError("segmenter output does not match input near byte " + std::to_string(pos));
        auto n = w.size();
        out.push_back({std::move(w), lang, pos, pos + n});
        pos += n;
    }
    if (pos != end)
        throw FormatError("segmenter output does not cover its input");
}

} // namespace detail

// Whitespace separates words; each punctuation character is its own token.
// For zh/ja the remaining runs are handed to the registered segmenter.
inline std::vector<WordToken> word_tokenize(const std::string& text, const std::string& lang,
                                            const TokenizerOptions& opts = {}) {
    const Segmenter* seg = nullptr;
    static const LexiconSegmenter kCharFallback;
    if (needs_segmenter(lang)) {
        auto it = opts.segmenters.find(lang);
        if (it != opts.segmenters.end() && it->second)
            seg = it->second.get();
        else if (opts.allow_fallback)
            seg = &kCharFallback;
        else
            throw ConfigError("no segmenter registered for language \"" + lang + "\"");
    }
    std::vector<WordToken> out;
    std::size_t i = 0, word_start = std::string::npos;
    auto flush = [&](std::size_t at) {
        if (word_start != std::string::npos)
            detail::push_segmented(out, text, word_start, at, lang, seg);
        word_start = std::string::npos;
    };
    while (i < text.size()) {
        auto c = utf8::decode(text, i);
        if (utf8::is_space(c.cp)) {
            flush(i);
        } else if (utf8::is_punct(c.cp)) {
            flush(i);
            out.push_back({text.substr(i, c.len), lang, i, i + c.len});
        } else if (word_start == std::string::npos) {
            word_start = i;
        }
        i += c.len;
    }
    flush(text.size());
    return out;
}

// ---- subword map ----

// Word-boundary markers used by common subword vocabularies.
inline std::string strip_boundary_markers(std::string_view piece) {
    static const std::string kSentencePiece = "\xE2\x96\x81"; // U+2581
    static const std::string kByteLevel = "\xC4\xA0";         // U+0120
    std::string s(piece);
    for (const auto& m : {kSentencePiece, kByteLevel})
        for (auto p = s.find(m); p != std::string::npos; p = s.find(m))
            s.erase(p, m.size());
    if (s.rfind("##", 0) == 0 && s.size() > 2)
        s.erase(0, 2);
    return s;
}

using SubwordMap = std::map<std::string, std::vector<std::string>>;

inline SubwordMap load_subword_map(const std::filesystem::path& path) {
    SubwordMap m;
    jsonl::for_each(path, [&](const json& j, std::size_t line) {
        auto where = path.string() + ":" + std::to_string(line);
        if (!j.is_object() || !j.contains("word") || !j["word"].is_string() || !j.contains("subwords") ||
            !j["subwords"].is_array())
            throw FormatError(where + ": expected {\"word\": string, \"subwords\": [string...]}");
        auto word = j["word"].get<std::string>();
        if (word.empty())
            throw FormatError(where + ": empty word");
        std::vector<std::string> subs;
        std::string joined;
        for (const auto& s : j["subwords"]) {
            if (!s.is_string())
                throw FormatError(where + ": subwords must be strings");
            subs.push_back(s.get<std::string>());
            joined += strip_boundary_markers(subs.back());
        }
        if (subs.empty())
            throw FormatError(where + ": word \"" + word + "\" has no subwords");
        if (joined != word)
            throw FormatError(where + ": subwords of \"" + word + "\" reconstruct \"" + joined + "\"");
        if (!m.emplace(word, std::move(subs)).second)
            throw FormatError(where + ": duplicate word \"" + word + "\"");
    });
    return m;
}

inline void save_subword_map(const std::filesystem::path& path, const SubwordMap& m) {
    std::vector<json> rows;
    for (const auto& [w, subs] : m)
        rows.push_back({{"word", w}, {"subwords", subs}});
    jsonl::write_all(path, rows);
}

// Elementwise maximum over the word's subword vectors.
inline Eigen::VectorXd pool_subwords(const std::vector<std::string>& subwords, const EmbeddingTable& llm) {
    if (subwords.empty())
        throw InvalidArgument("no subwords to pool");
    Eigen::VectorXd out;
    for (const auto& s : subwords) {
        auto r = llm.find(s);
        if (!r)
            throw InvalidArgument("subword \"" + s + "\" missing from LLM table");
        Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXf>(r->data(), llm.dim()).cast<double>();
        out = out.size() == 0 ? v : Eigen::VectorXd(out.cwiseMax(v));
    }
    return out;
}

inline Eigen::VectorXd pool_llm_embedding(const std::string& word, const SubwordMap& map, const EmbeddingTable& llm) {
    auto it = map.find(word);
    if (it == map.end())
        throw InvalidArgument("word \"" + word + "\" has no subword map entry");
    return pool_subwords(it->second, llm);
}

// ---- training pairs ----

struct TrainingPair {
    std::string word;
    Eigen::VectorXd h_laser;
    Eigen::VectorXd h_llm;
};

struct Coverage {
    std::size_t tokens = 0;           // word-token occurrences seen
    std::size_t distinct = 0;         // distinct surface forms
    std::size_t duplicates = 0;       // occurrences skipped by surface dedup
    std::size_t missing_encoder = 0;  // distinct words absent from the encoder table
    std::size_t missing_llm = 0;      // distinct words without a complete subword mapping
    std::vector<std::string> dropped; // distinct dropped words, first-seen order

    double rate() const { return distinct == 0 ? 0.0 : double(distinct - dropped.size()) / double(distinct); }

    json to_json() const {
        return {{"tokens", tokens},       {"distinct", distinct},       {"duplicates", duplicates},
                {"missing_encoder", missing_encoder}, {"missing_llm", missing_llm}, {"coverage", rate()},
                {"dropped", dropped}};
    }
};

struct PairSet {
    std::vector<TrainingPair> pairs;
    Coverage coverage;
};

inline PairSet build_training_pairs(const std::vector<std::string>& texts, const EmbeddingTable& encoder,
                                    const EmbeddingTable& llm, const SubwordMap& subwords,
                                    const std::string& lang = "en", const TokenizerOptions& tok = {}) {
    PairSet out;
    std::set<std::string> seen;
    for (const auto& text : texts) {
        for (const auto& w : word_tokenize(text, lang, tok)) {
            ++out.coverage.tokens;
            if (!seen.insert(w.surface).second) {
                ++out.coverage.duplicates;
                continue;
            }
            ++out.coverage.distinct;
            auto enc = encoder.find(w.surface);
            auto sub = subwords.find(w.surface);
            bool llm_ok = sub != subwords.end() &&
                          std::all_of(sub->second.begin(), sub->second.end(),
                                      [&](const std::string& s) { return llm.contains(s); });
            if (!enc)
                ++out.coverage.missing_encoder;
            if (!llm_ok)
                ++out.coverage.missing_llm;
            if (!enc || !llm_ok) {
                out.coverage.dropped.push_back(w.surface);
                continue;
            }
            out.pairs.push_back({w.surface, encoder.vector(w.surface), pool_subwords(sub->second, llm)});
        }
    }
    if (out.pairs.empty())
        throw InvalidArgument("no training pairs: none of " + std::to_string(out.coverage.distinct) +
                              " distinct words is covered by both tables");
    return out;
}

// JSONL interchange for pairs: {"word", "h_laser": [...], "h_llm": [...]}.
inline void save_pairs(const std::filesystem::path& path, const std::vector<TrainingPair>& pairs) {
    std::vector<json> rows;
    for (const auto& p : pairs)
        rows.push_back({{"word", p.word},
                        {"h_laser", std::vector<double>(p.h_laser.data(), p.h_laser.data() + p.h_laser.size())},
                        {"h_llm", std::vector<double>(p.h_llm.data(), p.h_llm.data() + p.h_llm.size())}});
    jsonl::write_all(path, rows);
}

inline std::vector<TrainingPair> load_pairs(const std::filesystem::path& path) {
    std::vector<TrainingPair> out;
    jsonl::for_each(path, [&](const json& j, std::size_t line) {
        try {
            auto a = j.at("h_laser").get<std::vector<double>>();
            auto b = j.at("h_llm").get<std::vector<double>>();
            out.push_back({j.at("word").get<std::string>(), Eigen::Map<Eigen::VectorXd>(a.data(), a.size()),
                           Eigen::Map<Eigen::VectorXd>(b.data(), b.size())});
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
        const auto& p = out.back();
        if (!p.h_laser.allFinite() || !p.h_llm.allFinite())
            throw FormatError(path.string() + ":" + std::to_string(line) + ": non-finite value for \"" + p.word +
                              "\"");
        if (p.h_laser.size() != out.front().h_laser.size() || p.h_llm.size() != out.front().h_llm.size())
            throw FormatError(path.string() + ":" + std::to_string(line) + ": inconsistent dims");
    });
    return out;
}

} // namespace xlcode::align
