#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace xlcode::bleu {

inline constexpr int kMaxOrder = 4;

struct BleuScore {
    double score = 0.0;
    std::array<double, kMaxOrder> precisions{};   // smoothed p1..p4
    std::array<std::size_t, kMaxOrder> matches{}; // clipped counts
    std::array<std::size_t, kMaxOrder> totals{};  // candidate n-gram counts
    double brevity_penalty = 1.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;
    static constexpr std::string_view smoothing = "add-one on zero-match orders n>=2";
};

// Lowercases ASCII and splits into runs of word characters and single
// punctuation marks. Bytes >= 0x80 count as word characters, so UTF-8 words stay whole.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
    for (unsigned char c : text) {
        if (is_word(c)) {
            cur += static_cast<char>(std::tolower(c));
            continue;
        }
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
        if (!std::isspace(c))
            out.emplace_back(1, static_cast<char>(c));
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, int n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= toks.size(); ++i)
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + un))];
    return counts;
}

inline BleuScore bleu_tokens(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    if (cand.empty() || ref.empty())
        throw InvalidArgument("BLEU needs non-empty candidate and reference");
    BleuScore s;
    s.candidate_length = cand.size();
    s.reference_length = ref.size();
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= kMaxOrder; ++n) {
        const auto k = static_cast<std::size_t>(n - 1);
        auto cc = ngram_counts(cand, n);
        auto rc = ngram_counts(ref, n);
        std::size_t m = 0;
        for (const auto& [gram, count] : cc) {
            auto it = rc.find(gram);
            if (it != rc.end())
                m += std::min(count, it->second);
        }
        const std::size_t total = cand.size() >= static_cast<std::size_t>(n) ? cand.size() - k : 0;
        s.matches[k] = m;
        s.totals[k] = total;
        double p;
        if (n >= 2 && m == 0)
            p = 1.0 / static_cast<double>(total + 1);
        else
            p = static_cast<double>(m) / static_cast<double>(total);
        s.precisions[k] = p;
        if (p == 0.0)
            zero = true;
        else
            log_sum += std::log(p);
    }
    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    s.brevity_penalty = cand.size() > ref.size() ? 1.0 : std::exp(1.0 - r / c);
    s.score = zero ? 0.0 : s.brevity_penalty * std::exp(log_sum / kMaxOrder);
    return s;
}

// Sentence BLEU of `candidate` against a single `reference`.
inline BleuScore bleu_sentence(std::string_view candidate, std::string_view reference) {
    auto c = tokenize(candidate);
    auto r = tokenize(reference);
    if (c.empty() || r.empty())
        throw InvalidArgument("BLEU: empty tokenization");
    return bleu_tokens(c, r);
}

} // namespace xlcode::bleu
