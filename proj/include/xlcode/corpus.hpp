#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "jsonl.hpp"
#include "lang.hpp"

namespace xlcode::corpus {

using json = nlohmann::json;

struct Task {
    std::string id;
    std::string prompt_en;
    std::string reference_solution;
    std::array<std::string, 3> assertions;
};

struct MultilingualPrompt {
    std::string task_id;
    std::string lang;
    std::string text;
};

// Immutable after load.
class Corpus {
public:
    Corpus() = default;

    static Corpus load(const std::filesystem::path& tasks_path,
                       const std::optional<std::filesystem::path>& translations_path = std::nullopt) {
        Corpus c;
        jsonl::for_each(tasks_path, [&](const json& j, std::size_t line) {
            auto where = tasks_path.filename().string() + ":" + std::to_string(line) + ": ";
            for (const char* key : {"id", "prompt", "solution", "assertions"})
                if (!j.contains(key))
                    throw FormatError(where + "missing field \"" + key + "\"");
            Task t;
            t.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            t.prompt_en = j.at("prompt").get<std::string>();
            t.reference_solution = j.at("solution").get<std::string>();
            const auto& a = j.at("assertions");
            if (!a.is_array() || a.size() != 3)
                throw FormatError(where + "assertion count must be 3 (task " + t.id + " has " +
                                  std::to_string(a.is_array() ? a.size() : 0) + ")");
            for (std::size_t i = 0; i < 3; ++i)
                t.assertions[i] = a[i].get<std::string>();
            if (t.prompt_en.empty())
                throw FormatError(where + "empty prompt for task " + t.id);
            if (c.index_.count(t.id))
                throw FormatError(where + "duplicate task id " + t.id);
            c.index_[t.id] = c.tasks_.size();
            c.tasks_.push_back(std::move(t));
        });

        if (translations_path) {
            jsonl::for_each(*translations_path, [&](const json& j, std::size_t line) {
                auto where = translations_path->filename().string() + ":" + std::to_string(line) + ": ";
                MultilingualPrompt p;
                p.task_id = j.at("task_id").is_string() ? j.at("task_id").get<std::string>()
                                                        : j.at("task_id").dump();
                p.lang = j.at("lang").get<std::string>();
                p.text = j.at("text").get<std::string>();
                if (!is_known_lang(p.lang) || p.lang == "en")
                    throw FormatError(where + "unsupported translation language \"" + p.lang + "\"");
                if (p.text.empty())
                    throw FormatError(where + "empty translation text");
                if (!c.index_.count(p.task_id))
                    throw FormatError(where + "translation for unknown task " + p.task_id);
                auto key = std::make_pair(p.task_id, p.lang);
                if (c.prompts_.count(key))
                    throw FormatError(where + "duplicate (task_id, lang) = (" + p.task_id + ", " +
                                      p.lang + ")");
                c.prompts_.emplace(std::move(key), std::move(p.text));
            });
        }

        for (const auto& t : c.tasks_) {
            std::size_t n = 0;
            for (auto l : kLanguages)
                if (l != "en" && c.prompts_.count({t.id, std::string(l)}))
                    ++n;
            if (n != 0 && n != kLanguages.size() - 1)
                throw FormatError("task " + t.id + " has " + std::to_string(n) +
                                  " translations; expected 0 or " +
                                  std::to_string(kLanguages.size() - 1));
        }
        return c;
    }

    const std::vector<Task>& tasks() const { return tasks_; }
    std::size_t size() const { return tasks_.size(); }

    const Task& task(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw InvalidArgument("unknown task id " + id);
        return tasks_[it->second];
    }

    bool has_prompt(const std::string& id, const std::string& lang) const {
        if (lang == "en")
            return index_.count(id) > 0;
        return prompts_.count({id, lang}) > 0;
    }

    // English comes from the task itself; other languages from the translations file.
    const std::string& prompt(const std::string& id, const std::string& lang) const {
        if (lang == "en")
            return task(id).prompt_en;
        auto it = prompts_.find({id, lang});
        if (it == prompts_.end())
            throw InvalidArgument("no " + lang + " prompt for task " + id);
        return it->second;
    }

    std::size_t prompt_count() const { return tasks_.size() + prompts_.size(); }

private:
    std::vector<Task> tasks_;
    std::map<std::string, std::size_t> index_;
    std::map<std::pair<std::string, std::string>, std::string> prompts_;
};

// ---------------------------------------------------------------------------
// Translation quality statistics

struct HumanRatingRecord {
    std::string task_id;
    std::string lang_pair;
    int rater1 = 0;
    int rater2 = 0;
};

struct ModelRatingRecord {
    std::string task_id;
    std::string lang_pair;
    int rating = 0;
};

struct HumanAgreement {
    double a1_mean = 0;
    double a2_mean = 0;
    double agreement_pct = 0;
    std::size_t count = 0;
};

struct RatingStats {
    double mean = 0;
    double stdev = 0; // population (divisor N)
    std::size_t count = 0;
};

struct QualityReport {
    std::map<std::string, HumanAgreement> human;
    std::map<std::string, RatingStats> model;

    json to_json() const {
        json j;
        j["metadata"] = {{"agreement", "exact label match"}, {"stdev_divisor", "N"}};
        json h = json::object();
        for (const auto& [pair, s] : human)
            h[pair] = {{"a1_mean", s.a1_mean}, {"a2_mean", s.a2_mean},
                       {"agreement_pct", s.agreement_pct}, {"n", s.count}};
        json m = json::object();
        for (const auto& [pair, s] : model)
            m[pair] = {{"rating_mean", s.mean}, {"rating_stdev", s.stdev}, {"n", s.count}};
        j["human"] = std::move(h);
        j["model"] = std::move(m);
        return j;
    }
};

inline std::vector<HumanRatingRecord> load_human_ratings(const std::filesystem::path& path) {
    std::vector<HumanRatingRecord> out;
    jsonl::for_each(path, [&](const json& j, std::size_t line) {
        HumanRatingRecord r{j.at("task_id").is_string() ? j.at("task_id").get<std::string>()
                                                         : j.at("task_id").dump(),
                            j.at("lang_pair").get<std::string>(), j.at("rater1").get<int>(),
                            j.at("rater2").get<int>()};
        if ((r.rater1 != 0 && r.rater1 != 1) || (r.rater2 != 0 && r.rater2 != 1))
            throw FormatError(path.filename().string() + ":" + std::to_string(line) +
                              ": rater labels must be 0 or 1");
        out.push_back(std::move(r));
    });
    return out;
}

inline std::vector<ModelRatingRecord> load_model_ratings(const std::filesystem::path& path) {
    std::vector<ModelRatingRecord> out;
    jsonl::for_each(path, [&](const json& j, std::size_t line) {
        ModelRatingRecord r{j.at("task_id").is_string() ? j.at("task_id").get<std::string>()
                                                         : j.at("task_id").dump(),
                            j.at("lang_pair").get<std::string>(), j.at("rating").get<int>()};
        if (r.rating < 1 || r.rating > 5)
            throw FormatError(path.filename().string() + ":" + std::to_string(line) +
                              ": rating must be in 1..5");
        out.push_back(std::move(r));
    });
    return out;
}

namespace detail {

template <typename Record>
std::map<std::string, std::vector<const Record*>>
group_by_pair(const std::vector<Record>& records, const std::vector<std::string>& requested) {
    std::map<std::string, std::vector<const Record*>> groups;
    for (const auto& r : records)
        groups[r.lang_pair].push_back(&r);
    if (!requested.empty()) {
        std::map<std::string, std::vector<const Record*>> picked;
        for (const auto& p : requested) {
            auto it = groups.find(p);
            if (it == groups.end() || it->second.empty())
                throw InvalidArgument("no rating records for language pair " + p);
            picked[p] = it->second;
        }
        return picked;
    }
    if (groups.empty())
        throw InvalidArgument("no rating records");
    return groups;
}

} // namespace detail

// Per language pair: rater means and exact-match agreement percentage.
// With `requested` empty every pair present in `records` is reported.
inline std::map<std::string, HumanAgreement>
human_agreement_stats(const std::vector<HumanRatingRecord>& records,
                      const std::vector<std::string>& requested = {}) {
    std::map<std::string, HumanAgreement> out;
    for (const auto& [pair, group] : detail::group_by_pair(records, requested)) {
        std::size_t s1 = 0, s2 = 0, agree = 0;
        for (const auto* r : group) {
            if ((r->rater1 != 0 && r->rater1 != 1) || (r->rater2 != 0 && r->rater2 != 1))
                throw InvalidArgument("rater labels must be 0 or 1 (task " + r->task_id + ")");
            s1 += static_cast<std::size_t>(r->rater1);
            s2 += static_cast<std::size_t>(r->rater2);
            agree += r->rater1 == r->rater2 ? 1 : 0;
        }
        const double n = static_cast<double>(group.size());
        out[pair] = {static_cast<double>(s1) / n, static_cast<double>(s2) / n,
                     100.0 * static_cast<double>(agree) / n, group.size()};
    }
    return out;
}

inline std::map<std::string, RatingStats>
model_rating_stats(const std::vector<ModelRatingRecord>& records,
                   const std::vector<std::string>& requested = {}) {
    std::map<std::string, RatingStats> out;
    for (const auto& [pair, group] : detail::group_by_pair(records, requested)) {
        long long sum = 0;
        for (const auto* r : group) {
            if (r->rating < 1 || r->rating > 5)
                throw InvalidArgument("rating out of range 1..5 (task " + r->task_id + ")");
            sum += r->rating;
        }
        const double n = static_cast<double>(group.size());
        const double mean = static_cast<double>(sum) / n;
        double ss = 0;
        for (const auto* r : group)
            ss += (r->rating - mean) * (r->rating - mean);
        out[pair] = {mean, std::sqrt(ss / n), group.size()};
    }
    return out;
}

inline QualityReport quality_report(const std::vector<HumanRatingRecord>& human,
                                    const std::vector<ModelRatingRecord>& model) {
    QualityReport q;
    if (!human.empty())
        q.human = human_agreement_stats(human);
    if (!model.empty())
        q.model = model_rating_stats(model);
    return q;
}

} // namespace xlcode::corpus
