#pragma once

#include <array>
#include <string>
#include <string_view>

#include "error.hpp"

namespace xlcode {

// Report order for every per-language table.
inline constexpr std::array<std::string_view, 6> kLanguages = {"en", "es", "hi", "ja", "ru", "zh"};

inline bool is_known_lang(std::string_view code) {
    for (auto l : kLanguages)
        if (l == code)
            return true;
    return false;
}

inline int lang_rank(std::string_view code) {
    for (std::size_t i = 0; i < kLanguages.size(); ++i)
        if (kLanguages[i] == code)
            return static_cast<int>(i);
    return static_cast<int>(kLanguages.size());
}

inline std::string lang_display_name(std::string_view code) {
    if (code == "en") return "English";
    if (code == "es") return "Spanish";
    if (code == "hi") return "Hindi";
    if (code == "ja") return "Japanese";
    if (code == "ru") return "Russian";
    if (code == "zh") return "Chinese";
    throw InvalidArgument("unknown language code: " + std::string(code));
}

} // namespace xlcode
