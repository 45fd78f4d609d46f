#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace icrm {

// The three rhythm classes. The integer encoding is stable: it is the
// classifier output index, the one-hot target position, and the label byte
// in wire payloads and label-map files.
enum class ClassLabel : std::uint8_t {
    AFB = 0, // atrial fibrillation
    AFL = 1, // atrial flutter
    NSR = 2, // normal sinus rhythm
};

inline constexpr std::size_t kNumClasses = 3;

constexpr const char* to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::AFB: return "AFB";
        case ClassLabel::AFL: return "AFL";
        case ClassLabel::NSR: return "NSR";
    }
    return "?";
}

// Accepts "afb"/"AFB" etc.
std::optional<ClassLabel> label_from_string(std::string_view text);

} // namespace icrm
