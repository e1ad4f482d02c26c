#pragma once

#include <cstdint>
#include <array>
#include <stdexcept>
#include <string>

namespace instaloc {

/// The 13 indoor object classes. The integer encoding is stable and is what
/// goes into PLY files and JSON documents.
enum class SemanticClass : int32_t {
    ceiling = 0,
    floor = 1,
    column = 2,
    beam = 3,
    wall = 4,
    table = 5,
    chair = 6,
    bookcase = 7,
    sofa = 8,
    window = 9,
    door = 10,
    board = 11,
    clutter = 12,
};

constexpr int kSemanticClassCount = 13;

inline const std::array<const char*, kSemanticClassCount>& semantic_class_names() {
    static const std::array<const char*, kSemanticClassCount> names = {
        "ceiling", "floor", "column", "beam", "wall", "table", "chair",
        "bookcase", "sofa", "window", "door", "board", "clutter"};
    return names;
}

inline const char* to_string(SemanticClass c) {
    const int i = static_cast<int>(c);
    if (i < 0 || i >= kSemanticClassCount)
        throw std::out_of_range("SemanticClass: bad value " + std::to_string(i));
    return semantic_class_names()[static_cast<size_t>(i)];
}

inline SemanticClass semantic_class_from_index(int32_t i) {
    if (i < 0 || i >= kSemanticClassCount)
        throw std::out_of_range("SemanticClass: bad index " + std::to_string(i));
    return static_cast<SemanticClass>(i);
}

inline SemanticClass semantic_class_from_name(const std::string& name) {
    const auto& names = semantic_class_names();
    for (int i = 0; i < kSemanticClassCount; ++i)
        if (name == names[static_cast<size_t>(i)]) return static_cast<SemanticClass>(i);
    throw std::invalid_argument("SemanticClass: unknown name '" + name + "'");
}

}  // namespace instaloc
