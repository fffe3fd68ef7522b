#pragma once

#include <span>
#include <string>
#include <vector>

namespace eigenpatch {

/// Subject class. Pneumonia is the positive class.
enum class Label { control = 0, pneumonia = 1 };

inline int to_sign(Label l) { return l == Label::pneumonia ? 1 : -1; }
inline Label from_sign(int y) { return y > 0 ? Label::pneumonia : Label::control; }

inline std::string to_string(Label l) { return l == Label::pneumonia ? "pneumonia" : "control"; }

std::vector<int> to_signs(std::span<const Label> labels);

}  // namespace eigenpatch
