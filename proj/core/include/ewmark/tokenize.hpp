#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ewmark {

// Lowercase, split on non-alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

// Tokens joined by single spaces (inverse of tokenize up to separators).
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace ewmark
