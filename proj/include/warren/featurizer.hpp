#pragma once

#include <string_view>

#include "warren/tokenizer.hpp"
#include "warren/types.hpp"

namespace warren {

// Maps a feature string to its 64-bit id. Deterministic across processes
// (fixed seed) so index files are portable. Never returns 0: an unlucky
// hash of 0 is remapped to 1.
Feature featurize(std::string_view s);

// Feature for a token: 0 for structural noncharacter tokens (suppressing
// automatic indexing), featurize(text) otherwise.
Feature json_featurize(const Token& token);

}  // namespace warren
