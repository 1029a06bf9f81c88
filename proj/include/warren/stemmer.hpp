#pragma once

#include <string>
#include <string_view>

namespace warren {

// Porter's stemming algorithm over a lowercase word. Non-alphabetic or
// very short input is returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace warren
