#pragma once

#include <string_view>

namespace sldc::log {

void warn(std::string_view message);

// Suppresses warnings (tests exercising degenerate inputs).
void set_quiet(bool quiet);

}  // namespace sldc::log
