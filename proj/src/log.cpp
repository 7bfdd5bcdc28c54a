#include "sldc/log.hpp"

#include <atomic>
#include <iostream>

namespace sldc::log {

namespace {
std::atomic<bool> g_quiet{false};
}

void warn(std::string_view message) {
  if (!g_quiet.load()) std::cerr << "warning: " << message << '\n';
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace sldc::log
