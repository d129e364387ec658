#include "mopo/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mopo {

namespace {
std::mutex log_mutex;

bool quiet() {
  const char* v = std::getenv("MOPO_KIT_QUIET");
  return v != nullptr && std::string(v) != "0";
}
}  // namespace

void log_warning(const std::string& message) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "[warn] " << message << '\n';
}

void log_info(const std::string& message) {
  if (quiet()) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "[info] " << message << '\n';
}

}  // namespace mopo
