#include "rws/method.hpp"

#include <array>
#include <utility>

#include "rws/error.hpp"

namespace rws {

namespace {

constexpr std::array<std::pair<std::string_view, Method>, 7> kNames{{
    {"ws", Method::ws},
    {"ww", Method::ww},
    {"delta-ww", Method::delta_ww},
    {"reinforce", Method::reinforce},
    {"vimco", Method::vimco},
    {"relax", Method::relax},
    {"concrete", Method::concrete},
}};

}  // namespace

Method parse_method(std::string_view name) {
  for (const auto& [n, m] : kNames)
    if (n == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::string method_name(Method m) {
  for (const auto& [n, mm] : kNames)
    if (mm == m) return std::string(n);
  return "unknown";
}

}  // namespace rws
