#pragma once

#include <string>
#include <string_view>

namespace rws {

enum class Method { ws, ww, delta_ww, reinforce, vimco, relax, concrete };

// Names as used on the command line and in CSV output: ws, ww, delta-ww,
// reinforce, vimco, relax, concrete. Throws ConfigError on an unknown name.
Method parse_method(std::string_view name);
std::string method_name(Method m);

// True for the reweighted wake-sleep family.
constexpr bool is_rws(Method m) {
  return m == Method::ws || m == Method::ww || m == Method::delta_ww;
}

}  // namespace rws
