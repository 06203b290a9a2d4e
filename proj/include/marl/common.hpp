#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace marl {

// Contract violations: bad shapes, invalid actions, out-of-range targets.
// Mapped to exit code 1 by the CLI.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration (bad enum value, unknown key, impossible grid).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format problems: truncated blobs, hash mismatches, bad magic.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

}  // namespace marl

#define MARL_CHECK(cond, ...)                                 \
  do {                                                        \
    if (!(cond)) throw ::marl::ContractError(::marl::strcat(__VA_ARGS__)); \
  } while (0)

#define MARL_CONFIG_CHECK(cond, ...)                          \
  do {                                                        \
    if (!(cond)) throw ::marl::ConfigError(::marl::strcat(__VA_ARGS__)); \
  } while (0)
