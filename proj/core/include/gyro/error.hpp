#pragma once

#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace gyro {

// All recoverable failures surface as gyro::Error with a formatted message.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

template <typename... Args>
[[noreturn]] void fail(fmt::format_string<Args...> format, Args&&... args) {
  throw Error(fmt::format(format, std::forward<Args>(args)...));
}

}  // namespace gyro

#define GYRO_CHECK(condition, ...)     \
  do {                                 \
    if (!(condition)) {                \
      ::gyro::fail(__VA_ARGS__);       \
    }                                  \
  } while (0)
