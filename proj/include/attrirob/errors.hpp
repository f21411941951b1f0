#pragma once

#include <stdexcept>
#include <string>

namespace attrirob {

// Exit codes used by the CLI and harness.
inline constexpr int exit_ok = 0;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_divergence = 3;

struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace attrirob
