#ifndef ROUTELAB_ERROR_HPP
#define ROUTELAB_ERROR_HPP

#include <stdexcept>

namespace routelab {

// Malformed configuration or bad command usage. CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid domain input or artifact content. CLI exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient. CLI exit code 3.
struct NumericalDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace routelab

#endif  // ROUTELAB_ERROR_HPP
