#pragma once

#include <stdexcept>
#include <string>

namespace sanlab {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes, everything else just throws.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sanlab
