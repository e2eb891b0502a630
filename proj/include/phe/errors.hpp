#pragma once

#include <stdexcept>
#include <string>

namespace phe {

// Error classes map onto CLI exit codes (2 config, 3 data, 4 numerical).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace phe
