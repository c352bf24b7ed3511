#pragma once

#include <string>
#include <vector>

#include "otta/tensor.hpp"

namespace otta {

/// Entry point behind the `ottalab` binary. Returns the process exit code:
/// 0 success, 1 validation error, 2 numeric failure.
int dispatch(const std::vector<std::string>& args);

// Flag-value parsers, shared with tests.
std::vector<Index> parse_index_list(const std::string& s);
std::vector<std::uint64_t> parse_seed_list(const std::string& s);  // "1..10" or "1,4,9"
std::vector<double> parse_real_list(const std::string& s);

}  // namespace otta
