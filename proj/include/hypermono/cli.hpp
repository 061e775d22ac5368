#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hypermono::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumeric = 2;

// args excludes the program name. Reports go to `out`, diagnostics and
// usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypermono::cli
