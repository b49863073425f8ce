#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aoi::cli {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `aoi` tool. args[0] is the program name. Reads AOI_SEED
// from the environment as the default seed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aoi::cli
