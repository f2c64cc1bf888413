#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace cenet {

/// Entry point behind the `cenet` executable. `args` excludes the program
/// name. Failures print one diagnostic line on `err` and return nonzero.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cenet
