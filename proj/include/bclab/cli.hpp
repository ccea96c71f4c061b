#ifndef BCLAB_CLI_HPP
#define BCLAB_CLI_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bclab/thinning.hpp"

namespace bclab::cli {

inline constexpr std::string_view kVersion = "bclab 0.1.0";

/// Entry point shared by the executable and the tests. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 17 significant digits, '.' decimal point.
std::string format_real(double x);

/// Parses a p,a CSV (optional "p,a" header, '#' comments). Errors cite the line number.
ThinningInput read_thinning_csv(std::istream& in);

/// Payload of an output file: CSV lines not starting with '#', or the "payload" member of a JSON document.
std::string payload_of(const std::string& file_contents);

}  // namespace bclab::cli

#endif  // BCLAB_CLI_HPP
