#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tightham/errors.hpp"
#include "tightham/pipeline.hpp"

namespace tightham {

inline constexpr int kReportSchemaVersion = 1;

/// Parses argv and runs one subcommand; returns the process exit code
/// (0 success, 1 verification rejection, 2 stage failure, 3 invalid input).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code_for(ErrorKind kind);

/// Seed of trial i in cell j of a bench grid.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial, std::uint64_t cell);

struct WilsonInterval {
  double low = 0;
  double high = 1;
};

WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.96);

nlohmann::json report_to_json(const RunReport& report, const std::string& command);

/// Throws Error{kInternal, "SchemaViolation"} when a required field is missing or mistyped.
void validate_report_schema(const nlohmann::json& report);

/// Whitespace-separated vertex ids; '#' starts a comment.
Tuple read_sequence(std::istream& in);
std::vector<Tuple> read_sequences(std::istream& in);  // one per non-empty line

}  // namespace tightham
