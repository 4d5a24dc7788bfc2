// SPDX-License-Identifier: Apache-2.0
//
// The `groundlens` command line: gen-toy, propagate, evaluate, render, report.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "groundlens/annotations.hpp"
#include "groundlens/fixtures.hpp"
#include "groundlens/relevance.hpp"
#include "groundlens/reporting.hpp"

namespace groundlens {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitUsage = 2, kExitIo = 3 };

struct GenToyOptions {
  FixtureOptions fixture;
  fs::path out;
};

struct PropagateOptions {
  fs::path manifest;
  Method method = Method::chefer_t;
  fs::path out;
  unsigned jobs = 1;
};

struct EvaluateOptions {
  fs::path manifest;
  fs::path volumes;
  fs::path out;
  std::vector<TierSet> tiers;
  unsigned jobs = 1;
};

struct RenderOptions {
  fs::path manifest;
  fs::path volumes;
  fs::path out;
  OverlaySpec overlay;
  unsigned jobs = 1;
};

struct ReportOptions {
  std::vector<fs::path> inputs;
  fs::path out;
};

// Writes outputs, prints a summary to `out` and problems to `err`.
int cmd_gen_toy(const GenToyOptions& options, std::ostream& out, std::ostream& err);
int cmd_propagate(const PropagateOptions& options, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);
int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches. GROUNDLENS_SEED, when set, replaces the
/// gen-toy seed.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace groundlens
