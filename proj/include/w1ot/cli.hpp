// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "w1ot/lipschitz_net.hpp"

namespace w1ot {

enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitUsage = 2 };

/// Runs one command. `args` excludes the program name. Machine output goes
/// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BenchRow {
  Index dim = 0;
  double ms_per_1000_iters = 0.0;
};

/// Dual-stage timing on Gaussian data (source N(0, I), target N(1, I)) with
/// `n` rows per side, one entry per dimension.
std::vector<BenchRow> bench_dual(const std::vector<Index>& dims, long iters, Index n, std::uint64_t seed,
                                 const PotentialNetConfig& net_cfg, std::ostream* log = nullptr);

}  // namespace w1ot
