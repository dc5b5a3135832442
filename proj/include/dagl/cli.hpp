#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagl/config.hpp"

namespace dagl {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Bad invocation: missing paths, out-of-range flags.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<Tensor> train;
  std::vector<Tensor> val;  // from <dir>/val when present
};

/// Loads every image in `dir` (and `dir/val`). Throws UsageError if `dir` is
/// missing, ConfigError if it holds no images or the color mode disagrees.
Dataset load_dataset(const std::filesystem::path& dir, ColorMode color);

/// Model built from a checkpoint's embedded config.
Model load_model(const std::filesystem::path& ckpt);

/// Mean and population stddev of neighbor counts across every stage and head.
std::pair<double, double> neighbor_stats(const ForwardTrace& trace);

/// Entry point shared by the executable and the tests. Subcommands: train,
/// denoise, ablate, visualize.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dagl
