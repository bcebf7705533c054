#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "ganmex/data/dataset.hpp"
#include "ganmex/gan/ganmex.hpp"
#include "ganmex/nn/network.hpp"

namespace ganmex::cli {

/// Commands in the order `--help` lists them.
const std::vector<std::string>& command_names();

/// Schema defaults for a command; throws ConfigError for an unknown command.
RunConfig default_config(const std::string& command);

/// Runs a fully merged config, writing every output under `out_dir`.
void execute(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Entry point shared by the executable and the tests. Returns 0 on success,
/// 1 for validation errors and 2 for runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Probability threshold for counting a baseline as reaching its target class.
inline constexpr double kTargetSuccessProbability = 0.8;

struct BaselineSummary {
    std::size_t samples = 0;
    double success_rate = 0.0;
    double mean_distance = 0.0;
    /// Fraction of baselines whose dominant channel matches the input's; set
    /// only for datasets that record per-image colors.
    std::optional<double> color_preservation;
};

/// Generates one baseline per image (targets drawn from `seed`) for up to
/// `max_samples` images of `eval` and scores them with the classifier.
BaselineSummary summarize_baselines(const nn::Network& classifier, const gan::GanmexModel& model,
                                    const data::LabeledDataset& eval, std::size_t max_samples, std::uint64_t seed);

}  // namespace ganmex::cli
