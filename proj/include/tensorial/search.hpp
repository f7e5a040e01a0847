#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tensorial/denoiser.hpp"
#include "tensorial/evaluator.hpp"

namespace tensorial {

/// Define-by-run space: (K, S) are categorical, the rank axes are stepped
/// ranges whose bounds depend on the drawn (K, S).
struct SearchSpace {
  std::vector<std::size_t> patch_sizes{4, 8, 16, 24};
  std::vector<std::size_t> strides{1, 2, 4};
  std::size_t rank_step = 4;
  std::size_t rank_k_cap = 80;
  Method method = Method::tucker;
  std::size_t channels = 3;
  std::size_t width = 32;
  std::size_t height = 32;
};

void validate(const SearchSpace& space);

/// Number of patches for (K, S), or 0 when the window does not fit.
std::size_t patch_count(const SearchSpace& space, std::size_t kernel, std::size_t stride);
/// {step, 2·step, …} up to min(N_patches, cap).
std::vector<std::size_t> rank_k_choices(const SearchSpace& space, std::size_t kernel, std::size_t stride);
/// {step, 2·step, …} up to K.
std::vector<std::size_t> rank_p_choices(const SearchSpace& space, std::size_t kernel);

bool is_feasible(const SearchSpace& space, const DenoiserConfig& cfg);
/// Every feasible configuration, in (K, S, rank_k, rank_p) lexicographic order.
std::vector<DenoiserConfig> enumerate_feasible(const SearchSpace& space);

struct FoldScore {
  double clean = 0.0;
  double adv = 0.0;
};

/// Mean over folds of (clean + adv) / 2.
double fitness(std::span<const FoldScore> folds);

enum class TrialStatus { pending, complete, failed };

struct Trial {
  std::size_t trial_id = 0;
  DenoiserConfig config;
  std::vector<FoldScore> folds;
  double fitness = 0.0;
  TrialStatus status = TrialStatus::pending;
  std::string error;
};

nlohmann::json to_json(const Trial& trial);
Trial trial_from_json(const nlohmann::json& doc, Method default_method = Method::tucker);

struct TpeOptions {
  double gamma = 0.25;
  std::size_t n_startup = 10;
  std::size_t candidates = 24;
  double prior_weight = 1.0;
  std::uint64_t seed = 0;
};

/// Search history. Trials of every status count towards the next trial id and
/// duplicate avoidance; only complete trials shape the Parzen densities.
struct TpeState {
  TpeOptions options;
  std::vector<Trial> trials;
};

/// Next configuration. Uniform over unvisited feasible configs until
/// n_startup trials are complete, then the best of `candidates` draws from
/// the good-trial density by l(x)/g(x). A pure function of (seed, trials).
/// Throws ConfigError when the space has no feasible configuration.
DenoiserConfig suggest(const TpeState& state, const SearchSpace& space);

/// Per-fold accuracies of one configuration.
using TrialFunction = std::function<std::vector<FoldScore>(const DenoiserConfig&)>;

/// Runs the objective and folds failures into status=failed.
Trial evaluate_trial(std::size_t trial_id, const DenoiserConfig& config, const TrialFunction& objective);

struct Fold {
  LabeledBatch clean;
  LabeledBatch adversarial;
};

Trial evaluate_trial(std::size_t trial_id, const DenoiserConfig& config, const Evaluator& evaluator,
                     std::span<const Fold> folds);

struct SearchOptions {
  std::size_t budget = 20;
  TpeOptions tpe;
  /// Append-only JSON-lines log; existing entries are resumed from.
  std::optional<std::filesystem::path> log_path;
  /// Trials evaluated concurrently. Batch b suggests from the trials before
  /// b·parallel, so results do not depend on completion order.
  std::size_t parallel = 1;
};

/// Sorted by fitness descending, ties by lower trial id; failed trials last.
std::vector<Trial> run_search(const SearchSpace& space, const TrialFunction& objective, const SearchOptions& options);
std::vector<Trial> run_search(const SearchSpace& space, const Evaluator& evaluator, std::span<const Fold> folds,
                              const SearchOptions& options);

/// Reads a trial log, dropping a torn final line (and truncating the file to
/// the last complete record). Throws FormatError on any other damage.
std::vector<Trial> read_trial_log(const std::filesystem::path& path, Method default_method = Method::tucker);

void sort_trials(std::vector<Trial>& trials);

struct ReportRow {
  std::size_t trial_id;
  DenoiserConfig config;
  double clean;
  double adv;
  double fitness;
};

/// Best `count` complete trials with fold-averaged clean/adv accuracy.
std::vector<ReportRow> top_trials(const std::vector<Trial>& trials, std::size_t count = 10);
nlohmann::json to_json(const std::vector<ReportRow>& rows);

}  // namespace tensorial
