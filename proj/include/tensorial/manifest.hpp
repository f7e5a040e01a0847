#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tensorial/evaluator.hpp"
#include "tensorial/search.hpp"

namespace tensorial {

/// One fold on disk. Images are CIFAR binary (cifar10 / cifar100) or a
/// tensor container of shape [B, C, W, H]; container folds may name a label
/// container, otherwise every label is 0.
struct FoldSource {
  std::filesystem::path clean;
  std::filesystem::path adversarial;
  std::optional<std::filesystem::path> labels;
  std::string format = "auto";
  std::size_t num_classes = 10;
};

struct EvaluatorSpec {
  std::string kind = "surrogate";
  std::string command;
  std::filesystem::path workdir;
  double tau = 30.0;
};

/// {space{patch_sizes, strides, rank_step, rank_k_cap, method},
///  evaluator{kind, command?, tau?}, folds[{clean, adversarial}], budget, seed, out_dir}
/// Relative paths resolve against the manifest's directory.
struct RunManifest {
  SearchSpace space;
  EvaluatorSpec evaluator;
  std::vector<FoldSource> folds;
  std::size_t budget = 20;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  TpeOptions tpe;
};

/// Parses and validates; image dims in the space come from the first fold.
/// Throws ConfigError or FormatError before any search work starts.
RunManifest load_manifest(const std::filesystem::path& path);

LabeledBatch load_batch(const std::filesystem::path& images, const FoldSource& source);
std::vector<Fold> load_folds(const RunManifest& manifest);
std::unique_ptr<Evaluator> make_evaluator(const EvaluatorSpec& spec);

struct SearchSummary {
  std::filesystem::path log_path;
  std::filesystem::path report_path;
  std::size_t trials = 0;
  std::size_t failed = 0;
  std::vector<ReportRow> top;
};

/// Runs the search, appending to out_dir/trials.jsonl and writing the top-10
/// report to out_dir/top10.json.
SearchSummary run_manifest(const RunManifest& manifest, std::size_t parallel = 1);

}  // namespace tensorial
