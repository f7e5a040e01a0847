#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "tensorial/denoiser.hpp"
#include "tensorial/io.hpp"

namespace tensorial {

struct Accuracy {
  double clean = 0.0;
  double adversarial = 0.0;
};

/// Scores a denoiser configuration on an index-aligned clean/adversarial pair.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::string_view kind() const = 0;
  virtual Accuracy evaluate(const LabeledBatch& clean, const LabeledBatch& adversarial,
                            const DenoiserConfig& cfg) const = 0;
};

/// Classifier-free proxy: an image counts as correct when its denoised version
/// reaches PSNR >= tau dB against the clean reference. Validates pipeline
/// mechanics only; it says nothing about real classifier accuracy.
class SurrogateEvaluator final : public Evaluator {
 public:
  explicit SurrogateEvaluator(double tau_db);
  std::string_view kind() const override { return "surrogate"; }
  Accuracy evaluate(const LabeledBatch& clean, const LabeledBatch& adversarial,
                    const DenoiserConfig& cfg) const override;
  double tau() const noexcept { return tau_; }

 private:
  double tau_;
};

/// Runs an external classifier once per batch. Each call gets a fresh scratch
/// directory holding
///   images.tnsr    float32 [B, C, W, H] denoised images
///   labels.tnsr    float32 [B] labels
///   manifest.json  {"images": path, "labels": path, "num_classes": n}
/// The command runs through /bin/sh in `workdir` with `{manifest}` replaced by
/// the manifest path (appended as the last argument when absent). It must exit
/// 0 and print {"accuracy": <real in [0,1]>} on standard output.
class ExternalEvaluator final : public Evaluator {
 public:
  ExternalEvaluator(std::string command, std::filesystem::path workdir = std::filesystem::current_path());
  std::string_view kind() const override { return "external"; }
  Accuracy evaluate(const LabeledBatch& clean, const LabeledBatch& adversarial,
                    const DenoiserConfig& cfg) const override;

  /// One protocol round trip on an already denoised batch.
  double classify(const LabeledBatch& batch) const;

 private:
  std::string command_;
  std::filesystem::path workdir_;
};

LabeledBatch denoise_batch(const LabeledBatch& batch, const DenoiserConfig& cfg);

/// Parses a classifier response; throws EvaluatorError on anything but a JSON
/// object with a numeric "accuracy" in [0, 1].
double parse_accuracy_response(std::string_view output);

}  // namespace tensorial
