#include "tensorial/evaluator.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"
#include "tensorial/errors.hpp"

namespace tensorial {

namespace {

using json = nlohmann::json;

void require_aligned(const LabeledBatch& clean, const LabeledBatch& adversarial) {
  validate(clean);
  validate(adversarial);
  if (clean.images.shape() != adversarial.images.shape()) {
    throw ArgumentError("clean and adversarial batches differ in shape");
  }
  if (clean.labels != adversarial.labels) throw ArgumentError("clean and adversarial labels are not index-aligned");
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::filesystem::path make_scratch_dir() {
  static std::atomic<unsigned long> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    auto dir = base / ("tensorial-eval-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

struct ScratchDir {
  std::filesystem::path path = make_scratch_dir();
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace

LabeledBatch denoise_batch(const LabeledBatch& batch, const DenoiserConfig& cfg) {
  LabeledBatch out = batch;
  const std::size_t plane = batch.images.size() / batch.size();
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Tensor denoised = denoise(batch.image(n), cfg).image;
    std::copy(denoised.data().begin(), denoised.data().end(), out.images.data().begin() + static_cast<std::ptrdiff_t>(n * plane));
  }
  return out;
}

SurrogateEvaluator::SurrogateEvaluator(double tau_db) : tau_(tau_db) {
  if (!std::isfinite(tau_db)) throw ConfigError("surrogate tau must be finite");
}

Accuracy SurrogateEvaluator::evaluate(const LabeledBatch& clean, const LabeledBatch& adversarial,
                                      const DenoiserConfig& cfg) const {
  require_aligned(clean, adversarial);
  std::size_t clean_hits = 0, adv_hits = 0;
  for (std::size_t n = 0; n < clean.size(); ++n) {
    const Tensor reference = clean.image(n);
    if (fidelity(reference, denoise(reference, cfg).image).psnr_db >= tau_) ++clean_hits;
    if (fidelity(reference, denoise(adversarial.image(n), cfg).image).psnr_db >= tau_) ++adv_hits;
  }
  const double b = static_cast<double>(clean.size());
  return {static_cast<double>(clean_hits) / b, static_cast<double>(adv_hits) / b};
}

ExternalEvaluator::ExternalEvaluator(std::string command, std::filesystem::path workdir)
    : command_(std::move(command)), workdir_(std::move(workdir)) {
  if (command_.empty()) throw ConfigError("external evaluator needs a command");
}

double parse_accuracy_response(std::string_view output) {
  auto try_parse = [](std::string_view text) -> std::optional<double> {
    const json doc = json::parse(text.begin(), text.end(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("accuracy") || !doc["accuracy"].is_number()) {
      return std::nullopt;
    }
    return doc["accuracy"].get<double>();
  };
  auto value = try_parse(output);
  if (!value) {
    // Tolerate chatter before the response: use the last non-empty line.
    std::string_view rest = output;
    while (!rest.empty() && (rest.back() == '\n' || rest.back() == '\r' || rest.back() == ' ')) rest.remove_suffix(1);
    const auto nl = rest.find_last_of('\n');
    if (nl != std::string_view::npos) value = try_parse(rest.substr(nl + 1));
  }
  if (!value) throw EvaluatorError("classifier response is not {\"accuracy\": <number>}: '" + std::string(output) + "'");
  if (!(*value >= 0.0 && *value <= 1.0)) {
    throw EvaluatorError("classifier accuracy " + std::to_string(*value) + " is outside [0, 1]");
  }
  return *value;
}

double ExternalEvaluator::classify(const LabeledBatch& batch) const {
  validate(batch);
  ScratchDir scratch;
  const auto images = scratch.path / "images.tnsr";
  const auto labels = scratch.path / "labels.tnsr";
  const auto manifest = scratch.path / "manifest.json";
  write_tensor(images, batch.images, DType::float32);
  std::vector<double> label_values(batch.labels.begin(), batch.labels.end());
  write_tensor(labels, Tensor({batch.size()}, std::move(label_values)), DType::float32);
  {
    std::ofstream out(manifest);
    out << json{{"images", images.string()}, {"labels", labels.string()}, {"num_classes", batch.num_classes}}.dump()
        << '\n';
    if (!out) throw EvaluatorError("cannot write evaluator manifest in " + scratch.path.string());
  }

  std::string cmd = command_;
  const std::string token = "{manifest}";
  if (const auto pos = cmd.find(token); pos != std::string::npos) {
    cmd.replace(pos, token.size(), shell_quote(manifest.string()));
  } else {
    cmd += " " + shell_quote(manifest.string());
  }
  cmd = "cd " + shell_quote(workdir_.string()) + " && " + cmd;

  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw EvaluatorError("failed to launch classifier command");
  std::string output;
  char buffer[4096];
  std::size_t n = 0;
  while ((n = std::fread(buffer, 1, sizeof buffer, pipe)) > 0) output.append(buffer, n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw EvaluatorError("classifier command failed (status " + std::to_string(status) + "): " + command_);
  }
  return parse_accuracy_response(output);
}

Accuracy ExternalEvaluator::evaluate(const LabeledBatch& clean, const LabeledBatch& adversarial,
                                     const DenoiserConfig& cfg) const {
  require_aligned(clean, adversarial);
  return {classify(denoise_batch(clean, cfg)), classify(denoise_batch(adversarial, cfg))};
}

}  // namespace tensorial
