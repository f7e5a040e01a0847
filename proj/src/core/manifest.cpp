#include "tensorial/manifest.hpp"

#include <fstream>

#include "json.hpp"
#include "tensorial/errors.hpp"

namespace tensorial {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

}  // namespace

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path.string() + "'");
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw FormatError("manifest '" + path.string() + "' is not a JSON object");
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  RunManifest m;
  try {
    if (doc.contains("space")) {
      const auto& s = doc.at("space");
      m.space.patch_sizes = get_or(s, "patch_sizes", m.space.patch_sizes);
      m.space.strides = get_or(s, "strides", m.space.strides);
      m.space.rank_step = get_or(s, "rank_step", m.space.rank_step);
      m.space.rank_k_cap = get_or(s, "rank_k_cap", m.space.rank_k_cap);
      m.space.method = parse_method(get_or<std::string>(s, "method", "tucker"));
    }
    if (doc.contains("evaluator")) {
      const auto& e = doc.at("evaluator");
      m.evaluator.kind = get_or<std::string>(e, "kind", "surrogate");
      m.evaluator.command = get_or<std::string>(e, "command", "");
      m.evaluator.tau = get_or(e, "tau", m.evaluator.tau);
      m.evaluator.workdir = resolve(base, get_or<std::string>(e, "workdir", "."));
    } else {
      m.evaluator.workdir = base;
    }
    if (m.evaluator.kind != "surrogate" && m.evaluator.kind != "external") {
      throw ConfigError("evaluator kind must be surrogate or external, got '" + m.evaluator.kind + "'");
    }
    if (m.evaluator.kind == "external" && m.evaluator.command.empty()) {
      throw ConfigError("external evaluator needs a command");
    }
    for (const auto& f : doc.at("folds")) {
      FoldSource src;
      src.clean = resolve(base, f.at("clean").get<std::string>());
      src.adversarial = resolve(base, f.at("adversarial").get<std::string>());
      if (f.contains("labels")) src.labels = resolve(base, f.at("labels").get<std::string>());
      src.format = get_or<std::string>(f, "format", "auto");
      src.num_classes = get_or<std::size_t>(f, "num_classes", 10);
      m.folds.push_back(std::move(src));
    }
    m.budget = get_or<std::size_t>(doc, "budget", m.budget);
    m.seed = get_or<std::uint64_t>(doc, "seed", 0);
    if (!doc.contains("seed")) throw ConfigError("manifest must set a seed");
    m.out_dir = resolve(base, doc.at("out_dir").get<std::string>());
    if (doc.contains("tpe")) {
      const auto& t = doc.at("tpe");
      m.tpe.gamma = get_or(t, "gamma", m.tpe.gamma);
      m.tpe.n_startup = get_or(t, "n_startup", m.tpe.n_startup);
      m.tpe.candidates = get_or(t, "candidates", m.tpe.candidates);
      m.tpe.prior_weight = get_or(t, "prior_weight", m.tpe.prior_weight);
    }
    m.tpe.seed = m.seed;
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "': " + e.what());
  }

  if (m.folds.empty()) throw ConfigError("manifest lists no folds");
  if (m.budget < 1) throw ConfigError("budget must be >= 1");
  for (const auto& f : m.folds) {
    for (const auto& p : {f.clean, f.adversarial})
      if (!std::filesystem::exists(p)) throw FormatError("fold file '" + p.string() + "' does not exist");
  }

  // Image dims come from the data: peek at the first clean batch.
  const LabeledBatch first = load_batch(m.folds.front().clean, m.folds.front());
  m.space.channels = first.images.dim(1);
  m.space.width = first.images.dim(2);
  m.space.height = first.images.dim(3);
  validate(m.space);
  if (enumerate_feasible(m.space).empty()) {
    throw ConfigError("search space has no feasible configuration for the fold images");
  }
  make_evaluator(m.evaluator);
  return m;
}

LabeledBatch load_batch(const std::filesystem::path& images, const FoldSource& source) {
  std::string format = source.format;
  if (format == "auto") format = is_tensor_container(images) ? "tensor" : "cifar10";
  if (format == "cifar10" || format == "cifar100") return load_cifar(images, parse_cifar_variant(format));
  if (format != "tensor") throw ConfigError("unknown fold format '" + format + "'");

  LabeledBatch batch;
  batch.images = read_tensor(images);
  if (batch.images.ndim() == 3) {
    Shape s = batch.images.shape();
    s.insert(s.begin(), 1);
    batch.images = reshape(batch.images, s);
  }
  if (batch.images.ndim() != 4) throw FormatError("'" + images.string() + "' must hold [B, C, W, H] images");
  batch.num_classes = source.num_classes;
  const std::size_t count = batch.images.dim(0);
  if (source.labels) {
    const Tensor labels = read_tensor(*source.labels);
    if (labels.size() != count) throw FormatError("label file '" + source.labels->string() + "' has the wrong length");
    for (double v : labels.data()) batch.labels.push_back(static_cast<std::int32_t>(v));
  } else {
    batch.labels.assign(count, 0);
  }
  validate(batch);
  return batch;
}

std::vector<Fold> load_folds(const RunManifest& manifest) {
  std::vector<Fold> folds;
  for (const auto& src : manifest.folds) {
    Fold f{load_batch(src.clean, src), load_batch(src.adversarial, src)};
    if (f.clean.images.shape() != f.adversarial.images.shape()) {
      throw ConfigError("fold '" + src.clean.string() + "' clean and adversarial shapes differ");
    }
    const Shape dims{manifest.space.channels, manifest.space.width, manifest.space.height};
    if (Shape(f.clean.images.shape().begin() + 1, f.clean.images.shape().end()) != dims) {
      throw ConfigError("fold '" + src.clean.string() + "' image dims differ from the first fold");
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorSpec& spec) {
  if (spec.kind == "surrogate") return std::make_unique<SurrogateEvaluator>(spec.tau);
  if (spec.kind == "external") {
    return std::make_unique<ExternalEvaluator>(spec.command, spec.workdir.empty() ? std::filesystem::current_path()
                                                                                 : spec.workdir);
  }
  throw ConfigError("unknown evaluator kind '" + spec.kind + "'");
}

SearchSummary run_manifest(const RunManifest& manifest, std::size_t parallel) {
  const auto folds = load_folds(manifest);
  const auto evaluator = make_evaluator(manifest.evaluator);
  std::filesystem::create_directories(manifest.out_dir);

  SearchSummary summary;
  summary.log_path = manifest.out_dir / "trials.jsonl";
  summary.report_path = manifest.out_dir / "top10.json";
  SearchOptions options;
  options.budget = manifest.budget;
  options.tpe = manifest.tpe;
  options.log_path = summary.log_path;
  options.parallel = parallel;
  const auto trials = run_search(manifest.space, *evaluator, folds, options);

  summary.trials = trials.size();
  for (const auto& t : trials)
    if (t.status == TrialStatus::failed) ++summary.failed;
  summary.top = top_trials(trials, 10);
  std::ofstream report(summary.report_path, std::ios::trunc);
  if (!report) throw FormatError("cannot write report '" + summary.report_path.string() + "'");
  report << to_json(summary.top).dump(2) << '\n';
  return summary;
}

}  // namespace tensorial
