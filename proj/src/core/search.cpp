#include "tensorial/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "tensorial/errors.hpp"
#include "tensorial/rng.hpp"

namespace tensorial {

using nlohmann::json;

namespace {

using ConfigKey = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;

ConfigKey key_of(const DenoiserConfig& c) { return {c.patch.kernel, c.patch.stride, c.rank_k, c.rank_p}; }

DenoiserConfig make_config(const SearchSpace& space, std::size_t k, std::size_t s, std::size_t rk, std::size_t rp) {
  DenoiserConfig c;
  c.patch = PatchConfig{k, s, 0, 1};
  c.method = space.method;
  c.rank_k = rk;
  c.rank_p = rp;
  return c;
}

std::vector<std::size_t> stepped(std::size_t step, std::size_t upper) {
  std::vector<std::size_t> out;
  for (std::size_t v = step; v <= upper; v += step) out.push_back(v);
  return out;
}

// Categorical Parzen estimate over `choices` with additive prior smoothing.
std::vector<double> parzen(const std::vector<std::size_t>& choices, const std::vector<std::size_t>& observed,
                           double prior) {
  std::vector<double> w(choices.size(), prior);
  for (std::size_t v : observed) {
    const auto it = std::find(choices.begin(), choices.end(), v);
    if (it != choices.end()) w[static_cast<std::size_t>(it - choices.begin())] += 1.0;
  }
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

std::size_t sample_index(const std::vector<double>& weights, SplitMix64& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

double weight_of(const std::vector<std::size_t>& choices, const std::vector<double>& w, std::size_t v) {
  const auto it = std::find(choices.begin(), choices.end(), v);
  return w[static_cast<std::size_t>(it - choices.begin())];
}

struct Split {
  std::vector<const Trial*> good;
  std::vector<const Trial*> bad;
};

template <typename F>
std::vector<std::size_t> project(const std::vector<const Trial*>& trials, F&& field) {
  std::vector<std::size_t> out;
  out.reserve(trials.size());
  for (const Trial* t : trials) out.push_back(field(*t));
  return out;
}

std::string status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::pending: return "pending";
    case TrialStatus::complete: return "complete";
    case TrialStatus::failed: return "failed";
  }
  return "pending";
}

TrialStatus parse_status(const std::string& s) {
  if (s == "complete") return TrialStatus::complete;
  if (s == "failed") return TrialStatus::failed;
  if (s == "pending") return TrialStatus::pending;
  throw FormatError("unknown trial status '" + s + "'");
}

}  // namespace

void validate(const SearchSpace& space) {
  if (space.patch_sizes.empty() || space.strides.empty()) throw ConfigError("search space has an empty categorical list");
  if (space.rank_step == 0) throw ConfigError("rank_step must be >= 1");
  if (space.rank_k_cap == 0) throw ConfigError("rank_k_cap must be >= 1");
  if (space.channels == 0 || space.width == 0 || space.height == 0) throw ConfigError("image dims must be >= 1");
  for (std::size_t k : space.patch_sizes)
    if (k == 0) throw ConfigError("patch sizes must be >= 1");
  for (std::size_t s : space.strides)
    if (s == 0) throw ConfigError("strides must be >= 1");
}

std::size_t patch_count(const SearchSpace& space, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0 || kernel > space.width || kernel > space.height) return 0;
  const PatchConfig cfg{kernel, stride, 0, 1};
  return grid_extent(cfg, space.width) * grid_extent(cfg, space.height);
}

std::vector<std::size_t> rank_k_choices(const SearchSpace& space, std::size_t kernel, std::size_t stride) {
  const std::size_t n = patch_count(space, kernel, stride);
  if (n == 0) return {};
  return stepped(space.rank_step, std::min(n, space.rank_k_cap));
}

std::vector<std::size_t> rank_p_choices(const SearchSpace& space, std::size_t kernel) {
  return stepped(space.rank_step, kernel);
}

bool is_feasible(const SearchSpace& space, const DenoiserConfig& cfg) {
  const auto& ks = space.patch_sizes;
  const auto& ss = space.strides;
  if (std::find(ks.begin(), ks.end(), cfg.patch.kernel) == ks.end()) return false;
  if (std::find(ss.begin(), ss.end(), cfg.patch.stride) == ss.end()) return false;
  if (cfg.patch.padding != 0 || cfg.patch.dilation != 1 || cfg.method != space.method) return false;
  const auto rk = rank_k_choices(space, cfg.patch.kernel, cfg.patch.stride);
  const auto rp = rank_p_choices(space, cfg.patch.kernel);
  return std::find(rk.begin(), rk.end(), cfg.rank_k) != rk.end() &&
         std::find(rp.begin(), rp.end(), cfg.rank_p) != rp.end();
}

std::vector<DenoiserConfig> enumerate_feasible(const SearchSpace& space) {
  validate(space);
  std::vector<DenoiserConfig> out;
  for (std::size_t k : space.patch_sizes)
    for (std::size_t s : space.strides)
      for (std::size_t rk : rank_k_choices(space, k, s))
        for (std::size_t rp : rank_p_choices(space, k)) out.push_back(make_config(space, k, s, rk, rp));
  return out;
}

double fitness(std::span<const FoldScore> folds) {
  if (folds.empty()) throw ArgumentError("fitness needs at least one fold");
  double sum = 0.0;
  for (const auto& f : folds) sum += (f.clean + f.adv) / 2.0;
  return sum / static_cast<double>(folds.size());
}

json to_json(const Trial& t) {
  json folds = json::array();
  for (const auto& f : t.folds) folds.push_back({{"clean", f.clean}, {"adv", f.adv}});
  json doc{{"trial_id", t.trial_id},
           {"config",
            {{"patch", t.config.patch.kernel},
             {"stride", t.config.patch.stride},
             {"method", std::string(to_string(t.config.method))},
             {"rank_k", t.config.rank_k},
             {"rank_p", t.config.rank_p}}},
           {"folds", folds},
           {"fitness", t.status == TrialStatus::complete ? json(t.fitness) : json(nullptr)},
           {"status", status_name(t.status)}};
  if (!t.error.empty()) doc["error"] = t.error;
  return doc;
}

Trial trial_from_json(const json& doc, Method default_method) {
  try {
    Trial t;
    t.trial_id = doc.at("trial_id").get<std::size_t>();
    const auto& c = doc.at("config");
    t.config.patch = PatchConfig{c.at("patch").get<std::size_t>(), c.at("stride").get<std::size_t>(), 0, 1};
    t.config.method = c.contains("method") ? parse_method(c.at("method").get<std::string>()) : default_method;
    t.config.rank_k = c.at("rank_k").get<std::size_t>();
    t.config.rank_p = c.at("rank_p").get<std::size_t>();
    for (const auto& f : doc.at("folds")) t.folds.push_back({f.at("clean").get<double>(), f.at("adv").get<double>()});
    t.status = parse_status(doc.at("status").get<std::string>());
    if (t.status == TrialStatus::complete) t.fitness = doc.at("fitness").get<double>();
    if (doc.contains("error")) t.error = doc.at("error").get<std::string>();
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed trial record: ") + e.what());
  }
}

DenoiserConfig suggest(const TpeState& state, const SearchSpace& space) {
  const auto& opt = state.options;
  if (!(opt.gamma > 0.0 && opt.gamma < 1.0)) throw ConfigError("TPE gamma must lie in (0, 1)");
  const auto feasible = enumerate_feasible(space);
  if (feasible.empty()) {
    throw ConfigError("search space has no feasible configuration for a " + std::to_string(space.width) + "x" +
                      std::to_string(space.height) + " image");
  }

  const std::size_t trial_id = state.trials.size();
  SplitMix64 rng(opt.seed ^ (0x9E3779B97F4A7C15ULL * (trial_id + 1)));
  rng.next();

  std::set<ConfigKey> visited;
  for (const auto& t : state.trials) visited.insert(key_of(t.config));
  std::vector<DenoiserConfig> unvisited;
  for (const auto& c : feasible)
    if (!visited.count(key_of(c))) unvisited.push_back(c);

  auto uniform_draw = [&]() {
    const auto& pool = unvisited.empty() ? feasible : unvisited;
    return pool[rng.below(pool.size())];
  };

  std::vector<const Trial*> complete;
  for (const auto& t : state.trials)
    if (t.status == TrialStatus::complete && is_feasible(space, t.config)) complete.push_back(&t);
  if (complete.size() < std::max<std::size_t>(opt.n_startup, 2)) return uniform_draw();

  std::stable_sort(complete.begin(), complete.end(), [](const Trial* a, const Trial* b) {
    if (a->fitness != b->fitness) return a->fitness > b->fitness;
    return a->trial_id < b->trial_id;
  });
  const std::size_t n = complete.size();
  std::size_t n_good = static_cast<std::size_t>(std::ceil(opt.gamma * static_cast<double>(n)));
  n_good = std::clamp<std::size_t>(n_good, 1, n - 1);
  Split split{{complete.begin(), complete.begin() + static_cast<std::ptrdiff_t>(n_good)},
              {complete.begin() + static_cast<std::ptrdiff_t>(n_good), complete.end()}};

  // Patch sizes and, per patch size, strides that admit at least one config.
  std::vector<std::size_t> ks;
  std::map<std::size_t, std::vector<std::size_t>> ss_for;
  for (std::size_t k : space.patch_sizes)
    for (std::size_t s : space.strides)
      if (!rank_k_choices(space, k, s).empty() && !rank_p_choices(space, k).empty()) {
        if (ss_for[k].empty()) ks.push_back(k);
        ss_for[k].push_back(s);
      }

  const double prior = opt.prior_weight;
  auto kernel_of = [](const Trial& t) { return t.config.patch.kernel; };
  auto stride_of = [](const Trial& t) { return t.config.patch.stride; };
  auto rank_k_of = [](const Trial& t) { return t.config.rank_k; };
  auto rank_p_of = [](const Trial& t) { return t.config.rank_p; };
  const auto good_k = project(split.good, kernel_of), bad_k = project(split.bad, kernel_of);
  const auto good_s = project(split.good, stride_of), bad_s = project(split.bad, stride_of);
  const auto good_rk = project(split.good, rank_k_of), bad_rk = project(split.bad, rank_k_of);
  const auto good_rp = project(split.good, rank_p_of), bad_rp = project(split.bad, rank_p_of);

  const auto l_k = parzen(ks, good_k, prior), g_k = parzen(ks, bad_k, prior);

  std::optional<DenoiserConfig> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t draw = 0; draw < std::max<std::size_t>(opt.candidates, 1); ++draw) {
    const std::size_t k = ks[sample_index(l_k, rng)];
    const auto& ss = ss_for[k];
    const auto l_s = parzen(ss, good_s, prior), g_s = parzen(ss, bad_s, prior);
    const std::size_t s = ss[sample_index(l_s, rng)];
    const auto rks = rank_k_choices(space, k, s);
    const auto rps = rank_p_choices(space, k);
    const auto l_rk = parzen(rks, good_rk, prior), g_rk = parzen(rks, bad_rk, prior);
    const auto l_rp = parzen(rps, good_rp, prior), g_rp = parzen(rps, bad_rp, prior);
    const std::size_t rk = rks[sample_index(l_rk, rng)];
    const std::size_t rp = rps[sample_index(l_rp, rng)];

    const DenoiserConfig cand = make_config(space, k, s, rk, rp);
    if (!unvisited.empty() && visited.count(key_of(cand))) continue;
    const double score = std::log(weight_of(ks, l_k, k)) - std::log(weight_of(ks, g_k, k)) +
                         std::log(weight_of(ss, l_s, s)) - std::log(weight_of(ss, g_s, s)) +
                         std::log(weight_of(rks, l_rk, rk)) - std::log(weight_of(rks, g_rk, rk)) +
                         std::log(weight_of(rps, l_rp, rp)) - std::log(weight_of(rps, g_rp, rp));
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  if (best) return *best;
  return uniform_draw();
}

Trial evaluate_trial(std::size_t trial_id, const DenoiserConfig& config, const TrialFunction& objective) {
  Trial t;
  t.trial_id = trial_id;
  t.config = config;
  try {
    t.folds = objective(config);
    if (t.folds.empty()) throw ArgumentError("evaluation produced no folds");
    for (const auto& f : t.folds) {
      if (!(f.clean >= 0.0 && f.clean <= 1.0 && f.adv >= 0.0 && f.adv <= 1.0)) {
        throw EvaluatorError("fold accuracy outside [0, 1]");
      }
    }
    t.fitness = fitness(t.folds);
    t.status = TrialStatus::complete;
  } catch (const std::exception& e) {
    t.folds.clear();
    t.fitness = 0.0;
    t.status = TrialStatus::failed;
    t.error = e.what();
  }
  return t;
}

Trial evaluate_trial(std::size_t trial_id, const DenoiserConfig& config, const Evaluator& evaluator,
                     std::span<const Fold> folds) {
  if (folds.empty()) throw ArgumentError("evaluate_trial needs at least one fold");
  return evaluate_trial(trial_id, config, [&](const DenoiserConfig& cfg) {
    std::vector<FoldScore> scores;
    for (const auto& fold : folds) {
      const Accuracy a = evaluator.evaluate(fold.clean, fold.adversarial, cfg);
      scores.push_back({a.clean, a.adversarial});
    }
    return scores;
  });
}

std::vector<Trial> read_trial_log(const std::filesystem::path& path, Method default_method) {
  std::vector<Trial> trials;
  if (!std::filesystem::exists(path)) return trials;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open trial log '" + path.string() + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const bool torn = nl == std::string::npos;
    const std::string line = content.substr(pos, torn ? std::string::npos : nl - pos);
    const json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      if (torn) break;  // interrupted final write
      throw FormatError("trial log '" + path.string() + "' has a malformed record", pos);
    }
    Trial t = trial_from_json(doc, default_method);
    if (t.trial_id != trials.size()) {
      throw FormatError("trial log '" + path.string() + "' is out of order at trial " + std::to_string(t.trial_id),
                        pos);
    }
    trials.push_back(std::move(t));
    if (torn) {
      // A complete record missing only its newline.
      std::ofstream fix(path, std::ios::app);
      fix << '\n';
      good_end = content.size() + 1;
      pos = content.size();
      break;
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < content.size()) std::filesystem::resize_file(path, good_end);
  return trials;
}

void sort_trials(std::vector<Trial>& trials) {
  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    const bool ca = a.status == TrialStatus::complete, cb = b.status == TrialStatus::complete;
    if (ca != cb) return ca;
    if (ca && a.fitness != b.fitness) return a.fitness > b.fitness;
    return a.trial_id < b.trial_id;
  });
}

std::vector<Trial> run_search(const SearchSpace& space, const TrialFunction& objective, const SearchOptions& options) {
  if (options.budget < 1) throw ConfigError("search budget must be >= 1");
  if (options.parallel < 1) throw ConfigError("parallel must be >= 1");
  if (enumerate_feasible(space).empty()) throw ConfigError("search space has no feasible configuration");

  TpeState state{options.tpe, {}};
  std::ofstream log;
  if (options.log_path) {
    state.trials = read_trial_log(*options.log_path, space.method);
    if (state.trials.size() > options.budget) state.trials.resize(options.budget);
    log.open(*options.log_path, std::ios::app);
    if (!log) throw FormatError("cannot append to trial log '" + options.log_path->string() + "'");
  }

  while (state.trials.size() < options.budget) {
    // History visible to this batch: everything before the batch boundary.
    const std::size_t start = state.trials.size();
    const std::size_t boundary = start - start % options.parallel;
    const std::size_t end = std::min(boundary + options.parallel, options.budget);

    TpeState view{state.options, {state.trials.begin(), state.trials.begin() + static_cast<std::ptrdiff_t>(boundary)}};
    for (std::size_t i = boundary; i < start; ++i) {
      Trial pending = state.trials[i];
      pending.status = TrialStatus::pending;
      view.trials.push_back(std::move(pending));
    }
    std::vector<DenoiserConfig> configs;
    for (std::size_t id = start; id < end; ++id) {
      configs.push_back(suggest(view, space));
      Trial pending;
      pending.trial_id = id;
      pending.config = configs.back();
      view.trials.push_back(std::move(pending));
    }

    std::vector<Trial> batch;
    if (configs.size() == 1) {
      batch.push_back(evaluate_trial(start, configs[0], objective));
    } else {
      std::vector<std::future<Trial>> futures;
      for (std::size_t i = 0; i < configs.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] { return evaluate_trial(start + i, configs[i], objective); }));
      }
      for (auto& f : futures) batch.push_back(f.get());
    }
    for (auto& t : batch) {
      if (log.is_open()) log << to_json(t).dump() << '\n' << std::flush;
      state.trials.push_back(std::move(t));
    }
  }

  std::vector<Trial> ranked = std::move(state.trials);
  sort_trials(ranked);
  return ranked;
}

std::vector<Trial> run_search(const SearchSpace& space, const Evaluator& evaluator, std::span<const Fold> folds,
                              const SearchOptions& options) {
  if (folds.empty()) throw ConfigError("search needs at least one fold");
  return run_search(
      space,
      [&](const DenoiserConfig& cfg) {
        std::vector<FoldScore> scores;
        for (const auto& fold : folds) {
          const Accuracy a = evaluator.evaluate(fold.clean, fold.adversarial, cfg);
          scores.push_back({a.clean, a.adversarial});
        }
        return scores;
      },
      options);
}

std::vector<ReportRow> top_trials(const std::vector<Trial>& trials, std::size_t count) {
  std::vector<Trial> sorted = trials;
  sort_trials(sorted);
  std::vector<ReportRow> rows;
  for (const auto& t : sorted) {
    if (rows.size() == count || t.status != TrialStatus::complete) break;
    double clean = 0.0, adv = 0.0;
    for (const auto& f : t.folds) {
      clean += f.clean;
      adv += f.adv;
    }
    const double n = static_cast<double>(t.folds.size());
    rows.push_back({t.trial_id, t.config, clean / n, adv / n, t.fitness});
  }
  return rows;
}

json to_json(const std::vector<ReportRow>& rows) {
  json out = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out.push_back({{"rank", i + 1},
                   {"trial_id", r.trial_id},
                   {"config",
                    {{"patch", r.config.patch.kernel},
                     {"stride", r.config.patch.stride},
                     {"method", std::string(to_string(r.config.method))},
                     {"rank_k", r.config.rank_k},
                     {"rank_p", r.config.rank_p}}},
                   {"clean", r.clean},
                   {"adv", r.adv},
                   {"fitness", r.fitness}});
  }
  return out;
}

}  // namespace tensorial
