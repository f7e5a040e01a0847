#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "tensorial/decomposition.hpp"
#include "tensorial/denoiser.hpp"
#include "tensorial/errors.hpp"
#include "tensorial/evaluator.hpp"
#include "tensorial/io.hpp"
#include "tensorial/kernel.hpp"
#include "tensorial/linalg.hpp"
#include "tensorial/patching.hpp"
#include "tensorial/search.hpp"

using namespace tensorial;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("tensorial_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

template <class E>
bool throws(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Matrix as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) { return Matrix(rows, cols, t.values()); }

Outcome fold_unfold() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int cases = 0, draws = 0;
  while (cases < 500) {
    ++draws;
    const std::size_t c = 1 + rng() % 3, w = 8 + rng() % 57, h = 8 + rng() % 57;
    PatchConfig cfg{.kernel = 1 + rng() % 8, .stride = 1 + rng() % 4, .padding = rng() % 3, .dilation = 1 + rng() % 2};
    if (oracle::grid_positions(w, cfg) == 0 || oracle::grid_positions(h, cfg) == 0) continue;
    if (!coverage_map(cfg, c, w, h).fully_covered()) continue;
    Tensor img = oracle::random_tensor({c, w, h}, rng, 0.0, 1.0);
    worst = std::max(worst, oracle::max_abs_diff(merge_patches(extract_patches(img, cfg)), img));
    ++cases;
  }
  return {worst <= 1e-12, fmt("cases=%d (drawn %d) max_abs_error=%.3e tol=1e-12", cases, draws, worst)};
}

Outcome coverage_oracle() {
  std::size_t configs = 0, mismatches = 0;
  for (std::size_t k = 1; k <= 8; ++k)
    for (std::size_t s = 1; s <= 4; ++s)
      for (std::size_t p = 0; p <= 2; ++p)
        for (std::size_t d = 1; d <= 2; ++d)
          for (std::size_t w = 1; w <= 16; ++w)
            for (std::size_t h = 1; h <= 16; ++h) {
              PatchConfig cfg{.kernel = k, .stride = s, .padding = p, .dilation = d};
              const bool fits = oracle::grid_positions(w, cfg) > 0 && oracle::grid_positions(h, cfg) > 0;
              try {
                CoverageMap m = coverage_map(cfg, 1, w, h);
                if (!fits || m.width != w || m.height != h || m.counts != oracle::coverage(cfg, w, h)) ++mismatches;
                ++configs;
              } catch (const Error&) {
                if (fits) ++mismatches;
              }
            }
  return {mismatches == 0 && configs > 0,
          fmt("configs=%zu (K<=8, S<=4, P<=2, D<=2, image<=16x16) mismatches=%zu", configs, mismatches)};
}

Outcome hosvd_bound() {
  std::mt19937_64 rng(202);
  std::size_t bound_violations = 0, hooi_violations = 0;
  double worst_slack = -INFINITY, worst_hooi = -INFINITY;
  for (int trial = 0; trial < 200; ++trial) {
    Shape shape{1 + rng() % 20, 1 + rng() % 3, 1 + rng() % 8, 1 + rng() % 8};
    std::vector<std::size_t> ranks(4);
    for (std::size_t n = 0; n < 4; ++n) ranks[n] = 1 + rng() % shape[n];
    Tensor t = oracle::random_tensor(shape, rng);
    double discarded = 0.0;
    for (std::size_t n = 0; n < 4; ++n) discarded += discarded_energy(svd(matricize(t, n)).singular_values, ranks[n]);
    const double hosvd_err = frobenius_distance(t, tucker_reconstruct(tucker_hosvd(t, ranks)));
    const double slack = hosvd_err - std::sqrt(discarded);
    worst_slack = std::max(worst_slack, slack);
    if (slack > 1e-10) ++bound_violations;
    auto [f, report] = tucker_hooi(t, ranks);
    const double hooi_err = frobenius_distance(t, tucker_reconstruct(f));
    worst_hooi = std::max(worst_hooi, hooi_err - hosvd_err);
    if (hooi_err > hosvd_err + 1e-12) ++hooi_violations;
  }
  return {bound_violations == 0 && hooi_violations == 0,
          fmt("tensors=200 bound_violations=%zu max(err-bound)=%.3e hooi_violations=%zu max(hooi-hosvd)=%.3e",
              bound_violations, worst_slack, hooi_violations, worst_hooi)};
}

Outcome tt_identity() {
  std::mt19937_64 rng(303);
  double worst = 0.0, exact_worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t order = 3 + rng() % 3;
    Shape shape(order);
    for (auto& d : shape) d = 2 + rng() % 6;
    std::vector<std::size_t> ranks(order - 1);
    for (auto& r : ranks) r = 1 + rng() % 4;
    Tensor t = oracle::random_tensor(shape, rng);
    auto [f, report] = tt_svd(t, ranks);
    const double err = frobenius_distance(t, tt_reconstruct(f));
    double pred = 0.0;
    for (double d : report.truncation_residuals) pred += d * d;
    pred = std::sqrt(pred);
    if (pred > 1e-10 * frobenius_norm(t)) {
      worst = std::max(worst, std::fabs(err - pred) / err);
      ++checked;
    } else {
      exact_worst = std::max(exact_worst, err / frobenius_norm(t));
    }
  }
  return {worst <= 1e-8 && exact_worst <= 1e-12,
          fmt("tensors=200 truncated=%zu max |err-sqrt(sum d^2)|/err=%.3e tol=1e-8; untruncated max rel err=%.3e",
              checked, worst, exact_worst)};
}

Outcome brute_force() {
  std::mt19937_64 rng(404);
  double tucker = 0.0, train = 0.0, tucker2 = 0.0, tt_kernel = 0.0;
  auto dim = [&] { return 1 + rng() % 3; };
  for (int trial = 0; trial < 50; ++trial) {
    Shape shape{dim(), dim(), dim(), dim()};
    Shape ranks(4);
    for (std::size_t n = 0; n < 4; ++n) ranks[n] = 1 + rng() % shape[n];
    TuckerFactors f;
    f.core = oracle::random_tensor(ranks, rng);
    for (std::size_t n = 0; n < 4; ++n) f.factors.push_back(oracle::random_matrix(shape[n], ranks[n], rng));
    f.source_shape = shape;
    tucker = std::max(tucker, oracle::max_abs_diff(tucker_reconstruct(f), oracle::tucker(f.core, f.factors)));

    TTFactors g;
    g.ranks = {1, dim(), dim(), dim(), 1};
    for (std::size_t n = 0; n < 4; ++n) g.cores.push_back(oracle::random_tensor({g.ranks[n], shape[n], g.ranks[n + 1]}, rng));
    train = std::max(train, oracle::max_abs_diff(tt_reconstruct(g), oracle::tensor_train(g.cores)));

    const std::size_t d = dim(), p = dim(), q = dim();
    Tucker2Kernel k{oracle::random_tensor({d, d, 1 + rng() % p, 1 + rng() % q}, rng), Matrix(), Matrix()};
    k.factor_in = oracle::random_matrix(p, k.core.dim(2), rng);
    k.factor_out = oracle::random_matrix(q, k.core.dim(3), rng);
    tucker2 = std::max(tucker2, oracle::max_abs_diff(reconstruct_kernel(k).weights(),
                                                     oracle::tucker2_kernel(k.core, k.factor_in, k.factor_out)));

    TTKernel tk;
    const std::size_t r1 = dim(), r2 = dim(), r3 = dim();
    tk.train.ranks = {1, r1, r2, r3, 1};
    tk.train.cores = {oracle::random_tensor({1, d, r1}, rng), oracle::random_tensor({r1, d, r2}, rng),
                      oracle::random_tensor({r2, p, r3}, rng), oracle::random_tensor({r3, q, 1}, rng)};
    const Tensor expected = oracle::tt_kernel(as_matrix(tk.train.cores[0], d, r1), tk.train.cores[1],
                                              tk.train.cores[2], as_matrix(tk.train.cores[3], r3, q));
    tt_kernel = std::max(tt_kernel, oracle::max_abs_diff(reconstruct_kernel(tk).weights(), expected));
  }
  const double worst = std::max({tucker, train, tucker2, tt_kernel});
  return {worst <= 1e-12, fmt("cases=50x4 max_abs_diff tucker=%.2e tt=%.2e tucker2_kernel=%.2e tt_kernel=%.2e tol=1e-12",
                              tucker, train, tucker2, tt_kernel)};
}

Outcome rank_layouts() {
  const Tensor img = synthetic::separable_image(7);
  DenoiserConfig cfg;
  cfg.patch = PatchConfig{.kernel = 8, .stride = 2};
  cfg.rank_k = 24;
  cfg.rank_p = 4;
  const DenoiseResult tucker = denoise(img, cfg);
  cfg.method = Method::tt;
  const DenoiseResult tt = denoise(img, cfg);
  const bool ok = tucker.decomposed_shape == Shape{169, 3, 8, 8} && tucker.report.ranks_used.size() == 4 &&
                  tucker.report.ranks_used[1] == 3 &&
                  tucker.report.ranks_used == std::vector<std::size_t>{24, 3, 4, 4} &&
                  tt.decomposed_shape == Shape{169, 8, 8, 3} &&
                  tt.report.ranks_used == std::vector<std::size_t>{1, 24, 4, 3, 1};
  auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return "[" + s + "]";
  };
  return {ok, "tucker shape=" + join(tucker.decomposed_shape) + " ranks=" + join(tucker.report.ranks_used) +
                  "; tt shape=" + join(tt.decomposed_shape) + " chain=" + join(tt.report.ranks_used)};
}

std::vector<FoldScore> smooth(const DenoiserConfig& c) {
  const double k = static_cast<double>(c.patch.kernel), s = static_cast<double>(c.patch.stride);
  const double rk = static_cast<double>(c.rank_k), rp = static_cast<double>(c.rank_p);
  const double score = std::exp(-std::pow((k - 16) / 8, 2) - std::pow((s - 2) / 2, 2) - std::pow((rk - 40) / 30, 2) -
                                std::pow((rp - 8) / 6, 2));
  return {{score, score * 0.9}};
}

Outcome search_feasibility() {
  SearchSpace space;
  std::size_t suggestions = 0, violations = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    TpeState state;
    state.options.seed = seed;
    for (std::size_t i = 0; i < 100; ++i) {
      DenoiserConfig c = suggest(state, space);
      ++suggestions;
      if (!is_feasible(space, c)) ++violations;
      state.trials.push_back(evaluate_trial(i, c, smooth));
    }
  }
  const FoldScore pair[] = {{0.8393, 0.7160}};
  const double f = fitness(pair);
  return {violations == 0 && suggestions == 10000 && f == 0.77765,
          fmt("suggestions=%zu violations=%zu fitness(0.8393,0.7160)=%.17g", suggestions, violations, f)};
}

Outcome denoising_efficacy() {
  DenoiserConfig cfg;
  cfg.patch = PatchConfig{.kernel = 8, .stride = 2};
  cfg.rank_k = 8;
  cfg.rank_p = 4;
  int improved = 0;
  double gain = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Tensor clean = synthetic::separable_image(1000 + i);
    const Tensor adv = perturb(clean, PerturbationSpec{.norm = Norm::linf, .epsilon = 8.0 / 255.0, .seed = 5000 + i}).image;
    const double before = fidelity(clean, adv).psnr_db;
    const double after = fidelity(clean, denoise(adv, cfg).image).psnr_db;
    if (after > before) ++improved;
    gain += after - before;
  }
  return {improved >= 95, fmt("images=100 improved=%d (need >=95) mean_gain=%.2f dB", improved, gain / 100.0)};
}

double best_fitness(const std::vector<Trial>& trials) {
  double best = -INFINITY;
  for (const auto& t : trials)
    if (t.status == TrialStatus::complete) best = std::max(best, t.fitness);
  return best;
}

Outcome tpe_sanity() {
  SearchSpace small;
  small.patch_sizes = {4, 8};
  small.strides = {1, 2};
  small.width = small.height = 12;
  small.rank_k_cap = 8;
  const std::size_t configs = enumerate_feasible(small).size();
  auto graded = [](const DenoiserConfig& c) -> std::vector<FoldScore> {
    const double miss = (c.patch.kernel != 8) + (c.patch.stride != 2) + (c.rank_k != 8) * 0.5 + (c.rank_p != 4) * 0.5;
    const double score = 1.0 / (1.0 + miss);
    return {{score, score}};
  };
  int found = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SearchOptions opt;
    opt.budget = 30;
    opt.tpe.seed = seed;
    if (best_fitness(run_search(small, graded, opt)) == 1.0) ++found;
  }

  SearchSpace space;
  double tpe_sum = 0.0, random_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SearchOptions opt;
    opt.budget = 30;
    opt.tpe.seed = 9000 + seed;
    tpe_sum += best_fitness(run_search(space, smooth, opt));
    opt.tpe.n_startup = opt.budget;
    random_sum += best_fitness(run_search(space, smooth, opt));
  }
  const double tpe_mean = tpe_sum / 200.0, random_mean = random_sum / 200.0;
  return {configs == 12 && found >= 99 && tpe_mean >= random_mean,
          fmt("space=%zu configs optimum_found=%d/100 (need >=99); budget 30 x 200 seeds: tpe_mean=%.5f "
              "random_mean=%.5f",
              configs, found, tpe_mean, random_mean)};
}

Outcome formats() {
  std::mt19937_64 rng(505);
  const fs::path dir = scratch_dir();
  std::vector<std::string> failures;

  for (int trial = 0; trial < 20; ++trial) {
    Shape shape(1 + rng() % 5);
    for (auto& d : shape) d = 1 + rng() % 5;
    Tensor t = oracle::random_tensor(shape, rng, -1e3, 1e3);
    write_tensor(dir / "t.tnsr", t);
    if (!bit_equal(read_tensor(dir / "t.tnsr"), t)) failures.push_back("container f64");
    if (slurp(dir / "t.tnsr").size() != kContainerFixedHeader + 8 * shape.size() + 8 * t.size())
      failures.push_back("container size");
    Tensor narrowed(shape);
    for (std::size_t i = 0; i < t.size(); ++i) narrowed.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
    write_tensor(dir / "f.tnsr", t, DType::float32);
    if (!bit_equal(read_tensor(dir / "f.tnsr"), narrowed)) failures.push_back("container f32");
  }
  const std::vector<std::uint8_t> good = encode_tensor(Tensor({2, 3}, 1.5));
  auto corrupt = [&](std::size_t at, std::uint8_t v) {
    auto b = good;
    b[at] = v;
    return b;
  };
  auto trailing = good;
  trailing.push_back(0);
  const std::vector<std::vector<std::uint8_t>> bad = {
      corrupt(0, 'X'), corrupt(4, 9), corrupt(8, 7), corrupt(9, 0), {good.begin(), good.end() - 1}, trailing, {}};
  for (const auto& b : bad)
    if (!throws<FormatError>([&] { decode_tensor(b); })) failures.push_back("container negative");

  for (auto variant : {CifarVariant::cifar10, CifarVariant::cifar100}) {
    const bool ten = variant == CifarVariant::cifar10;
    std::vector<std::uint8_t> bytes;
    for (int n = 0; n < 20; ++n) {
      if (!ten) bytes.push_back(static_cast<std::uint8_t>(rng() % 20));
      bytes.push_back(static_cast<std::uint8_t>(rng() % (ten ? 10 : 100)));
      for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(rng()));
    }
    spit(dir / "batch.bin", bytes);
    LabeledBatch b = load_cifar(dir / "batch.bin", variant);
    save_cifar(dir / "again.bin", b, variant);
    LabeledBatch again = load_cifar(dir / "again.bin", variant);
    if (b.size() != 20 || !bit_equal(b.images, again.images) || b.labels != again.labels)
      failures.push_back(ten ? "cifar10 roundtrip" : "cifar100 roundtrip");
    if (ten && slurp(dir / "again.bin") != bytes) failures.push_back("cifar10 bytes");
    for (std::size_t n = 0; n < 20; ++n) {
      const std::size_t rec = n * (ten ? 3073 : 3074);
      if (b.labels[n] != bytes[rec + (ten ? 0 : 1)]) failures.push_back("cifar label");
      if (b.images.data()[n * 3072 + 1234] != bytes[rec + (ten ? 1 : 2) + 1234] / 255.0) failures.push_back("cifar pixel");
    }
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 1);
    spit(dir / "trunc.bin", truncated);
    if (!throws<FormatError>([&] { load_cifar(dir / "trunc.bin", variant); })) failures.push_back("cifar truncation");
    auto label = bytes;
    label[ten ? 0 : 1] = ten ? 10 : 100;
    spit(dir / "label.bin", label);
    if (!throws<FormatError>([&] { load_cifar(dir / "label.bin", variant); })) failures.push_back("cifar label range");
  }

  LabeledBatch batch;
  batch.num_classes = 10;
  batch.images = oracle::random_tensor({3, 3, 8, 8}, rng, 0.0, 1.0);
  batch.labels = {0, 9, 4};
  double expected = 0.0;
  for (double v : batch.images.values()) expected += static_cast<double>(static_cast<float>(v));
  expected /= static_cast<double>(batch.images.size());
  double echoed = NAN;
  try {
    echoed = ExternalEvaluator(std::string(TENSORIAL_PYTHON) + " " + TENSORIAL_ECHO_CLASSIFIER).classify(batch);
  } catch (const std::exception& e) {
    failures.push_back(std::string("echo: ") + e.what());
  }
  if (!(std::fabs(echoed - expected) <= 1e-12)) failures.push_back("echo mismatch");

  std::string detail = fmt("container 20x2 + %zu negatives, cifar10/100 20 records + negatives, echo=%.12f expected=%.12f",
                           bad.size(), echoed, expected);
  if (!failures.empty()) detail += " failures: " + failures.front() + fmt(" (+%zu more)", failures.size() - 1);
  return {failures.empty(), detail};
}

Outcome kernel_arithmetic() {
  std::mt19937_64 rng(606);
  ConvKernel k(oracle::random_tensor({3, 3, 64, 64}, rng));
  auto [low, low_report] = tucker2_factorize(k, 16, 16);
  auto [full, full_report] = tucker2_factorize(k, 64, 64);
  const double err = oracle::relative_diff(k.weights(), reconstruct_kernel(full).weights());
  return {low.parameter_count() == 4352 && err < 1e-10 && full_report.relative_error < 1e-10,
          fmt("factored_parameters=%zu (expect 4352) ratio=%.4f full_rank_relative_error=%.3e tol=1e-10",
              low.parameter_count(), low_report.compression_ratio, err)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fold-unfold-identity", fold_unfold},
      {"coverage-oracle", coverage_oracle},
      {"hosvd-bound", hosvd_bound},
      {"tt-svd-error-identity", tt_identity},
      {"brute-force-reconstruction", brute_force},
      {"rank-layouts", rank_layouts},
      {"search-feasibility", search_feasibility},
      {"denoising-efficacy", denoising_efficacy},
      {"tpe-sanity", tpe_sanity},
      {"formats", formats},
      {"kernel-compression-arithmetic", kernel_arithmetic},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (name == "fold-unfold-identity" && secs >= 30.0) o.pass = false;
    if (name == "denoising-efficacy" && secs >= 300.0) o.pass = false;
    if (!o.pass) ++failed;
    std::printf("%s %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  fs::remove_all(scratch_dir());
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
