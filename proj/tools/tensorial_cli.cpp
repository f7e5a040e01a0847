// Command-line front end. Talks to the library exclusively through the C API.

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tensorial/tensorial.h"

namespace {

using json = nlohmann::json;

// Fixed exit codes.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

int exit_code(tnsr_status s) {
  switch (s) {
    case TNSR_OK: return kExitOk;
    case TNSR_ERR_FORMAT: return kExitFormat;
    case TNSR_ERR_NUMERIC: return kExitNumeric;
    case TNSR_ERR_INTERNAL: return kExitInternal;
    default: return kExitConfig;
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Failure {
  tnsr_status status;
};

void check(tnsr_status s) {
  if (s != TNSR_OK) throw Failure{s};
}

struct TensorDeleter {
  void operator()(tnsr_tensor* t) const { tnsr_tensor_free(t); }
};
using TensorPtr = std::unique_ptr<tnsr_tensor, TensorDeleter>;

TensorPtr load_image(const std::string& path) {
  tnsr_tensor* t = nullptr;
  check(tnsr_image_read(path.c_str(), &t));
  return TensorPtr(t);
}

std::vector<std::size_t> as_vector(const std::size_t* values, std::size_t n) { return {values, values + n}; }

json number_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

// Accepts "0.03", "8/255" or "128 / 255".
double parse_fraction(const std::string& text) {
  auto parse_number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse '" + text + "' as a number or fraction");
    }
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw UsageError("cannot parse '" + text + "' as a number or fraction");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_number(text);
  const double num = parse_number(text.substr(0, slash));
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) throw UsageError("fraction '" + text + "' has a zero denominator");
  return num / den;
}

std::vector<std::size_t> parse_rank_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument("bad rank");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--ranks expects positive integers like 1,4,4, got '" + text + "'");
    }
  }
  return out;
}

struct DenoiseArgs {
  std::string input, output, method = "tucker";
  unsigned patch = 8, stride = 2, pad = 0, dilation = 1, rank_k = 24, rank_p = 20;
  bool hosvd_only = false;
};

int run_denoise(const DenoiseArgs& a) {
  tnsr_denoiser_config cfg;
  tnsr_denoiser_config_init(&cfg);
  cfg.patch = a.patch;
  cfg.stride = a.stride;
  cfg.padding = a.pad;
  cfg.dilation = a.dilation;
  if (a.method == "tucker") cfg.method = TNSR_TUCKER;
  else if (a.method == "tt") cfg.method = TNSR_TT;
  else throw UsageError("--method must be tucker or tt");
  cfg.rank_k = a.rank_k;
  cfg.rank_p = a.rank_p;
  cfg.hosvd_only = a.hosvd_only ? 1 : 0;

  const TensorPtr image = load_image(a.input);
  tnsr_tensor* raw = nullptr;
  tnsr_report report{};
  check(tnsr_denoise(image.get(), &cfg, &raw, &report));
  const TensorPtr out(raw);

  const auto used = as_vector(report.ranks_used, report.n_ranks);
  const auto requested = as_vector(report.ranks_requested, report.n_ranks);
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i] < requested[i]) {
      std::cerr << "warning: rank " << requested[i] << " at position " << i << " clamped to " << used[i]
                << " for decomposed shape " << json(as_vector(report.decomposed_shape, report.n_shape)).dump() << '\n';
    }
  }
  check(tnsr_image_write(a.output.c_str(), out.get()));
  std::cout << json{{"relative_error", report.relative_error},
                    {"iterations", report.iterations},
                    {"ranks_used", used},
                    {"ranks_requested", requested},
                    {"compression_ratio", report.compression_ratio},
                    {"decomposed_shape", as_vector(report.decomposed_shape, report.n_shape)}}
                   .dump()
            << '\n';
  return kExitOk;
}

struct PerturbArgs {
  std::string input, output, norm = "linf", epsilon;
  std::uint64_t seed = 0;
};

int run_perturb(const PerturbArgs& a) {
  tnsr_norm norm;
  if (a.norm == "linf") norm = TNSR_LINF;
  else if (a.norm == "l2") norm = TNSR_L2;
  else throw UsageError("--norm must be linf or l2");
  const double eps = parse_fraction(a.epsilon);

  const TensorPtr image = load_image(a.input);
  tnsr_tensor* raw = nullptr;
  tnsr_perturbation_info info{};
  check(tnsr_perturb(image.get(), norm, eps, a.seed, &raw, &info));
  const TensorPtr out(raw);
  check(tnsr_image_write(a.output.c_str(), out.get()));
  std::cout << json{{"norm", a.norm},
                    {"epsilon", eps},
                    {"seed", a.seed},
                    {"preclip_linf", info.preclip_linf},
                    {"preclip_l2", info.preclip_l2}}
                   .dump()
            << '\n';
  return kExitOk;
}

int run_search(const std::string& manifest, std::size_t parallel) {
  char* summary = nullptr;
  check(tnsr_search_run(manifest.c_str(), parallel, &summary));
  std::cout << summary << '\n';
  tnsr_string_free(summary);
  return kExitOk;
}

struct KernelArgs {
  std::string input, output, method = "tucker2", ranks;
  std::size_t rank_p = 0, rank_q = 0;
  std::optional<double> energy;
};

int run_compress(const KernelArgs& a) {
  tnsr_kernel_options opt{};
  if (a.method == "tucker2") opt.method = TNSR_KERNEL_TUCKER2;
  else if (a.method == "tt") opt.method = TNSR_KERNEL_TT;
  else throw UsageError("--method must be tucker2 or tt");
  opt.rank_p = a.rank_p;
  opt.rank_q = a.rank_q;
  if (!a.ranks.empty()) {
    const auto r = parse_rank_list(a.ranks);
    if (r.size() != 3) throw UsageError("--ranks expects three TT ranks R1,R2,R3");
    std::copy(r.begin(), r.end(), opt.ranks);
  }
  if (a.energy) {
    if (!(*a.energy > 0.0 && *a.energy <= 1.0)) throw UsageError("--energy must lie in (0, 1]");
    opt.energy = *a.energy;
  }

  tnsr_tensor* raw = nullptr;
  check(tnsr_tensor_read(a.input.c_str(), &raw));
  const TensorPtr kernel(raw);
  tnsr_kernel_report report{};
  check(tnsr_compress_kernel(kernel.get(), &opt, a.output.c_str(), &report));
  std::cout << json{{"relative_error", report.relative_error},
                    {"compression_ratio", report.compression_ratio},
                    {"ranks_used", as_vector(report.ranks_used, report.n_ranks)},
                    {"dense_parameters", report.dense_parameters},
                    {"factored_parameters", report.factored_parameters}}
                   .dump()
            << '\n';
  return kExitOk;
}

int run_fidelity(const std::string& reference, const std::string& candidate) {
  const TensorPtr ref = load_image(reference);
  const TensorPtr cand = load_image(candidate);
  tnsr_fidelity f{};
  check(tnsr_fidelity_compute(ref.get(), cand.get(), &f));
  std::cout << json{{"mse", f.mse},
                    {"psnr_db", number_or_inf(f.psnr_db)},
                    {"linf_distance", f.linf_distance},
                    {"l2_distance", f.l2_distance}}
                   .dump()
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-factorization image denoiser and kernel compressor"};
  app.require_subcommand(1);

  DenoiseArgs dn;
  auto* denoise = app.add_subcommand("denoise", "Low-rank patch denoising of one image");
  denoise->add_option("--input", dn.input, "PNG or tensor container [C, W, H]")->required();
  denoise->add_option("--output", dn.output, "Output path (.png or container)")->required();
  denoise->add_option("--patch", dn.patch, "Patch size K")->required();
  denoise->add_option("--stride", dn.stride, "Stride S")->required();
  denoise->add_option("--method", dn.method, "tucker or tt")->required();
  denoise->add_option("--rank-k", dn.rank_k, "Rank along the patch-count axis")->required();
  denoise->add_option("--rank-p", dn.rank_p, "Rank along both patch-pixel axes")->required();
  denoise->add_option("--pad", dn.pad, "Zero padding P");
  denoise->add_option("--dilation", dn.dilation, "Dilation D");
  denoise->add_flag("--hosvd-only", dn.hosvd_only, "Skip HOOI refinement (Tucker)");

  PerturbArgs pt;
  auto* perturb = app.add_subcommand("perturb", "Add seeded bounded noise");
  perturb->add_option("--input", pt.input)->required();
  perturb->add_option("--output", pt.output)->required();
  perturb->add_option("--norm", pt.norm, "linf or l2")->required();
  perturb->add_option("--epsilon", pt.epsilon, "Budget, e.g. 8/255")->required();
  perturb->add_option("--seed", pt.seed)->required();

  std::string manifest;
  std::size_t parallel = 1;
  auto* search = app.add_subcommand("search", "Hyperparameter search driven by a run manifest");
  search->add_option("--manifest", manifest)->required();
  search->add_option("--parallel", parallel, "Concurrent trial evaluations")->check(CLI::PositiveNumber);

  KernelArgs kn;
  double energy = 0.0;
  auto* compress = app.add_subcommand("compress-kernel", "Factorize a 4-D convolution kernel");
  compress->add_option("--input", kn.input, "Tensor container [d, d, P, Q]")->required();
  compress->add_option("--output", kn.output, "Factor bundle index path (JSON)")->required();
  compress->add_option("--method", kn.method, "tucker2 or tt")->required();
  compress->add_option("--rank-p", kn.rank_p);
  compress->add_option("--rank-q", kn.rank_q);
  compress->add_option("--ranks", kn.ranks, "TT ranks R1,R2,R3");
  auto* energy_opt = compress->add_option("--energy", energy, "Retained energy fraction in (0, 1]");

  std::string reference, candidate;
  auto* fid = app.add_subcommand("fidelity", "PSNR and distances between two images");
  fid->add_option("--reference", reference)->required();
  fid->add_option("--candidate", candidate)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (energy_opt->count() > 0) kn.energy = energy;

  try {
    if (*denoise) return run_denoise(dn);
    if (*perturb) return run_perturb(pt);
    if (*search) return run_search(manifest, parallel);
    if (*compress) return run_compress(kn);
    if (*fid) return run_fidelity(reference, candidate);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Failure& f) {
    std::cerr << "error (" << tnsr_status_name(f.status) << "): " << tnsr_last_error() << '\n';
    return exit_code(f.status);
  }
  return kExitInternal;
}
