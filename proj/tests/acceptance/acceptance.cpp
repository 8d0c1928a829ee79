// One PASS/FAIL/SKIP line per acceptance criterion; exit 1 if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "support/reference.hpp"
#include "xprobe/crosstest.hpp"
#include "xprobe/error.hpp"
#include "xprobe/records_io.hpp"
#include "xprobe/saliency.hpp"
#include "xprobe/subexplain.hpp"
#include "xprobe/synthetic.hpp"

namespace fs = std::filesystem;
using namespace xprobe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::vector<std::uint64_t> bits_of(const std::vector<MseRecord>& records) {
  std::vector<std::uint64_t> out;
  for (const auto& r : records) out.push_back(r.patches.bits());
  return out;
}

const GridSpec k3x3 = make_grid(12, 12, 3, 3);

struct Instance {
  SyntheticOracleSpec spec;
  std::unique_ptr<ClassifierOracle> oracle;
  ImageTensor image;
};

std::vector<Instance> instances_3x3() {
  std::mt19937_64 rng(20240601);
  std::vector<Instance> out;
  for (int i = 0; i < 50; ++i) {
    Instance inst;
    inst.spec = ref::random_spec(rng, k3x3, i % 3);
    inst.oracle = make_synthetic(inst.spec, k3x3, "inst" + std::to_string(i));
    inst.image = ref::noise_image(12, 12, 3, rng);
    out.push_back(std::move(inst));
  }
  return out;
}

const std::vector<double> kThresholds{0.9, 0.8, 0.7, 0.6, 0.5};

Outcome mse_exactness() {
  const auto t0 = Clock::now();
  const auto insts = instances_3x3();
  BeamConfig cfg;
  cfg.beam_width = 126;
  cfg.minimality = Minimality::Exhaustive;
  std::size_t diffs = 0, total = 0;
  for (const auto& inst : insts) {
    ConfidenceCache cache;
    const auto found = bits_of(find_mses(*inst.oracle, inst.image, k3x3, cfg, &cache));
    const auto brute = bits_of(brute_force_mses(*inst.oracle, inst.image, k3x3, cfg.p_h, &cache));
    const auto direct = ref::mses([&](std::uint64_t s) { return ref::synthetic_score(inst.spec, s); }, 9, cfg.p_h);
    if (found != brute || found != direct) ++diffs;
    total += found.size();
  }
  const double secs = seconds_since(t0);
  return check(diffs == 0 && secs < 10.0,
               fmt("%zu/50 instances differ, %zu MSEs total, %.2f s (limit 10 s)", diffs, total, secs));
}

Outcome count_exactness() {
  const auto insts = instances_3x3();
  BeamConfig beam;
  beam.beam_width = 126;
  beam.minimality = Minimality::Exhaustive;
  CountConfig cc;
  cc.thresholds = kThresholds;
  cc.dedup = Dedup::PerImage;
  std::size_t diffs = 0, nodes = 0;
  for (const auto& inst : insts) {
    ConfidenceCache cache;
    const auto roots = find_mses(*inst.oracle, inst.image, k3x3, beam, &cache);
    std::vector<std::vector<SubExplanationNode>> trees;
    for (const auto& r : roots) trees.push_back(expand_subexplanations(*inst.oracle, inst.image, r, cc, &cache));
    const auto counted = count_above_thresholds(trees, cc);
    const auto brute = brute_force_counts(*inst.oracle, inst.image, k3x3, beam.p_h, cc, &cache);
    const auto walk = ref::subexplanation_counts([&](std::uint64_t s) { return ref::synthetic_score(inst.spec, s); }, 9,
                                                 bits_of(roots), kThresholds, cc.stop_fraction);
    if (counted.counts != brute.counts || counted.counts != walk) ++diffs;
    nodes += counted.counts.back();
  }
  return check(diffs == 0, fmt("%zu/50 instances differ, %zu nodes at 0.5 in total", diffs, nodes));
}

Outcome analytic_anchors() {
  std::mt19937_64 rng(5);
  const auto image = ref::noise_image(12, 12, 3, rng);
  CountConfig cc;
  cc.thresholds = kThresholds;

  const auto add = make_synthetic({Additive{std::vector<double>(9, 1.0 / 9.0), Squash::Clamp}}, k3x3, "add");
  const auto add_mses = find_mses(*add, image, k3x3, BeamConfig{}, nullptr);
  std::vector<std::vector<SubExplanationNode>> trees;
  for (const auto& r : add_mses) trees.push_back(expand_subexplanations(*add, image, r, cc, nullptr));
  const auto add_counts = count_above_thresholds(trees, cc);

  const auto conj = make_synthetic({Conjunctive{PatchSet::of({0, 4, 8}, k3x3)}}, k3x3, "conj");
  // A flat conjunctive oracle gives the beam no gradient, so search wide
  // enough to be sure the root exists.
  BeamConfig wide;
  wide.beam_width = 126;
  const auto conj_mses = find_mses(*conj, image, k3x3, wide, nullptr);
  std::vector<std::vector<SubExplanationNode>> ctrees;
  for (const auto& r : conj_mses) ctrees.push_back(expand_subexplanations(*conj, image, r, cc, nullptr));
  const auto conj_counts = count_above_thresholds(ctrees, cc);

  const bool add_ok = add_mses.size() == 1 && add_mses[0].patches.size() == 9 && add_counts.counts.back() == 255 &&
                      255 == ref::choose(9, 5) + ref::choose(9, 6) + ref::choose(9, 7) + ref::choose(9, 8);
  const bool conj_ok = conj_mses.size() == 1 && conj_mses[0].patches == PatchSet::of({0, 4, 8}, k3x3) &&
                       std::all_of(conj_counts.counts.begin(), conj_counts.counts.end(), [](auto c) { return c == 0; });
  return check(add_ok && conj_ok,
               fmt("additive: %zu MSE(s), size %d, %zu nodes at 0.5; conjunctive: %zu MSE(s), max count %zu",
                   add_mses.size(), add_mses.empty() ? 0 : add_mses[0].patches.size(),
                   add_counts.counts.empty() ? 0 : add_counts.counts.back(), conj_mses.size(),
                   conj_counts.counts.empty() ? 0 : *std::max_element(conj_counts.counts.begin(), conj_counts.counts.end())));
}

Outcome curve_numerics() {
  std::size_t bad = 0;
  for (double c : {0.0, 0.1, 0.2, 0.3, 1.0 / 3.0, 0.45, 0.7, 0.9, 0.999, 1.0}) {
    for (int steps : {1, 2, 7, 10, 49, 100, 224, 1000}) {
      if (auc(PerturbationCurve{Direction::Insertion, steps, std::vector<double>(static_cast<std::size_t>(steps) + 1, c)}) != c) ++bad;
    }
  }
  double worst_linear = 0.0;
  for (int steps : {1, 2, 9, 100, 1000, 4096}) {
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) v[static_cast<std::size_t>(t)] = static_cast<double>(t) / steps;
    worst_linear = std::max(worst_linear, std::abs(auc(PerturbationCurve{Direction::Insertion, steps, v}) - 0.5));
  }

  // deletion frames == insertion frames with image and baseline swapped
  std::mt19937_64 rng(8);
  std::size_t dual_bad = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = ref::noise_image(16, 16, 3, rng);
    const auto b = make_baseline(x, trial % 2 ? BaselineStyle::blur(1.5) : BaselineStyle{});
    std::vector<float> vals(16);
    for (auto& v : vals) v = static_cast<float>(rng() % 5) / 4.0f;
    const AttributionMap m(4, 4, vals);
    for (int t = 0; t <= 16; ++t) {
      if (!(compose_fractional(x, b, m, t / 16.0, Direction::Deletion) ==
            compose_fractional(b, x, m, t / 16.0, Direction::Insertion))) {
        ++dual_bad;
      }
    }
  }

  std::size_t norm_bad = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double top = u(rng), blur = u(rng);
    if (top == blur) continue;
    if (top < blur) std::swap(top, blur);
    const ModelCalibration cal{"m", top, blur, ""};
    if (normalize_score(top, cal) != 1.0 || normalize_score(blur, cal) != 0.0) ++norm_bad;
  }
  return check(bad == 0 && worst_linear <= 1e-12 && dual_bad == 0 && norm_bad == 0,
               fmt("constant-curve mismatches %zu, linear error %.3g, duality mismatches %zu, normalization "
                   "endpoint mismatches %zu",
                   bad, worst_linear, dual_bad, norm_bad));
}

Outcome kpca_checks() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double eig_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd f(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) f(i, j) = u(rng);
    const Eigen::MatrixXd k = center_kernel(rbf_kernel(f, 0.5));
    double raw[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) raw[i][j] = k(i, j);
    const auto roots = ref::char_poly_roots_3x3(raw);
    if (roots.size() != 3) return fail("characteristic polynomial root search failed");
    const auto e = kernel_pca(k, 2);
    eig_err = std::max({eig_err, std::abs(e.eigenvalues(0) - roots[0]), std::abs(e.eigenvalues(1) - roots[1])});
  }

  double dup_dist = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    CrossTestMatrix m;
    const int n = 5;
    for (int i = 0; i < n; ++i) m.models.push_back("m" + std::to_string(i));
    m.ins.resize(n, n);
    m.del.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        m.ins(i, j) = 0.5 + 0.5 * u(rng);
        m.del(i, j) = 0.5 + 0.5 * u(rng);
      }
    const int a = static_cast<int>(rng() % (n - 1));
    const int b = n - 1;
    m.ins.row(b) = m.ins.row(a);
    m.ins.col(b) = m.ins.col(a);
    m.del.row(b) = m.del.row(a);
    m.del.col(b) = m.del.col(a);
    for (const auto ch : {Channel::Ins, Channel::Del}) {
      const auto e = kernel_pca_embed(m, ch, KernelSpec::rbf());
      dup_dist = std::max(dup_dist, (e.coords.row(a) - e.coords.row(b)).norm());
    }
  }

  double sum_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 12);
    Eigen::MatrixXd f(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) = 10.0 * u(rng);
    const Eigen::MatrixXd c = center_kernel(f * f.transpose());
    sum_err = std::max({sum_err, c.rowwise().sum().cwiseAbs().maxCoeff(), c.colwise().sum().cwiseAbs().maxCoeff()});
  }
  return check(eig_err < 1e-9 && dup_dist < 1e-6 && sum_err < 1e-10,
               fmt("eigenvalue error %.3g (limit 1e-9), duplicate distance %.3g (limit 1e-6), centered sums %.3g "
                   "(limit 1e-10)",
                   eig_err, dup_dist, sum_err));
}

struct TrendStats {
  double mean_mses = 0.0;
  double median_size = 0.0;
  std::size_t subexp = 0;
};

double median(std::vector<int> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Outcome trend() {
  const auto t0 = Clock::now();
  const GridSpec grid = make_grid(20, 20, 5, 5);
  const int n = grid.patch_count();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  BeamConfig beam;  // width 5, p_h 0.9
  CountConfig cc;
  cc.thresholds = {0.5};

  std::vector<int> d_sizes, a_sizes;
  std::size_t d_mses = 0, a_mses = 0, d_sub = 0, a_sub = 0;
  auto run = [&](const ClassifierOracle& oracle, const ImageTensor& image, std::vector<int>& sizes,
                 std::size_t& mses, std::size_t& sub) {
    ConfidenceCache cache;
    const auto found = find_mses(oracle, image, grid, beam, &cache);
    std::vector<std::vector<SubExplanationNode>> trees;
    for (const auto& r : found) {
      sizes.push_back(r.patches.size());
      trees.push_back(expand_subexplanations(oracle, image, r, cc, &cache));
    }
    mses += found.size();
    sub += count_above_thresholds(trees, cc).counts[0];
  };

  for (int img = 0; img < 100; ++img) {
    const auto image = ref::noise_image(20, 20, 3, rng);

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Disjunctive d{{}, 1.0, 0.05, 0.3};
    for (int g = 0; g < 6; ++g) d.groups.push_back(PatchSet::of({perm[3 * g], perm[3 * g + 1], perm[3 * g + 2]}, grid));
    const auto disj = make_synthetic({d}, grid, "disjunctive");

    std::shuffle(perm.begin(), perm.end(), rng);
    Additive a{std::vector<double>(static_cast<std::size_t>(n), 0.0), Squash::Clamp};
    double total = 0.0;
    for (int k = 0; k < 8; ++k) total += (a.weights[static_cast<std::size_t>(perm[k])] = u(rng));
    for (double& w : a.weights) w /= total;
    const auto add = make_synthetic({a}, grid, "additive");

    run(*disj, image, d_sizes, d_mses, d_sub);
    run(*add, image, a_sizes, a_mses, a_sub);
  }
  const double secs = seconds_since(t0);
  const double dm = d_mses / 100.0, am = a_mses / 100.0;
  const double dmed = median(d_sizes), amed = median(a_sizes);
  const bool ok = dm > am && dmed < amed && a_sub >= 5 * d_sub && a_sub > 0 && secs < 120.0;
  return check(ok, fmt("disjunctive: %.2f MSEs/image, median size %.1f, %zu nodes at 0.5; additive: %.2f "
                       "MSEs/image, median size %.1f, %zu nodes at 0.5; %.1f s (limit 120 s)",
                       dm, dmed, d_sub, am, amed, a_sub, secs));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + XPROBE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

const char* const kCommands[] = {"mse", "subexp", "saliency", "crosstest", "report"};

Outcome cli_determinism() {
  const fs::path tmp = fs::temp_directory_path() / ("xprobe_accept_" + std::to_string(std::random_device{}()));
  const std::string config = std::string(XPROBE_SOURCE_DIR) + "/tools/configs/synthetic.json";
  struct Variant {
    std::string dir;
    std::string flags;
    bool cache;
  };
  const Variant variants[] = {{"a", "--jobs 1", false}, {"b", "--jobs 4", false}, {"c", "--jobs 2", true}, {"c", "--jobs 3", true}};
  for (const auto& v : variants) {
    if (v.cache) setenv("XPROBE_CACHE_DIR", (tmp / "cache").c_str(), 1);
    for (const char* cmd : kCommands) {
      const int code = run_cli(std::string(cmd) + " --config \"" + config + "\" --out \"" + (tmp / v.dir).string() +
                               "\" " + v.flags);
      if (code != 0) {
        unsetenv("XPROBE_CACHE_DIR");
        fs::remove_all(tmp);
        return fail(fmt("'%s' exited with %d", cmd, code));
      }
    }
    unsetenv("XPROBE_CACHE_DIR");
  }
  const auto a = snapshot(tmp / "a");
  const auto b = snapshot(tmp / "b");
  const auto c = snapshot(tmp / "c");  // second pass over a warm cache
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    if (!b.contains(name) || b.at(name) != bytes || !c.contains(name) || c.at(name) != bytes) ++differing;
  }
  const bool same_names = a.size() == b.size() && a.size() == c.size();
  fs::remove_all(tmp);
  return check(differing == 0 && same_names && !a.empty(),
               fmt("%zu files per run, %zu differ across jobs/cache variants", a.size(), differing));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

Outcome real_models() {
  const char* models = std::getenv("XPROBE_ONNX_MODELS");
  if (!models || !*models) return {Verdict::Skip, "set XPROBE_ONNX_MODELS=a.onnx,b.onnx (and XPROBE_IMAGES=<dir>) to run"};
  const auto paths = split(models, ',');
  if (paths.size() < 2) return fail("XPROBE_ONNX_MODELS needs at least two models");
  const char* images = std::getenv("XPROBE_IMAGES");
  const char* classes = std::getenv("XPROBE_ONNX_CLASSES");

  const fs::path tmp = fs::temp_directory_path() / ("xprobe_real_" + std::to_string(std::random_device{}()));
  nlohmann::json cfg;
  if (images && *images) {
    cfg["dataset"] = {{"path", images}, {"image_size", 224}};
  } else {
    cfg["dataset"] = {{"synthetic", {{"count", 50}, {"height", 224}, {"width", 224}, {"channels", 3}}}};
  }
  cfg["grid"] = "7x7";
  cfg["models"] = nlohmann::json::array();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    cfg["models"].push_back({{"name", fs::path(paths[i]).stem().string() + "_" + std::to_string(i)},
                             {"path_or_url", fs::absolute(paths[i]).string()},
                             {"class_count", classes ? std::atoi(classes) : 1000}});
  }
  cfg["saliency"] = {{"steps", 49}, {"maps", "randomized"}, {"randomized", {{"n_masks", 500}}}};
  cfg["embedding"] = {{"kernel", "rbf"}, {"dims", std::min<int>(2, static_cast<int>(paths.size()) - 1)}};
  cfg["output"] = (tmp / "out").string();
  cfg["seed"] = 1;
  write_file_atomic(tmp / "config.json", cfg.dump(2));

  const auto t0 = Clock::now();
  for (const char* cmd : {"mse", "subexp", "crosstest", "report"}) {
    const int code = run_cli(std::string(cmd) + " --config \"" + (tmp / "config.json").string() + "\"");
    if (code != 0) return fail(fmt("'%s' exited with %d (outputs kept in %s)", cmd, code, tmp.c_str()));
  }
  const double secs = seconds_since(t0);
  std::string header;
  try {
    const auto table = read_file(tmp / "out/report/table.csv");
    header = table.substr(0, table.find('\n'));
    read_file(tmp / "out/crosstest/ins.csv");
  } catch (const Error& e) {
    return fail(e.what());
  }
  const bool schema = header == "model,images,explained,unexplained,mean,std,median,c90,c80,c70,c60,c50";
  fs::remove_all(tmp);
  return check(schema && secs < 1800.0, fmt("table header '%s', %.0f s (limit 1800 s)", header.c_str(), secs));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"1 beam search equals brute-force MSE sets on 50 random 3x3 instances", mse_exactness},
      {"2 sub-explanation counts equal brute-force counts on the same instances", count_exactness},
      {"3 analytic anchors (additive 1/9: one size-9 MSE, 255 nodes; conjunctive: 0)", analytic_anchors},
      {"4 curve numerics (constant and linear AUC, duality, normalization endpoints)", curve_numerics},
      {"5 kernel PCA (eigenvalues, duplicate models, centering)", kpca_checks},
      {"6 trend: disjunctive vs additive over 100 images", trend},
      {"7 CLI reruns are byte-identical", cli_determinism},
      {"8 two real ONNX classifiers end to end", real_models},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Skip ? "SKIP" : "FAIL";
    if (o.verdict == Verdict::Fail) ++failures;
    std::printf("%s  %s -- %s\n", tag, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
