#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "xprobe/cli.hpp"
#include "xprobe/error.hpp"
#include "xprobe/records_io.hpp"
#include "xprobe/report.hpp"

namespace xprobe::cli {

namespace fs = std::filesystem;

namespace {

// File-name-safe form of a model name.
std::string slug(const std::string& name) {
  std::string out = name;
  for (char& ch : out) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '-' || ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  return out;
}

unsigned worker_count(const RunConfig& config, std::size_t items) {
  unsigned n = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(items, 1)));
}

// Runs fn(i) for i in [0, n) on a shared work counter. The first failure by
// index is rethrown, so errors do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Model {
  ModelConfig config;
  std::unique_ptr<ClassifierOracle> oracle;
};

/// Everything a command needs: dataset, grid, instantiated models and the
/// confidence cache (persistent when a cache directory is configured).
struct Context {
  const RunConfig& config;
  std::vector<Image> images;
  GridSpec grid;
  std::vector<Model> models;
  fs::path cache_file;
  std::unique_ptr<ConfidenceCache> persistent;

  explicit Context(const RunConfig& c, bool need_models = true) : config(c) {
    images = load_dataset(config);
    const auto& first = images.front().tensor;
    for (const auto& im : images) {
      if (!im.tensor.same_shape(first)) throw ConfigError("dataset images differ in shape");
    }
    try {
      grid = make_grid(first.height(), first.width(), config.grid_rows, config.grid_cols);
      config.beam.validate();
      config.counts.validate();
      config.baseline.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (need_models) {
      if (config.model_entries.empty()) throw ConfigError("config lists no models");
      std::set<std::string> names;
      for (const auto& entry : config.model_entries) {
        Model m;
        m.config = parse_model_config(entry, grid);
        if (!names.insert(slug(m.config.name)).second) {
          throw ConfigError("duplicate model name '" + m.config.name + "'");
        }
        m.oracle = make_oracle(m.config, grid);
        models.push_back(std::move(m));
      }
    }
    fs::path dir = config.cache_dir;
    if (dir.empty()) {
      if (const char* env = std::getenv("XPROBE_CACHE_DIR"); env && *env) dir = env;
    }
    if (!dir.empty()) {
      cache_file = dir / "confidences.jsonl";
      persistent = std::make_unique<ConfidenceCache>();
      if (fs::exists(cache_file)) persistent->load_jsonl(cache_file);
    }
  }

  BeamConfig beam() const {
    BeamConfig b = config.beam;
    b.baseline = config.baseline;
    b.batch_size = config.batch_size;
    return b;
  }

  void save_cache() const {
    if (persistent) persistent->save_jsonl(cache_file);
  }

  fs::path out(const std::string& rel) const { return config.out_dir / rel; }
};

std::string mse_path(const std::string& model) { return "mse/" + slug(model) + ".jsonl"; }
std::string counts_path(const std::string& model) { return "subexp/" + slug(model) + "_counts.csv"; }
std::string nodes_path(const std::string& model) { return "subexp/" + slug(model) + "_nodes.jsonl"; }

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Deterministic per-(model, image) seed for randomized maps.
std::uint64_t map_seed(std::uint64_t seed, const std::string& model, std::size_t image) {
  std::uint64_t h = hash_string(model) ^ (seed * 0x9e3779b97f4a7c15ULL);
  h ^= (image + 1) * 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 31;
  return h;
}

AttributionMap obtain_map(const Context& ctx, const Model& model, std::size_t i,
                          ConfidenceCache* cache) {
  const auto& s = ctx.config.saliency;
  const auto& image = ctx.images[i];
  if (s.maps == MapSource::Files) {
    for (const char* ext : {".fmap", ".png"}) {
      const fs::path p = s.map_dir / slug(model.config.name) / (image.id + ext);
      if (fs::exists(p)) return load_attribution(p);
    }
    throw FormatError("missing attribution map for generator '" + model.config.name +
                      "', image '" + image.id + "' under " + s.map_dir.string());
  }
  RandomizedMapConfig rc = s.randomized;
  rc.seed = map_seed(ctx.config.seed, model.config.name, i);
  rc.baseline = ctx.config.baseline;
  rc.batch_size = ctx.config.batch_size;
  const Prediction pred = predicted_class(*model.oracle, image.tensor);
  AttributionMap map = generate_randomized_map(*model.oracle, image.tensor, pred.label, rc, cache);
  map.set_source("randomized:" + model.config.name);
  return map;
}

}  // namespace

int cmd_mse(const RunConfig& config) {
  Context ctx(config);
  const BeamConfig beam = ctx.beam();
  std::string ids;
  for (const auto& im : ctx.images) ids += im.id + "\n";
  write_file_atomic(ctx.out("mse/images.txt"), ids);

  std::vector<MseStats> stats;
  for (const auto& model : ctx.models) {
    std::vector<ImageResult> results(ctx.images.size());
    parallel_for(ctx.images.size(), worker_count(config, ctx.images.size()), [&](std::size_t i) {
      ConfidenceCache local;
      ConfidenceCache* cache = ctx.persistent ? ctx.persistent.get() : &local;
      const auto& im = ctx.images[i];
      results[i] = {im.id, find_mses(*model.oracle, im.tensor, ctx.grid, beam, cache, im.id), {}};
    });
    std::vector<MseRecord> all;
    for (const auto& r : results) all.insert(all.end(), r.mses.begin(), r.mses.end());
    write_file_atomic(ctx.out(mse_path(model.config.name)), mse_records_jsonl(all));
    stats.push_back(aggregate(results, {}, model.config.name));
    std::cerr << model.config.name << ": " << all.size() << " MSEs over " << ctx.images.size()
              << " images\n";
  }
  write_file_atomic(ctx.out("mse/stats.csv"), stats_table_csv(stats));
  ctx.save_cache();
  return 0;
}

int cmd_subexp(const RunConfig& config) {
  Context ctx(config);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ctx.images.size(); ++i) index[ctx.images[i].id] = i;

  for (const auto& model : ctx.models) {
    const fs::path in = ctx.out(mse_path(model.config.name));
    if (!fs::exists(in)) throw ConfigError("no MSE file for model '" + model.config.name + "' (" + in.string() + "); run mse first");
    std::vector<MseRecord> records;
    try {
      records = parse_mse_records_jsonl(read_file(in));
    } catch (const FormatError& e) {
      throw FormatError(in.string() + ": " + e.what());
    }
    std::vector<std::vector<MseRecord>> per_image(ctx.images.size());
    for (auto& r : records) {
      const auto it = index.find(r.image_id);
      if (it == index.end()) throw FormatError(in.string() + ": unknown image id '" + r.image_id + "'");
      if (!(r.patches.grid() == ctx.grid)) {
        throw FormatError(in.string() + ": record grid differs from the configured grid");
      }
      per_image[it->second].push_back(std::move(r));
    }

    std::vector<SubExplanationCount> counts(ctx.images.size());
    std::vector<std::vector<SubExplanationNode>> nodes(ctx.images.size());
    parallel_for(ctx.images.size(), worker_count(config, ctx.images.size()), [&](std::size_t i) {
      const auto& im = ctx.images[i];
      const auto& roots = per_image[i];
      if (roots.empty()) {
        counts[i] = {im.id, std::vector<std::size_t>(config.counts.thresholds.size(), 0), 0};
        return;
      }
      ConfidenceCache local;
      ConfidenceCache* cache = ctx.persistent ? ctx.persistent.get() : &local;
      SubsetScorer scorer(*model.oracle, im.tensor, ctx.grid, config.baseline, roots.front().label,
                          cache, config.batch_size);
      std::vector<std::vector<SubExplanationNode>> trees;
      for (const auto& root : roots) {
        if (root.label != roots.front().label) throw FormatError("mixed classes for image '" + im.id + "'");
        trees.push_back(expand_subexplanations(scorer, root, config.counts));
      }
      counts[i] = count_above_thresholds(trees, config.counts, im.id);
      nodes[i] = merge_trees(trees);
    });

    std::vector<NodeRecord> node_records;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (const auto& n : nodes[i]) node_records.push_back({ctx.images[i].id, n});
    }
    write_file_atomic(ctx.out(counts_path(model.config.name)), counts_csv(counts, config.counts.thresholds));
    write_file_atomic(ctx.out(nodes_path(model.config.name)), nodes_jsonl(node_records));
  }
  ctx.save_cache();
  return 0;
}

int cmd_saliency(const RunConfig& config) {
  Context ctx(config);
  ConfidenceCache run_cache;
  ConfidenceCache* cache = ctx.persistent ? ctx.persistent.get() : &run_cache;
  std::vector<ImageTensor> tensors;
  for (const auto& im : ctx.images) tensors.push_back(im.tensor);
  const int steps = config.saliency.steps;

  for (const auto& model : ctx.models) {
    const ModelCalibration calib =
        calibrate_model(*model.oracle, tensors, config.baseline, cache, config.dataset.path.string());
    struct Row {
      ClassLabel label;
      double ins = 0.0;
      double del = 0.0;
    };
    std::vector<Row> rows(ctx.images.size());
    std::vector<AttributionMap> maps(ctx.images.size());
    parallel_for(ctx.images.size(), worker_count(config, ctx.images.size()), [&](std::size_t i) {
      const auto& im = ctx.images[i];
      maps[i] = obtain_map(ctx, model, i, cache);
      const Prediction pred = predicted_class(*model.oracle, im.tensor);
      rows[i].label = pred.label;
      for (Direction d : {Direction::Insertion, Direction::Deletion}) {
        const auto curve = perturbation_curve(*model.oracle, im.tensor, config.baseline, maps[i], steps,
                                              pred.label, d, cache, config.saliency.upsampling);
        (d == Direction::Insertion ? rows[i].ins : rows[i].del) = auc(curve);
      }
    });

    std::ostringstream csv;
    csv << "image_id,class,ins_auc,del_auc,ins_norm,del_norm\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      csv << ctx.images[i].id << ',' << rows[i].label.id << ',' << format_double(rows[i].ins) << ','
          << format_double(rows[i].del) << ',' << format_double(normalize_score(rows[i].ins, calib))
          << ',' << format_double(normalize_score(rows[i].del, calib)) << '\n';
    }
    const std::string base = "saliency/" + slug(model.config.name);
    write_file_atomic(ctx.out(base + ".csv"), csv.str());
    nlohmann::ordered_json cj;
    cj["model"] = calib.model;
    cj["top1"] = calib.top1;
    cj["blurred"] = calib.blurred;
    cj["baseline"] = config.baseline.tag();
    write_file_atomic(ctx.out(base + "_calibration.json"), cj.dump(2) + "\n");
    if (config.saliency.maps == MapSource::Randomized) {
      for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto bytes = serialize_fmap(maps[i]);
        write_file_atomic(ctx.out("maps/" + slug(model.config.name) + "/" + ctx.images[i].id + ".fmap"),
                          std::string(bytes.begin(), bytes.end()));
      }
    }
  }
  ctx.save_cache();
  return 0;
}

int cmd_crosstest(const RunConfig& config) {
  if (config.embedding.dims < 1) throw ConfigError("embedding.dims must be positive");
  if (config.model_entries.size() < static_cast<std::size_t>(config.embedding.dims) + 1) {
    throw ConfigError("embedding in " + std::to_string(config.embedding.dims) + " dimensions needs at least " +
                      std::to_string(config.embedding.dims + 1) + " models, config lists " +
                      std::to_string(config.model_entries.size()));
  }
  Context ctx(config);
  ConfidenceCache run_cache;
  ConfidenceCache* cache = ctx.persistent ? ctx.persistent.get() : &run_cache;
  const std::size_t n_images = ctx.images.size();

  std::vector<AttributionMap> flat(ctx.models.size() * n_images);
  parallel_for(flat.size(), worker_count(config, flat.size()), [&](std::size_t k) {
    flat[k] = obtain_map(ctx, ctx.models[k / n_images], k % n_images, cache);
  });
  MapTable maps;
  for (std::size_t k = 0; k < flat.size(); ++k) maps.emplace(std::pair{k / n_images, k % n_images}, flat[k]);

  std::vector<const ClassifierOracle*> oracles;
  for (const auto& m : ctx.models) oracles.push_back(m.oracle.get());
  std::vector<ImageTensor> tensors;
  for (const auto& im : ctx.images) tensors.push_back(im.tensor);

  CrossTestConfig cc;
  cc.baseline = config.baseline;
  cc.steps = config.saliency.steps;
  cc.upsampling = config.saliency.upsampling;
  cc.dataset_id = config.dataset.path.string();
  cc.map_method = config.saliency.maps == MapSource::Files ? "files" : "randomized";
  const CrossTestMatrix matrix = build_matrix(oracles, maps, tensors, cc, cache);

  write_file_atomic(ctx.out("crosstest/ins.csv"), matrix_csv(matrix.models, matrix.ins));
  write_file_atomic(ctx.out("crosstest/del.csv"), matrix_csv(matrix.models, matrix.del));
  for (Channel ch : {Channel::Ins, Channel::Del}) {
    const std::string tag = ch == Channel::Ins ? "ins" : "del";
    const Embedding2D e = kernel_pca_embed(matrix, ch, config.embedding.kernel, config.embedding.dims);
    write_file_atomic(ctx.out("crosstest/embedding_" + tag + ".csv"), embedding_csv(e));
    write_file_atomic(ctx.out("crosstest/embedding_" + tag + ".svg"),
                      embedding_svg(e, "Kernel PCA of " + tag + " cross-test scores"));
  }
  ctx.save_cache();
  return 0;
}

int cmd_report(const RunConfig& config) {
  const fs::path ids_file = config.out_dir / "mse/images.txt";
  if (!fs::exists(ids_file)) throw ConfigError("no MSE results under " + config.out_dir.string() + "; run mse first");
  const std::vector<std::string> ids = read_lines(ids_file);

  std::vector<std::string> names;
  for (const auto& entry : config.model_entries) {
    if (!entry.is_object() || !entry.contains("name") || !entry.at("name").is_string()) {
      throw ConfigError("model entry without a name");
    }
    names.push_back(entry.at("name").get<std::string>());
  }
  if (names.empty()) throw ConfigError("config lists no models");

  std::vector<MseStats> stats;
  std::map<std::string, std::vector<double>> curves;
  int patch_count = config.grid_rows * config.grid_cols;
  for (const auto& name : names) {
    const fs::path mse_file = config.out_dir / mse_path(name);
    if (!fs::exists(mse_file)) throw ConfigError("missing " + mse_file.string() + "; run mse first");
    const auto records = parse_mse_records_jsonl(read_file(mse_file));
    std::map<std::string, std::size_t> index;
    std::vector<ImageResult> results;
    for (const auto& id : ids) {
      index[id] = results.size();
      results.push_back({id, {}, {}});
    }
    for (const auto& r : records) {
      const auto it = index.find(r.image_id);
      if (it == index.end()) throw FormatError(mse_file.string() + ": unknown image id '" + r.image_id + "'");
      results[it->second].mses.push_back(r);
      patch_count = r.patches.grid().patch_count();
    }

    std::vector<double> thresholds;
    const fs::path counts_file = config.out_dir / counts_path(name);
    if (fs::exists(counts_file)) {
      thresholds = config.counts.thresholds;
      for (auto& c : parse_counts_csv(read_file(counts_file))) {
        const auto it = index.find(c.image_id);
        if (it == index.end()) throw FormatError(counts_file.string() + ": unknown image id '" + c.image_id + "'");
        if (c.counts.size() != thresholds.size()) {
          throw FormatError(counts_file.string() + ": threshold columns differ from the config");
        }
        results[it->second].counts = std::move(c);
      }
    }
    stats.push_back(aggregate(results, thresholds, name));

    const SizeHistogram hist = size_histogram(results, patch_count);
    const std::string base = "report/" + slug(name);
    write_file_atomic(config.out_dir / (base + "_sizes.csv"), histogram_csv(hist));
    write_file_atomic(config.out_dir / (base + "_sizes.svg"), histogram_svg(hist, "MSE sizes: " + name));
    curves[name] = percent_explained(results, patch_count);

    const fs::path nodes_file = config.out_dir / nodes_path(name);
    std::map<std::string, std::vector<SubExplanationNode>> nodes;
    if (fs::exists(nodes_file)) {
      for (auto& n : parse_nodes_jsonl(read_file(nodes_file))) nodes[n.image_id].push_back(n.node);
    }
    for (const auto& r : results) {
      if (r.mses.empty()) continue;
      const auto& ns = nodes[r.image_id];
      write_file_atomic(config.out_dir / ("report/dot/" + slug(name) + "/" + r.image_id + ".dot"),
                        export_sag_dot(r.image_id, r.mses, ns));
    }
  }
  // Threshold columns only make sense when every model has counts.
  const bool all_counts = std::all_of(stats.begin(), stats.end(), [](const MseStats& s) {
    return !s.thresholds.empty();
  });
  if (!all_counts) {
    for (auto& s : stats) {
      s.thresholds.clear();
      s.mean_counts.clear();
    }
  }
  write_file_atomic(config.out_dir / "report/table.csv", stats_table_csv(stats));
  write_file_atomic(config.out_dir / "report/table.json", stats_table_json(stats));
  write_file_atomic(config.out_dir / "report/percent_explained.csv", percent_explained_csv(curves));
  write_file_atomic(config.out_dir / "report/percent_explained.svg",
                    curves_svg(curves, "Images explained by an MSE of size <= n", "n (patches)",
                               "% of images"));
  return 0;
}

int run_guarded(int (*command)(const RunConfig&), const RunConfig& config) {
  try {
    return command(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace xprobe::cli
