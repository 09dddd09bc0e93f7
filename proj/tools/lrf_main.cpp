// lrf: factorize convolution kernels into rank-K separable filter pairs,
// benchmark the separable pipeline, and train low-rank CNNs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrf/bench.hpp"
#include "lrf/conv.hpp"
#include "lrf/decompose.hpp"
#include "lrf/error.hpp"
#include "lrf/io.hpp"
#include "lrf/svd.hpp"
#include "lrf/tensor.hpp"
#include "lrf/train.hpp"
#include "lrf/wlra.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

json json_header(const std::string& command) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  return j;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

json cost_json(const lrf::CostReport& r) {
  json j;
  j["direct_flops_per_pixel"] = r.direct_flops_per_pixel;
  j["separable_flops_per_pixel"] = r.separable_flops_per_pixel;
  j["theoretical_speedup"] = r.theoretical_speedup;
  j["direct_params"] = r.direct_params;
  j["lowrank_params"] = r.lowrank_params;
  j["weight_reduction"] = r.weight_reduction;
  j["break_even_rank"] = r.break_even_rank;
  return j;
}

void print_cost(const lrf::CostReport& r) {
  std::cout << "direct flops/pixel:    " << r.direct_flops_per_pixel << "\n"
            << "separable flops/pixel: " << r.separable_flops_per_pixel << "\n"
            << "theoretical speedup:   " << r.theoretical_speedup << "\n"
            << "direct params:         " << r.direct_params << "\n"
            << "low-rank params:       " << r.lowrank_params << "\n"
            << "weight reduction:      " << r.weight_reduction << "\n"
            << "break-even rank:       " << r.break_even_rank << "\n";
}

json timing_json(const lrf::TimingStats& t) {
  json j;
  j["min_s"] = t.min_s;
  j["median_s"] = t.median_s;
  j["mean_s"] = t.mean_s;
  j["samples_s"] = t.samples_s;
  return j;
}

int numerical_rank(const std::vector<double>& sv, int rows, int cols) {
  if (sv.empty() || sv[0] == 0.0) return 0;
  const double thresh =
      sv[0] * std::max(rows, cols) * std::numeric_limits<double>::epsilon();
  int r = 0;
  for (double s : sv)
    if (s > thresh) ++r;
  return r;
}

double tail_energy(const std::vector<double>& sv, int k) {
  double tail = 0.0;
  for (std::size_t i = static_cast<std::size_t>(k); i < sv.size(); ++i)
    tail += sv[i] * sv[i];
  return tail;
}

// ---------------------------------------------------------------------------
// Model manifest

struct ManifestLayer {
  lrf::LayerDesc desc;
  std::string kernel_file;                               // dense kernel source
  std::map<std::string, std::string> param_files;        // param name -> path
  double energy = 0.0;                                   // per-layer -energy
};

struct Manifest {
  int in_channels = 1, in_height = 0, in_width = 0;
  int classes = 0;
  bool with_bn = true;
  std::vector<ManifestLayer> layers;
};

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw lrf::FormatError("cannot open manifest " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw lrf::FormatError("manifest " + path + ": " + e.what());
  }
  Manifest m;
  try {
    if (j.contains("input")) {
      m.in_channels = j["input"].value("channels", 1);
      m.in_height = j["input"].value("height", 0);
      m.in_width = j["input"].value("width", 0);
    }
    m.classes = j.value("classes", 0);
    m.with_bn = j.value("batch_norm", true);
    for (const json& lj : j.at("layers")) {
      ManifestLayer layer;
      layer.desc.kind = lj.at("type").get<std::string>();
      layer.desc.n = lj.value("n", 0);
      layer.desc.c = lj.value("c", 0);
      layer.desc.d = lj.value("d", 0);
      layer.desc.k = lj.value("k", 0);
      layer.desc.stride = lj.value("stride", 1);
      layer.desc.padding = lj.value("padding", 0);
      layer.desc.out_features = lj.value("out_features", 0);
      layer.kernel_file = lj.value("kernel", std::string());
      layer.energy = lj.value("energy", 0.0);
      if (lj.contains("files")) {
        for (auto it = lj["files"].begin(); it != lj["files"].end(); ++it)
          layer.param_files[it.key()] = it.value().get<std::string>();
      }
      m.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw lrf::FormatError("manifest " + path + ": " + e.what());
  }
  return m;
}

/// Loads parameter tensors referenced by the manifest into the built model.
/// Layer i of the manifest owns the params of the layers it expanded to.
void load_manifest_params(lrf::Model& model, const Manifest& m,
                          const fs::path& base) {
  std::size_t li = 0;  // index into model.layers
  for (const ManifestLayer& layer : m.layers) {
    std::size_t span = 1;
    if (layer.desc.kind == "lowrank-conv") span = m.with_bn ? 4 : 2;
    std::map<std::string, std::vector<double>*> refs;
    for (std::size_t i = li; i < li + span && i < model.layers.size(); ++i) {
      const std::string sub = std::to_string(i - li) + ".";
      for (lrf::ParamRef p : model.layers[i]->params())
        refs.emplace(sub + p.name, p.value);
      if (auto* bn = dynamic_cast<lrf::BatchNormLayer*>(model.layers[i].get())) {
        refs.emplace(sub + "running_mean", &bn->running_mean);
        refs.emplace(sub + "running_var", &bn->running_var);
      }
    }
    for (const auto& [name, file] : layer.param_files) {
      auto it = refs.find(name);
      if (it == refs.end())
        throw lrf::FormatError("manifest references unknown parameter '" + name +
                               "' for a " + layer.desc.kind + " layer");
      lrf::TensorData t = lrf::read_tensor_file((base / file).string());
      if (t.values.size() != it->second->size())
        throw lrf::DimensionError("parameter file " + file + " has " +
                                  std::to_string(t.values.size()) +
                                  " values, layer expects " +
                                  std::to_string(it->second->size()));
      *it->second = std::move(t.values);
    }
    li += span;
  }
}

std::vector<lrf::LayerDesc> manifest_descs(const Manifest& m) {
  std::vector<lrf::LayerDesc> descs;
  for (const ManifestLayer& layer : m.layers) descs.push_back(layer.desc);
  return descs;
}

// ---------------------------------------------------------------------------
// decompose

struct DecomposeOutcome {
  std::string kernel_file, v_file, h_file;
  int k = 0;
  double objective = 0.0;   // recomputed from the files as written
  double tail = 0.0;        // sum of squared dropped singular values
  lrf::CostReport cost;
};

DecomposeOutcome decompose_one(const std::string& kernel_file, int k,
                               double energy, const std::string& prefix,
                               int stride, int padding) {
  if (k <= 0 && energy <= 0.0)
    throw lrf::ArgumentError("decompose: give -K or --energy");
  lrf::KernelTensor w = lrf::read_kernel(kernel_file);
  if (k <= 0) k = lrf::select_rank(w, energy);
  lrf::FactorPair f = lrf::decompose_closed_form(w, k);

  DecomposeOutcome out;
  out.kernel_file = kernel_file;
  out.k = k;
  out.v_file = prefix + "_v.lrt";
  out.h_file = prefix + "_h.lrt";
  // Factors are written f64 so the reported objective matches a later
  // verify run on the stored files bit for bit.
  lrf::write_factor_pair(out.v_file, out.h_file, f, lrf::ScalarType::f64);
  lrf::FactorPair stored = lrf::read_factor_pair(out.v_file, out.h_file);
  out.objective = lrf::objective_e1(w, stored);
  out.tail = tail_energy(lrf::svd(lrf::matricize(w)).singular_values, k);
  lrf::LayerSpec spec{w.output_channels(), w.input_channels(), w.kernel_height(),
                      stride, padding, k};
  out.cost = lrf::layer_cost(spec, k);
  return out;
}

json outcome_json(const DecomposeOutcome& o) {
  json j;
  j["kernel"] = o.kernel_file;
  j["k"] = o.k;
  j["v_file"] = o.v_file;
  j["h_file"] = o.h_file;
  j["objective"] = o.objective;
  j["dropped_energy"] = o.tail;
  j["cost"] = cost_json(o.cost);
  return j;
}

int cmd_decompose(const std::string& kernel_file, const std::string& manifest_file,
                  int k, double energy, std::string prefix, int stride,
                  int padding, bool as_json) {
  std::vector<DecomposeOutcome> outcomes;
  if (!manifest_file.empty()) {
    Manifest m = load_manifest(manifest_file);
    const fs::path base = fs::path(manifest_file).parent_path();
    // Layers are independent, so factorize them concurrently; results are
    // collected and reported in manifest order.
    std::vector<std::future<DecomposeOutcome>> futures;
    for (const ManifestLayer& layer : m.layers) {
      if (layer.desc.kind != "lowrank-conv" || layer.kernel_file.empty()) continue;
      const std::string kfile = (base / layer.kernel_file).string();
      const std::string p = (base / fs::path(layer.kernel_file).stem()).string();
      const int layer_k = layer.desc.k > 0 ? layer.desc.k : k;
      const double layer_energy = layer.energy > 0.0 ? layer.energy : energy;
      futures.push_back(std::async(std::launch::async, decompose_one, kfile,
                                   layer_k, layer_energy, p, layer.desc.stride,
                                   layer.desc.padding));
    }
    if (futures.empty())
      throw lrf::ArgumentError("manifest has no lowrank-conv layers with kernels");
    for (auto& fut : futures) outcomes.push_back(fut.get());
  } else {
    if (kernel_file.empty())
      throw lrf::ArgumentError("decompose: give a kernel file or --manifest");
    if (prefix.empty()) {
      fs::path p(kernel_file);
      prefix = (p.parent_path() / p.stem()).string();
    }
    outcomes.push_back(decompose_one(kernel_file, k, energy, prefix, stride, padding));
  }

  if (as_json) {
    json j = json_header("decompose");
    j["layers"] = json::array();
    for (const DecomposeOutcome& o : outcomes) j["layers"].push_back(outcome_json(o));
    emit(j);
  } else {
    for (const DecomposeOutcome& o : outcomes) {
      std::cout << o.kernel_file << " -> rank " << o.k << "\n"
                << "  V: " << o.v_file << "\n  H: " << o.h_file << "\n"
                << "  objective E1:   " << o.objective << "\n"
                << "  dropped energy: " << o.tail << "\n";
      print_cost(o.cost);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& kernel_file, const std::string& v_file,
               const std::string& h_file, bool as_json) {
  lrf::KernelTensor w = lrf::read_kernel(kernel_file);
  lrf::FactorPair f = lrf::read_factor_pair(v_file, h_file);
  const double e1 = lrf::objective_e1(w, f);
  const double norm = lrf::frobenius_norm_sq(w);
  const double rel = norm > 0.0 ? std::sqrt(e1 / norm) : std::sqrt(e1);

  lrf::KernelTensor recon = lrf::reconstruct(
      f, {w.input_channels(), w.kernel_height(), w.output_channels()});
  lrf::SvdResult s = lrf::svd(lrf::matricize(recon));
  const lrf::DenseMatrix m = lrf::matricize(w);
  const int rank = numerical_rank(s.singular_values, m.rows(), m.cols());

  if (as_json) {
    json j = json_header("verify");
    j["objective"] = e1;
    j["relative_error"] = rel;
    j["reconstruction_rank"] = rank;
    emit(j);
  } else {
    std::cout << "objective E1:        " << e1 << "\n"
              << "relative error:      " << rel << "\n"
              << "reconstruction rank: " << rank << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cost

struct Table3Row {
  const char* layer;
  int c, n, d, k;
  double printed;  // reduction as printed in the reference table
};

constexpr Table3Row kTable3[] = {
    {"first", 3, 192, 5, 4, 3.5},    {"first", 3, 192, 5, 8, 1.8},
    {"first", 3, 192, 5, 12, 1.2},   {"second", 192, 128, 5, 8, 47.5},
    {"second", 192, 128, 5, 16, 23.8}, {"second", 192, 128, 5, 32, 12.0},
    {"second", 192, 128, 5, 64, 6.0},  {"second", 192, 128, 5, 128, 3.0},
    {"second", 192, 128, 5, 256, 1.5}, {"third", 128, 256, 5, 8, 52.5},
    {"third", 128, 256, 5, 16, 26.4},  {"third", 128, 256, 5, 32, 13.3},
    {"third", 128, 256, 5, 64, 6.7},   {"third", 128, 256, 5, 128, 3.3},
    {"third", 128, 256, 5, 256, 1.7},
};

int cmd_cost(int n, int c, int d, int k, bool table3, bool include_bias,
             bool as_json) {
  if (table3) {
    json rows = json::array();
    if (!as_json)
      std::cout << "layer    C    N    d    K   reduction  printed\n";
    for (const Table3Row& row : kTable3) {
      lrf::CostReport r =
          lrf::layer_cost({row.n, row.c, row.d, 1, 0, row.k}, row.k, include_bias);
      if (as_json) {
        json rj;
        rj["layer"] = row.layer;
        rj["c"] = row.c;
        rj["n"] = row.n;
        rj["d"] = row.d;
        rj["k"] = row.k;
        rj["weight_reduction"] = r.weight_reduction;
        rj["printed"] = row.printed;
        rows.push_back(rj);
      } else {
        std::printf("%-6s %4d %4d %4d %4d   %9.4f  %7.1f\n", row.layer, row.c,
                    row.n, row.d, row.k, r.weight_reduction, row.printed);
      }
    }
    if (as_json) {
      json j = json_header("cost");
      j["table3"] = rows;
      emit(j);
    }
    return 0;
  }
  lrf::CostReport r = lrf::layer_cost({n, c, d, 1, 0, k}, k, include_bias);
  if (as_json) {
    json j = json_header("cost");
    j["cost"] = cost_json(r);
    emit(j);
  } else {
    print_cost(r);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(int n, int c, int d, int k, int stride, int padding, int height,
              int width, int repeats, std::uint64_t seed, bool as_json) {
  lrf::LayerSpec spec{n, c, d, stride, padding, k};
  lrf::BenchOptions opts;
  opts.input_height = height;
  opts.input_width = width;
  opts.repeats = repeats;
  opts.seed = seed;
  lrf::BenchReport r = lrf::benchmark(spec, k, opts);
  if (as_json) {
    json j = json_header("bench");
    j["direct"] = timing_json(r.direct);
    j["separable"] = timing_json(r.separable);
    j["measured_speedup"] = r.measured_speedup;
    j["max_rel_error"] = r.max_rel_error;
    j["cost"] = cost_json(r.cost);
    emit(j);
  } else {
    std::cout << "direct    median " << r.direct.median_s << " s (min "
              << r.direct.min_s << ", mean " << r.direct.mean_s << ")\n"
              << "separable median " << r.separable.median_s << " s (min "
              << r.separable.min_s << ", mean " << r.separable.mean_s << ")\n"
              << "measured speedup:    " << r.measured_speedup << "\n"
              << "theoretical speedup: " << r.cost.theoretical_speedup << "\n"
              << "max rel error:       " << r.max_rel_error << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// compare

int cmd_compare(const std::string& kernel_file, int k, int als_iters, int seeds,
                bool as_json) {
  lrf::KernelTensor w = lrf::read_kernel(kernel_file);
  lrf::FactorPair closed = lrf::decompose_closed_form(w, k);
  const double closed_obj = lrf::objective_e1(w, closed);

  json rows = json::array();
  bool any_better = false;
  if (!as_json)
    std::cout << "closed-form objective: " << closed_obj << "\n"
              << "seed  als objective   gap\n";
  for (int seed = 0; seed < seeds; ++seed) {
    lrf::AlsResult als = lrf::decompose_als(
        w, k, {als_iters, static_cast<std::uint64_t>(seed), 0.0});
    const double obj = als.objective_trace.back();
    const bool better = obj < closed_obj - 1e-9;
    any_better = any_better || better;
    if (as_json) {
      json rj;
      rj["seed"] = seed;
      rj["als_objective"] = obj;
      rj["gap"] = obj - closed_obj;
      rj["beats_closed_form"] = better;
      rows.push_back(rj);
    } else {
      std::printf("%4d  %-14.8g  %.3g%s\n", seed, obj, obj - closed_obj,
                  better ? "  [BEATS CLOSED FORM]" : "");
    }
  }
  if (as_json) {
    json j = json_header("compare");
    j["k"] = k;
    j["closed_form_objective"] = closed_obj;
    j["als"] = rows;
    j["any_seed_beats_closed_form"] = any_better;
    emit(j);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

lrf::Dataset load_dataset_dir(const std::string& dir, int classes) {
  lrf::Dataset data;
  data.classes = classes;
  auto load_split = [&](const char* name, lrf::DatasetSplit& split) {
    const fs::path sub = fs::path(dir) / name;
    if (!fs::is_directory(sub))
      throw lrf::FormatError("dataset dir is missing " + sub.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sub))
      if (e.path().extension() == ".lrt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) {
      // Files are named <label>_<anything>.lrt.
      const std::string stem = p.stem().string();
      const std::size_t underscore = stem.find('_');
      if (underscore == std::string::npos)
        throw lrf::FormatError("dataset file " + p.string() +
                               " is not named <label>_<id>.lrt");
      const int label = std::stoi(stem.substr(0, underscore));
      if (label < 0 || label >= classes)
        throw lrf::FormatError("dataset file " + p.string() +
                               " has out-of-range label");
      lrf::FeatureMap z = lrf::read_feature_map(p.string());
      if (split.images.empty()) {
        split.channels = z.channels();
        split.height = z.height();
        split.width = z.width();
      } else if (z.channels() != split.channels || z.height() != split.height ||
                 z.width() != split.width) {
        throw lrf::DimensionError("dataset file " + p.string() +
                                  " disagrees with the split's shape");
      }
      split.images.push_back(z.data());
      split.labels.push_back(label);
    }
    if (split.images.empty())
      throw lrf::ArgumentError("dataset split " + sub.string() + " is empty");
  };
  load_split("train", data.train);
  load_split("val", data.val);
  load_split("test", data.test);
  return data;
}

void write_checkpoint(lrf::Model& model, const Manifest& m,
                      const std::string& prefix) {
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["input"] = {{"channels", m.in_channels},
                       {"height", m.in_height},
                       {"width", m.in_width}};
  manifest["classes"] = m.classes;
  manifest["batch_norm"] = m.with_bn;
  manifest["layers"] = json::array();

  std::size_t li = 0;
  for (const ManifestLayer& layer : m.layers) {
    std::size_t span = 1;
    if (layer.desc.kind == "lowrank-conv") span = m.with_bn ? 4 : 2;
    json lj;
    lj["type"] = layer.desc.kind;
    if (layer.desc.n) lj["n"] = layer.desc.n;
    if (layer.desc.c) lj["c"] = layer.desc.c;
    if (layer.desc.d) lj["d"] = layer.desc.d;
    if (layer.desc.k) lj["k"] = layer.desc.k;
    if (layer.desc.stride != 1) lj["stride"] = layer.desc.stride;
    if (layer.desc.padding != 0) lj["padding"] = layer.desc.padding;
    if (layer.desc.out_features) lj["out_features"] = layer.desc.out_features;
    json files = json::object();
    for (std::size_t i = li; i < li + span && i < model.layers.size(); ++i) {
      // Keys carry the sub-layer index so the two BN stages of an expanded
      // lowrank-conv layer do not collide.
      const std::string sub = std::to_string(i - li) + ".";
      std::vector<std::pair<std::string, const std::vector<double>*>> tensors;
      for (lrf::ParamRef p : model.layers[i]->params())
        tensors.emplace_back(sub + p.name, p.value);
      if (auto* bn = dynamic_cast<lrf::BatchNormLayer*>(model.layers[i].get())) {
        tensors.emplace_back(sub + "running_mean", &bn->running_mean);
        tensors.emplace_back(sub + "running_var", &bn->running_var);
      }
      for (const auto& [key, value] : tensors) {
        const std::string file = prefix + ".layer" +
                                 std::to_string(&layer - m.layers.data()) + "." +
                                 key + ".lrt";
        lrf::write_tensor_file(file,
                               {static_cast<std::uint32_t>(value->size())},
                               *value, lrf::ScalarType::f64);
        files[key] = fs::path(file).filename().string();
      }
    }
    if (!files.empty()) lj["files"] = files;
    manifest["layers"].push_back(lj);
    li += span;
  }
  const std::string mpath = prefix + ".manifest.json";
  std::ofstream out(mpath);
  if (!out) throw lrf::FormatError("cannot write " + mpath);
  out << manifest.dump(2) << "\n";
}

Manifest default_synthetic_manifest(int classes, int height, int width) {
  Manifest m;
  m.in_channels = 1;
  m.in_height = height;
  m.in_width = width;
  m.classes = classes;
  auto conv = [](int n, int d, int k, int stride, int padding) {
    ManifestLayer l;
    l.desc = {"lowrank-conv", n, 0, d, k, stride, padding, 0};
    return l;
  };
  ManifestLayer relu;
  relu.desc.kind = "relu";
  ManifestLayer dense;
  dense.desc.kind = "dense";
  dense.desc.out_features = classes;
  ManifestLayer softmax;
  softmax.desc.kind = "softmax";
  m.layers = {conv(8, 5, 4, 1, 2), relu, conv(16, 5, 4, 2, 2), relu, dense,
              softmax};
  return m;
}

int cmd_train(const std::string& manifest_file, const std::string& dataset_dir,
              bool synthetic, int classes, int per_class, int height, int width,
              const lrf::TrainConfig& cfg, const std::string& history_file,
              const std::string& checkpoint_prefix, bool as_json) {
  lrf::Dataset data;
  if (synthetic) {
    data = lrf::generate_synthetic_dataset(per_class, per_class / 5 + 1,
                                           per_class / 5 + 1, classes, height,
                                           width, cfg.seed + 1);
  } else if (!dataset_dir.empty()) {
    data = load_dataset_dir(dataset_dir, classes);
  } else {
    throw lrf::ArgumentError("train: give --synthetic or a dataset directory");
  }

  Manifest m;
  if (!manifest_file.empty()) {
    m = load_manifest(manifest_file);
    if (m.in_height == 0) {
      m.in_channels = data.train.channels;
      m.in_height = data.train.height;
      m.in_width = data.train.width;
    }
    if (m.classes == 0) m.classes = data.classes;
  } else {
    m = default_synthetic_manifest(data.classes, data.train.height,
                                   data.train.width);
    m.in_channels = data.train.channels;
  }

  lrf::Model model = lrf::build_model(m.in_channels, m.in_height, m.in_width,
                                      manifest_descs(m), cfg.seed, m.with_bn);
  if (!manifest_file.empty())
    load_manifest_params(model, m, fs::path(manifest_file).parent_path());

  lrf::TrainResult r = lrf::train(model, data, cfg);
  const double test_error = lrf::evaluate_error(model, data.test, cfg.batch_size);

  if (!history_file.empty()) {
    std::ofstream hist(history_file);
    if (!hist) throw lrf::FormatError("cannot write " + history_file);
    for (const lrf::EpochStats& e : r.history) {
      json line;
      line["epoch"] = e.epoch;
      line["train_loss"] = e.train_loss;
      line["val_error"] = e.val_error;
      line["lr"] = e.lr;
      hist << line.dump() << "\n";
    }
  }
  if (!checkpoint_prefix.empty()) write_checkpoint(model, m, checkpoint_prefix);

  if (as_json) {
    json j = json_header("train");
    j["epochs"] = r.history.size();
    j["final_train_loss"] = r.history.back().train_loss;
    j["final_val_error"] = r.history.back().val_error;
    j["test_error"] = test_error;
    j["test_accuracy"] = 1.0 - test_error;
    if (!history_file.empty()) j["history_file"] = history_file;
    if (!checkpoint_prefix.empty())
      j["checkpoint_manifest"] = checkpoint_prefix + ".manifest.json";
    emit(j);
  } else {
    for (const lrf::EpochStats& e : r.history)
      std::printf("epoch %3d  loss %.5f  val error %.4f  lr %g\n", e.epoch,
                  e.train_loss, e.val_error, e.lr);
    std::printf("test accuracy: %.4f\n", 1.0 - test_error);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// wlra

int cmd_wlra(const std::string& kernel_file, const std::string& data_dir, int k,
             int iters, std::uint64_t seed, const std::string& prefix,
             bool as_json) {
  lrf::KernelTensor w = lrf::read_kernel(kernel_file);

  std::vector<fs::path> files;
  if (!fs::is_directory(data_dir))
    throw lrf::ArgumentError("wlra: " + data_dir + " is not a directory");
  for (const auto& e : fs::directory_iterator(data_dir))
    if (e.path().extension() == ".lrt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw lrf::ArgumentError("wlra: no .lrt feature maps in " + data_dir);
  std::vector<lrf::FeatureMap> samples;
  for (const fs::path& p : files)
    samples.push_back(lrf::read_feature_map(p.string()));

  lrf::WeightMatrix g = lrf::build_weight_matrix(samples, w.kernel_height(), 1);
  lrf::DenseMatrix full = g.expand(w.output_channels());
  lrf::DenseMatrix m = lrf::matricize(w);
  lrf::WlraResult r = lrf::weighted_als(m, full, k, {iters, 0.0, seed});

  double gmin = full.data()[0], gmax = full.data()[0], gsum = 0.0;
  for (double v : full.data()) {
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
    gsum += v;
  }

  std::string approx_file;
  if (!prefix.empty()) {
    approx_file = prefix + "_approx.lrt";
    lrf::KernelTensor approx = lrf::dematricize(
        r.approx, {w.input_channels(), w.kernel_height(), w.output_channels()});
    lrf::write_kernel(approx_file, approx, lrf::ScalarType::f64);
  }

  if (as_json) {
    json j = json_header("wlra");
    j["k"] = k;
    j["samples"] = files.size();
    j["weight_matrix"] = {{"rows", full.rows()},
                          {"cols", full.cols()},
                          {"min", gmin},
                          {"max", gmax},
                          {"mean", gsum / full.data().size()}};
    j["objective_trace"] = r.objective_trace;
    j["final_objective"] = r.objective_trace.back();
    if (!approx_file.empty()) j["approx_file"] = approx_file;
    emit(j);
  } else {
    std::cout << "samples:        " << files.size() << "\n"
              << "weight matrix:  " << full.rows() << " x " << full.cols()
              << "  (min " << gmin << ", max " << gmax << ", mean "
              << gsum / full.data().size() << ")\n"
              << "objective trace:";
    for (double v : r.objective_trace) std::cout << " " << v;
    std::cout << "\nfinal objective: " << r.objective_trace.back() << "\n";
    if (!approx_file.empty())
      std::cout << "approximation written to " << approx_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank factorization of convolutional kernels"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable JSON output");

  // decompose
  std::string dec_kernel, dec_manifest, dec_prefix;
  int dec_k = 0, dec_stride = 1, dec_padding = 0;
  double dec_energy = 0.0;
  CLI::App* dec = app.add_subcommand(
      "decompose", "factorize a kernel into rank-K separable filters");
  dec->add_option("kernel", dec_kernel, "kernel tensor file");
  dec->add_option("--manifest", dec_manifest,
                  "model manifest; factorizes every lowrank-conv layer");
  CLI::Option* dec_kopt = dec->add_option("-K,--rank", dec_k, "target rank");
  dec->add_option("--energy", dec_energy,
                  "pick the smallest K reaching this energy fraction")
      ->excludes(dec_kopt);
  dec->add_option("--output-prefix", dec_prefix,
                  "prefix for the _v.lrt/_h.lrt outputs");
  dec->add_option("--stride", dec_stride, "stride used in the cost report");
  dec->add_option("--padding", dec_padding, "padding used in the cost report");

  // verify
  std::string ver_kernel, ver_v, ver_h;
  CLI::App* ver = app.add_subcommand(
      "verify", "evaluate a stored factorization against its kernel");
  ver->add_option("kernel", ver_kernel, "kernel tensor file")->required();
  ver->add_option("v_file", ver_v, "vertical filter file")->required();
  ver->add_option("h_file", ver_h, "horizontal filter file")->required();

  // cost
  int cost_n = 1, cost_c = 1, cost_d = 1, cost_k = 1;
  bool cost_table3 = false, cost_no_bias = false;
  CLI::App* cost = app.add_subcommand("cost", "FLOP and parameter arithmetic");
  cost->add_option("-N", cost_n, "output channels");
  cost->add_option("-C", cost_c, "input channels");
  cost->add_option("-d", cost_d, "kernel size");
  cost->add_option("-K", cost_k, "rank");
  cost->add_flag("--table3", cost_table3,
                 "print the full 15-row reference weight-reduction table");
  cost->add_flag("--no-bias", cost_no_bias, "exclude bias terms from counts");

  // bench
  int b_n = 1, b_c = 1, b_d = 3, b_k = 1, b_stride = 1, b_padding = 0;
  int b_height = 32, b_width = 32, b_repeats = 5;
  std::uint64_t b_seed = 0;
  CLI::App* bench =
      app.add_subcommand("bench", "time direct vs separable convolution");
  bench->add_option("-N", b_n, "output channels")->required();
  bench->add_option("-C", b_c, "input channels")->required();
  bench->add_option("-d", b_d, "kernel size")->required();
  bench->add_option("-K", b_k, "rank")->required();
  bench->add_option("--stride", b_stride);
  bench->add_option("--padding", b_padding);
  bench->add_option("--height", b_height, "input height");
  bench->add_option("--width", b_width, "input width");
  bench->add_option("--repeats", b_repeats, "timed repetitions");
  bench->add_option("--seed", b_seed);

  // compare
  std::string cmp_kernel;
  int cmp_k = 1, cmp_iters = 200, cmp_seeds = 5;
  CLI::App* cmp = app.add_subcommand(
      "compare", "closed form vs alternating least squares");
  cmp->add_option("kernel", cmp_kernel, "kernel tensor file")->required();
  cmp->add_option("-K,--rank", cmp_k, "target rank")->required();
  cmp->add_option("--als-iters", cmp_iters, "ALS iterations per seed");
  cmp->add_option("--seeds", cmp_seeds, "number of random restarts");

  // train
  std::string tr_manifest, tr_dataset, tr_history, tr_checkpoint;
  bool tr_synthetic = false;
  int tr_classes = 4, tr_per_class = 500, tr_height = 16, tr_width = 16;
  lrf::TrainConfig tr_cfg;
  CLI::App* tr = app.add_subcommand("train", "train a low-rank CNN from scratch");
  tr->add_option("--manifest", tr_manifest, "model manifest (default: built-in)");
  tr->add_option("--dataset", tr_dataset,
                 "dataset dir with train/ val/ test/ of <label>_<id>.lrt files");
  tr->add_flag("--synthetic", tr_synthetic, "generate the oriented-pattern task");
  tr->add_option("--classes", tr_classes);
  tr->add_option("--per-class", tr_per_class, "synthetic train samples per class");
  tr->add_option("--height", tr_height);
  tr->add_option("--width", tr_width);
  tr->add_option("--batch-size", tr_cfg.batch_size);
  tr->add_option("--lr", tr_cfg.initial_lr);
  tr->add_option("--decay", tr_cfg.lr_decay_factor);
  tr->add_option("--patience", tr_cfg.patience);
  tr->add_option("--max-epochs", tr_cfg.max_epochs);
  tr->add_option("--seed", tr_cfg.seed);
  tr->add_option("--history", tr_history, "line-delimited JSON history file");
  tr->add_option("--checkpoint", tr_checkpoint, "checkpoint file prefix");

  // wlra
  std::string wl_kernel, wl_data, wl_prefix;
  int wl_k = 1, wl_iters = 200;
  std::uint64_t wl_seed = 0;
  CLI::App* wl = app.add_subcommand(
      "wlra", "data-weighted low-rank approximation of a kernel");
  wl->add_option("kernel", wl_kernel, "kernel tensor file")->required();
  wl->add_option("--data", wl_data, "directory of feature-map files")->required();
  wl->add_option("-K,--rank", wl_k, "target rank")->required();
  wl->add_option("--iters", wl_iters);
  wl->add_option("--seed", wl_seed);
  wl->add_option("--output-prefix", wl_prefix,
                 "write the weighted approximation kernel");

  // Accept --json before or after the subcommand name.
  for (CLI::App* sub : app.get_subcommands(nullptr))
    sub->add_flag("--json", as_json, "machine-readable JSON output");

  try {
    app.parse(argc, argv);
    if (dec->parsed())
      return cmd_decompose(dec_kernel, dec_manifest, dec_k, dec_energy,
                           dec_prefix, dec_stride, dec_padding, as_json);
    if (ver->parsed()) return cmd_verify(ver_kernel, ver_v, ver_h, as_json);
    if (cost->parsed())
      return cmd_cost(cost_n, cost_c, cost_d, cost_k, cost_table3,
                      !cost_no_bias, as_json);
    if (bench->parsed())
      return cmd_bench(b_n, b_c, b_d, b_k, b_stride, b_padding, b_height,
                       b_width, b_repeats, b_seed, as_json);
    if (cmp->parsed())
      return cmd_compare(cmp_kernel, cmp_k, cmp_iters, cmp_seeds, as_json);
    if (tr->parsed())
      return cmd_train(tr_manifest, tr_dataset, tr_synthetic, tr_classes,
                       tr_per_class, tr_height, tr_width, tr_cfg, tr_history,
                       tr_checkpoint, as_json);
    if (wl->parsed())
      return cmd_wlra(wl_kernel, wl_data, wl_k, wl_iters, wl_seed, wl_prefix,
                      as_json);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(lrf::ErrorCode::argument);
  } catch (const lrf::TrainingError& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch << ")\n";
    return static_cast<int>(e.code());
  } catch (const lrf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(lrf::ErrorCode::generic);
  }
  return 0;
}
