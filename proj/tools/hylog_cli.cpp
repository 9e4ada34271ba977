// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// hylog_cli: dataset synthesis, training, inference, evaluation, gradient
// checking and the attention benchmark.
//
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hylog/hylog.hpp"

namespace fs = std::filesystem;
using namespace hylog;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<std::size_t, std::size_t> parse_hw(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("size must look like HxW, got '" + s + "'");
  try {
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("size must look like HxW, got '" + s + "'");
  }
}

struct SynthArgs {
  std::string out, size = "64x64";
  std::size_t count = 72, test = 0;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  const auto [h, w] = parse_hw(a.size);
  if (a.count == 0) throw UsageError("--count must be positive");
  const std::size_t test = a.test ? a.test : std::max<std::size_t>(a.count > 1 ? 1 : 0, a.count / 9);
  if (test >= a.count) throw UsageError("--test must be smaller than --count");
  const auto m = generate_dataset(a.out, a.count - test, test, h, w, a.seed);
  std::cout << "synth: wrote " << m.entries.size() << " samples (" << a.count - test << " train, " << test
            << " test) to " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, data, out;
  std::size_t steps = 0, threads = 0;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (a.steps) rc.train.max_steps = a.steps;
  if (a.seed) rc.train.seed = a.seed;
  if (a.threads) rc.train.threads = a.threads;
  const auto manifest = load_manifest(a.data);
  const auto train_set = load_split(manifest, "train");
  const auto test_names = manifest.stems("test");
  Dataset test_set;
  if (!test_names.empty()) test_set = load_split(manifest, "test");
  if (!train_set.samples.empty()) {
    rc.model.height = train_set.samples[0].hazy.height;
    rc.model.width = train_set.samples[0].hazy.width;
  }
  DehazeNet<float> net(rc.model, rc.train.seed);
  fs::create_directories(a.out);
  write_file_atomic(fs::path(a.out) / "config.txt", format_config(rc));
  TrainOptions opts;
  opts.out_dir = a.out;
  if (!a.quiet) {
    opts.on_step = [](const StepRecord& r) {
      if (r.step % 10 == 0) std::cerr << "step " << r.step << " L=" << format_metric(r.total) << "\n";
    };
    opts.on_eval = [](std::uint64_t step, const EvalResult& e) {
      std::cerr << "eval step " << step << " psnr=" << format_metric(e.psnr) << " ssim=" << format_metric(e.ssim)
                << "\n";
    };
  }
  const auto result = train(net, rc.train, train_set, test_names.empty() ? nullptr : &test_set, opts);
  std::cout << "train: " << result.final_step << " steps";
  if (!result.steps.empty()) std::cout << ", final L=" << format_metric(result.steps.back().total);
  if (!result.evals.empty()) {
    std::cout << ", test psnr=" << format_metric(result.evals.back().second.psnr)
              << " ssim=" << format_metric(result.evals.back().second.ssim);
  }
  std::cout << "\n";
  return kOk;
}

std::unique_ptr<DehazeNet<float>> load_network(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  auto net = std::make_unique<DehazeNet<float>>(c.config, 0);
  restore_checkpoint(c, *net);
  if (!net->actnorm_initialized()) throw FormatError("checkpoint was saved before activation-norm initialization");
  return net;
}

struct InferArgs {
  std::string checkpoint, in, out;
  bool reflectance = false, shading = false;
};

int run_infer(const InferArgs& a) {
  auto net = load_network(a.checkpoint);
  const Image img = load_image(a.in);
  const auto& cfg = net->config();
  if (img.height != cfg.height || img.width != cfg.width) {
    throw ShapeError("image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " but the checkpoint expects " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  NoGradGuard guard;
  const auto out = net->forward(to_tensor<float>(img), Phase::infer);
  save_image(a.out, from_tensor(out.dehazed));
  const fs::path base = fs::path(a.out).replace_extension();
  auto emit = [&](bool want, const std::optional<Tensor<float>>& t, const char* what) {
    if (!want) return;
    if (!t) throw UsageError(std::string("model has no ") + what + " decoder");
    save_image(base.string() + "_" + what + ".ppm", from_tensor(*t));
  };
  emit(a.reflectance, out.reflectance, "reflectance");
  emit(a.shading, out.shading, "shading");
  std::cout << "infer: wrote " << a.out << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test";
  bool baseline = false;
};

int run_eval(const EvalArgs& a) {
  const auto manifest = load_manifest(a.data);
  const auto set = load_split(manifest, a.split);
  EvalResult r;
  if (a.baseline) {
    r = evaluate_hazy_baseline<float>(set);
  } else {
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required unless --baseline is given");
    auto net = load_network(a.checkpoint);
    r = evaluate(*net, set);
  }
  std::cout << "split,count,psnr,ssim\n"
            << a.split << ',' << r.count << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << "\n";
  return kOk;
}

int run_gradcheck(const std::string& module) {
  const auto modules = gradient_suite_modules();
  if (!module.empty() && std::find(modules.begin(), modules.end(), module) == modules.end()) {
    throw UsageError("unknown module '" + module + "'");
  }
  std::size_t failed = 0, ran = 0;
  for (const auto& c : gradient_suite()) {
    if (!module.empty() && c.module != module) continue;
    const auto r = c.run(GradCheckOptions{});
    ++ran;
    std::printf("%s %s/%s max_rel_err=%.3e coords=%zu\n", r.pass ? "PASS" : "FAIL", r.module.c_str(),
                r.name.c_str(), r.max_error, r.coords);
    if (!r.pass) {
      ++failed;
      std::printf("  worst %s\n", r.worst.c_str());
    }
  }
  std::printf("gradcheck: %zu/%zu passed\n", ran - failed, ran);
  return failed ? kNumeric : kOk;
}

struct BenchArgs {
  std::string sizes = "32x32x16,64x64x16", csv, variants = "standard,local,global,hybrid,sequential";
  std::size_t runs = 3, grid = 8, downscale = 2, heads = 4, threads = 1;
  bool full = false;
};

int run_bench(const BenchArgs& a) {
  std::vector<BenchSize> sizes;
  for (const auto& s : split_list(a.sizes)) sizes.push_back(parse_bench_size(s));
  BenchOptions o;
  o.runs = a.runs;
  o.grid_per_side = a.grid;
  o.global_downscale = a.downscale;
  o.heads = a.heads;
  o.full_macs = a.full;
  set_num_threads(static_cast<unsigned>(a.threads));
  std::vector<BenchRecord> records;
  for (const auto& v : split_list(a.variants)) {
    const auto rs = bench(parse_attn_variant(v), sizes, o);
    records.insert(records.end(), rs.begin(), rs.end());
  }
  if (!a.csv.empty()) {
    std::ofstream f(a.csv, std::ios::trunc);
    if (!f) throw FormatError("cannot write " + a.csv);
    write_bench_csv(f, records);
  }
  write_bench_csv(std::cout, records);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyLoG dehazing toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic hazy dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.count, "Total number of samples");
  synth->add_option("--test", sa.test, "How many samples go to the test split (default count/9)");
  synth->add_option("--size", sa.size, "Image size HxW");
  synth->add_option("--seed", sa.seed, "Dataset seed");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "key=value or JSON config file");
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--out", ta.out, "Output directory for metrics and checkpoints")->required();
  tr->add_option("--steps", ta.steps, "Override max_steps");
  tr->add_option("--seed", ta.seed, "Override seed");
  tr->add_option("--threads", ta.threads, "Override worker threads");
  tr->add_flag("--quiet", ta.quiet, "No progress on stderr");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Dehaze one PPM image");
  inf->add_option("--checkpoint", ia.checkpoint)->required();
  inf->add_option("--in", ia.in)->required();
  inf->add_option("--out", ia.out)->required();
  inf->add_flag("--emit-reflectance", ia.reflectance);
  inf->add_flag("--emit-shading", ia.shading);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Mean PSNR/SSIM of a checkpoint on a split");
  ev->add_option("--checkpoint", ea.checkpoint);
  ev->add_option("--data", ea.data)->required();
  ev->add_option("--split", ea.split);
  ev->add_flag("--baseline", ea.baseline, "Score the hazy inputs instead of a model");

  std::string gc_module;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--module", gc_module, "tensor-core, vit-block, hylog, cfsm, dehaze-net or losses");

  BenchArgs ba;
  auto* bn = app.add_subcommand("bench-attn", "Attention cost model and timing");
  bn->add_option("--sizes", ba.sizes, "Comma-separated HxWxC list");
  bn->add_option("--csv", ba.csv, "CSV output path");
  bn->add_option("--variants", ba.variants, "Comma-separated variants");
  bn->add_option("--runs", ba.runs, "Timed runs per size (>= 3)");
  bn->add_option("--grid", ba.grid, "Local windows per side");
  bn->add_option("--downscale", ba.downscale, "Global path pooling factor");
  bn->add_option("--heads", ba.heads);
  bn->add_option("--threads", ba.threads, "Worker threads for window/head parallelism");
  bn->add_flag("--full", ba.full, "Count projection, MLP and fuse MACs too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*tr) return run_train(ta);
    if (*inf) return run_infer(ia);
    if (*ev) return run_eval(ea);
    if (*gc) return run_gradcheck(gc_module);
    if (*bn) return run_bench(ba);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return kNumeric;
  } catch (const ShapeError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
