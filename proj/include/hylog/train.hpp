// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Training and evaluation loops over a synthetic dataset.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hylog/checkpoint.hpp"
#include "hylog/parallel.hpp"

namespace hylog {

// Raised when the loss or an intermediate value stops being finite.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::uint64_t step, const std::string& what)
      : NumericalError("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct StepRecord {
  std::uint64_t step = 0;
  double total = 0, reflectance = 0, shading = 0, dehaze = 0;
};

struct EvalResult {
  double psnr = 0, ssim = 0;
  std::size_t count = 0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<std::pair<std::uint64_t, EvalResult>> evals;
  std::uint64_t final_step = 0;
};

// CSV columns: step,L,L_R,L_S,L_D,psnr,ssim. Loss rows leave the metric
// columns empty; evaluation rows leave the loss columns empty.
inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << v;
  return os.str();
}

inline constexpr const char* kMetricsHeader = "step,L,L_R,L_S,L_D,psnr,ssim";

inline std::string format_step_row(const StepRecord& r) {
  return std::to_string(r.step) + "," + format_metric(r.total) + "," + format_metric(r.reflectance) + "," +
         format_metric(r.shading) + "," + format_metric(r.dehaze) + ",,";
}

inline std::string format_eval_row(std::uint64_t step, const EvalResult& e) {
  return std::to_string(step) + ",,,,," + format_metric(e.psnr) + "," + format_metric(e.ssim);
}

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> stems;
};

inline Dataset load_split(const DatasetManifest& m, const std::string& split) {
  Dataset d;
  d.stems = m.stems(split);
  if (d.stems.empty()) throw FormatError("dataset split '" + split + "' is empty");
  for (const auto& s : d.stems) d.samples.push_back(load_sample(m, s));
  return d;
}

template <typename T>
void check_geometry(const ModelConfig& cfg, const Dataset& d) {
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const Image& im = d.samples[i].hazy;
    if (im.height != cfg.height || im.width != cfg.width) {
      throw ShapeError("sample " + d.stems[i] + " is " + std::to_string(im.height) + "x" + std::to_string(im.width) +
                       " but the model expects " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
  }
}

// Mean per-sample PSNR and SSIM of the dehazed output against the clear image.
template <typename T>
EvalResult evaluate(DehazeNet<T>& net, const Dataset& d, std::size_t batch_size = 4) {
  check_geometry<T>(net.config(), d);
  NoGradGuard guard;
  EvalResult r;
  for (std::size_t start = 0; start < d.samples.size(); start += batch_size) {
    const std::size_t end = std::min(d.samples.size(), start + batch_size);
    std::vector<const Image*> hazy;
    for (std::size_t i = start; i < end; ++i) hazy.push_back(&d.samples[i].hazy);
    const auto out = net.forward(to_batch<T>(hazy), Phase::infer);
    for (std::size_t i = start; i < end; ++i) {
      const auto pred = to_tensor<T>(from_tensor(out.dehazed, i - start));
      const auto clear = to_tensor<T>(d.samples[i].clear);
      r.psnr += psnr(pred, clear);
      r.ssim += static_cast<double>(ssim(pred, clear).item());
    }
  }
  r.count = d.samples.size();
  r.psnr /= static_cast<double>(r.count);
  r.ssim /= static_cast<double>(r.count);
  return r;
}

// Scores the hazy inputs themselves: the bar a dehazing model has to clear.
template <typename T>
EvalResult evaluate_hazy_baseline(const Dataset& d) {
  NoGradGuard guard;
  EvalResult r;
  for (const auto& s : d.samples) {
    const auto h = to_tensor<T>(s.hazy), c = to_tensor<T>(s.clear);
    r.psnr += psnr(h, c);
    r.ssim += static_cast<double>(ssim(h, c).item());
  }
  r.count = d.samples.size();
  r.psnr /= static_cast<double>(r.count);
  r.ssim /= static_cast<double>(r.count);
  return r;
}

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::size_t eval_batch = 4;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::uint64_t, const EvalResult&)> on_eval;
};

// Runs epochs over the shuffled training split until `epochs` complete or
// `max_steps` optimizer steps are taken. Evaluates on the test split and
// checkpoints after each epoch and at the final step.
template <typename T>
TrainResult train(DehazeNet<T>& net, const TrainConfig& tc, const Dataset& train_set, const Dataset* test_set,
                  const TrainOptions& opts = {}) {
  check_geometry<T>(net.config(), train_set);
  if (tc.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  set_num_threads(static_cast<unsigned>(tc.threads));
  AdamState<T> adam(net.store, AdamHyper{tc.lr, 0.9, 0.999, 1e-8});
  const auto& cfg = net.config();

  std::ofstream csv;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    csv.open(opts.out_dir / "metrics.csv", std::ios::trunc);
    if (!csv) throw FormatError("cannot write " + (opts.out_dir / "metrics.csv").string());
    csv << kMetricsHeader << '\n';
  }

  TrainResult result;
  std::mt19937_64 order_rng(tc.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(train_set.samples.size());
  std::uint64_t step = 0;
  const std::size_t per_epoch = (order.size() + tc.batch_size - 1) / tc.batch_size;
  const std::size_t epochs = tc.max_steps ? std::max(tc.epochs, (tc.max_steps + per_epoch - 1) / per_epoch)
                                          : tc.epochs;

  std::uint64_t last_closed = std::numeric_limits<std::uint64_t>::max();
  std::size_t epoch = 0;
  auto end_of_epoch = [&] {
    last_closed = step;
    if (test_set) {
      const auto e = evaluate(net, *test_set, opts.eval_batch);
      result.evals.emplace_back(step, e);
      if (csv.is_open()) csv << format_eval_row(step, e) << '\n' << std::flush;
      if (opts.on_eval) opts.on_eval(step, e);
    }
    if (!opts.out_dir.empty()) {
      const auto bytes = encode_checkpoint(capture_checkpoint(net, &adam, step));
      write_file_atomic(opts.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".hylg"), bytes);
      write_file_atomic(opts.out_dir / "checkpoint.hylg", bytes);
    }
  };

  for (; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    bool stop = false;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      if (tc.max_steps && step >= tc.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<Sample> picked;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set.samples[order[i]];
        picked.push_back(tc.augment ? augment(s, sample_seed(tc.seed + step, i - start)) : s);
      }
      auto gather = [&](Image Sample::*field) {
        std::vector<const Image*> v;
        for (const auto& s : picked) v.push_back(&(s.*field));
        return to_batch<T>(v);
      };
      ++step;
      StepRecord rec;
      rec.step = step;
      try {
        const auto out = net.forward(gather(&Sample::hazy), Phase::train);
        LossTargets<T> targets{gather(&Sample::clear), cfg.has_reflectance() ? gather(&Sample::reflectance) : Tensor<T>(),
                               cfg.has_shading() ? gather(&Sample::shading) : Tensor<T>()};
        const auto loss = hybrid_loss(out, targets, tc.weights);
        rec.total = static_cast<double>(loss.total.item());
        rec.reflectance = loss.reflectance;
        rec.shading = loss.shading;
        rec.dehaze = loss.dehaze;
        if (!std::isfinite(rec.total)) throw DivergenceError(step, "non-finite loss");
        net.store.zero_grad();
        loss.total.backward();
        adam_step(net.store, adam);
      } catch (const DivergenceError&) {
        throw;
      } catch (const NumericalError& e) {
        throw DivergenceError(step, e.what());
      }
      result.steps.push_back(rec);
      if (csv.is_open()) csv << format_step_row(rec) << '\n';
      if (opts.on_step) opts.on_step(rec);
    }
    if (stop) break;
    end_of_epoch();
    if (tc.max_steps && step >= tc.max_steps) break;
  }
  // A step cap that cuts an epoch short still leaves a final evaluation.
  if (last_closed != step) end_of_epoch();
  result.final_step = step;
  return result;
}

}  // namespace hylog
