#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "gra/error.hpp"
#include "gra/model.hpp"

namespace gra::model {

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fraction_str(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

struct Cell {
  std::size_t k;
  double fraction;
  std::uint64_t seed;
};

}  // namespace

std::vector<GridResult> run_grid(const GraModel& pretrained, const prep::FeatureMatrix& target,
                                 std::span<const int> labels, const prep::SplitIndices& split,
                                 const GridConfig& config) {
  if (config.k_list.empty() || config.fraction_list.empty() || config.seeds.empty()) {
    fail(ErrorKind::Config, "grid: k, fraction and seed lists must be nonempty");
  }
  for (auto k : config.k_list) {
    if (k > pretrained.cnn.size()) fail(ErrorKind::Config, "grid: k " + std::to_string(k) + " out of range");
  }
  for (double f : config.fraction_list) {
    if (!(f > 0.0 && f <= 100.0)) fail(ErrorKind::Config, "grid: fraction " + fraction_str(f) + " out of (0, 100]");
  }
  if (split.test.empty()) fail(ErrorKind::Input, "grid: empty test split");

  const nn::Tensor inputs = assemble_inputs(pretrained, target);
  const nn::Tensor test_inputs = select_rows(inputs, split.test);
  std::vector<int> test_labels;
  for (auto r : split.test) test_labels.push_back(labels[r]);

  std::vector<Cell> cells;
  for (auto k : config.k_list) {
    for (double f : config.fraction_list) {
      for (auto s : config.seeds) cells.push_back({k, f, s});
    }
  }
  std::vector<GridResult> results(cells.size());

  auto run_cell = [&](std::size_t i) {
    const Cell& c = cells[i];
    FinetuneConfig fc{c.k, c.fraction, c.seed, config.train};
    const auto ft = finetune(pretrained, inputs, labels, split, fc);
    const auto scores = predict_inputs(ft.model, test_inputs);
    results[i] = GridResult{c.k, c.fraction, c.seed, eval::evaluate(scores, test_labels, ft.model.threshold),
                            ft.model.threshold};
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, cells.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        try {
          run_cell(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

std::string grid_csv(const std::vector<GridResult>& results) {
  std::ostringstream out;
  out << "k,fraction,seed,auroc,auprc,accuracy,sensitivity,specificity,ppv,npv,f1,threshold\n";
  for (const auto& r : results) {
    const auto& m = r.metrics;
    out << r.k << ',' << fraction_str(r.fraction_percent) << ',' << r.seed << ',' << fmt(m.auroc) << ','
        << fmt(m.auprc) << ',' << fmt(m.accuracy) << ',' << fmt(m.sensitivity) << ',' << fmt(m.specificity) << ','
        << fmt(m.ppv) << ',' << fmt(m.npv) << ',' << fmt(m.f1) << ',' << fmt(r.threshold, 2) << '\n';
  }
  return out.str();
}

namespace {

// Mean AUROC per (k, fraction) in first-seen order.
std::vector<std::pair<std::pair<std::size_t, double>, double>> mean_auroc(const std::vector<GridResult>& results) {
  std::vector<std::pair<std::pair<std::size_t, double>, double>> out;
  std::map<std::pair<std::size_t, double>, std::pair<double, int>> acc;
  for (const auto& r : results) {
    const auto key = std::make_pair(r.k, r.fraction_percent);
    auto [it, inserted] = acc.try_emplace(key, 0.0, 0);
    if (inserted) out.push_back({key, 0.0});
    it->second.first += r.metrics.auroc;
    it->second.second += 1;
  }
  for (auto& [key, v] : out) v = acc[key].first / acc[key].second;
  return out;
}

}  // namespace

std::string heatmap_csv(const std::vector<GridResult>& results) {
  std::ostringstream out;
  out << "k,fraction,auroc\n";
  for (const auto& [key, v] : mean_auroc(results)) {
    out << key.first << ',' << fraction_str(key.second) << ',' << fmt(v) << '\n';
  }
  return out.str();
}

std::vector<GridResult> best_per_k(const std::vector<GridResult>& results) {
  const auto means = mean_auroc(results);
  std::vector<std::size_t> ks;
  std::map<std::size_t, std::pair<double, double>> best;  // k -> (fraction, mean auroc)
  for (const auto& [key, v] : means) {
    auto it = best.find(key.first);
    if (it == best.end()) {
      ks.push_back(key.first);
      best[key.first] = {key.second, v};
    } else if (v > it->second.second) {
      it->second = {key.second, v};
    }
  }
  std::vector<GridResult> out;
  for (auto k : ks) {
    // Representative row: the first seed of the winning cell.
    for (const auto& r : results) {
      if (r.k == k && r.fraction_percent == best[k].first) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

}  // namespace gra::model
