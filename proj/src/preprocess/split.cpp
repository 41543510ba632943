#include <algorithm>
#include <cmath>

#include "gra/error.hpp"
#include "gra/preprocess.hpp"
#include "gra/random.hpp"

namespace gra::prep {

namespace {

// floor(r * n) with a guard against 0.7 * 10 landing a hair under 7.
std::size_t floor_share(double r, std::size_t n) {
  return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
}

}  // namespace

SplitIndices split(std::span<const int> labels, SplitRatios ratios, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 10) fail(ErrorKind::Config, "split: need at least 10 patients, got " + std::to_string(n));
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    fail(ErrorKind::Config, "split: ratios must be non-negative and sum to 1");
  }

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::Input, "split: labels must be 0/1");
    (labels[i] ? pos : neg).push_back(i);
  }
  Rng rng(substream_seed(seed, 0x5B117ULL));
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));

  const std::size_t n_train = floor_share(ratios.train, n);
  const std::size_t n_val = floor_share(ratios.validation, n);
  std::size_t p_train = floor_share(ratios.train, pos.size());
  std::size_t p_val = floor_share(ratios.validation, pos.size());
  // Negatives take whatever the totals leave. floor(a + b) >= floor(a) +
  // floor(b) keeps those counts non-negative; when negatives are too few to
  // fill them, positives move out of the test share one at a time.
  while (n_train + n_val - p_train - p_val > neg.size()) {
    if (p_train + p_val >= pos.size()) fail(ErrorKind::Config, "split: cannot stratify label counts");
    (p_train < n_train ? p_train : p_val)++;
  }
  const std::size_t q_train = n_train - p_train;
  const std::size_t q_val = n_val - p_val;

  SplitIndices out;
  out.seed = seed;
  auto take = [](const std::vector<std::size_t>& src, std::size_t from, std::size_t count,
                 std::vector<std::size_t>& dst) {
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(from),
               src.begin() + static_cast<std::ptrdiff_t>(from + count));
  };
  take(pos, 0, p_train, out.train);
  take(pos, p_train, p_val, out.validation);
  take(pos, p_train + p_val, pos.size() - p_train - p_val, out.test);
  take(neg, 0, q_train, out.train);
  take(neg, q_train, q_val, out.validation);
  take(neg, q_train + q_val, neg.size() - q_train - q_val, out.test);
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace gra::prep
