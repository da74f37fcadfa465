#include "softshield/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"
#include "softshield/errors.hpp"
#include "softshield/tokenizer.hpp"

namespace softshield {

std::string begging_prefix(std::string_view prompt) {
  return std::string(kBeggingPrefix) + std::string(prompt);
}

namespace {

struct MeanStd {
  double mean, std;
};

MeanStd mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= double(xs.size());
  return {mean, std::sqrt(var)};
}

std::vector<double> score_all(const Parameters& params, const std::vector<std::string>& texts,
                              int n_threads) {
  std::vector<double> scores(texts.size());
  detail::parallel_for(int(texts.size()), n_threads, [&](int i) {
    scores[size_t(i)] = perplexity(params, encode(texts[size_t(i)]));
  });
  return scores;
}

}  // namespace

double rank_auc(const std::vector<double>& clean_scores,
                const std::vector<double>& corrupted_scores) {
  // Average rank of corrupted scores in the pooled ordering; tied groups
  // share their mean rank, which makes ties count one half per pair.
  struct Item {
    double score;
    bool corrupted;
  };
  std::vector<Item> items;
  items.reserve(clean_scores.size() + corrupted_scores.size());
  for (double s : clean_scores) items.push_back({s, false});
  for (double s : corrupted_scores) items.push_back({s, true});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });

  double rank_sum = 0.0;  // 1-based ranks of corrupted items
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // mean of ranks i+1..j
    for (size_t k = i; k < j; ++k) {
      if (items[k].corrupted) rank_sum += avg_rank;
    }
    i = j;
  }
  const double n1 = double(corrupted_scores.size());
  const double n0 = double(clean_scores.size());
  const double u = rank_sum - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n0);
}

PplFilter calibrate_ppl_filter(const Parameters& params, const std::vector<std::string>& clean,
                               const std::vector<std::string>& corrupted, int n_threads) {
  if (clean.empty() || corrupted.empty()) {
    throw DataError("ppl filter calibration needs non-empty clean and corrupted sets");
  }
  const std::vector<double> clean_scores = score_all(params, clean, n_threads);
  const std::vector<double> corrupted_scores = score_all(params, corrupted, n_threads);

  PplFilter f;
  const MeanStd cs = mean_std(clean_scores);
  const MeanStd xs = mean_std(corrupted_scores);
  f.clean_mean = cs.mean;
  f.clean_std = cs.std;
  f.corrupted_mean = xs.mean;
  f.corrupted_std = xs.std;
  f.auc = rank_auc(clean_scores, corrupted_scores);

  std::vector<double> all;
  all.reserve(clean_scores.size() + corrupted_scores.size());
  all.insert(all.end(), clean_scores.begin(), clean_scores.end());
  all.insert(all.end(), corrupted_scores.begin(), corrupted_scores.end());
  std::sort(all.begin(), all.end());

  auto youden = [&](double tau) {
    int tp = 0, fp = 0;
    for (double s : corrupted_scores) tp += s > tau ? 1 : 0;
    for (double s : clean_scores) fp += s > tau ? 1 : 0;
    return double(tp) / double(corrupted_scores.size()) -
           double(fp) / double(clean_scores.size());
  };

  // Candidate thresholds: all midpoints of adjacent sorted scores (the two
  // lists are non-empty, so at least one pair exists). Ties on J keep the
  // smallest candidate.
  double best_tau = 0.5 * (all[0] + all[1]);
  double best_j = youden(best_tau);
  for (size_t k = 1; k + 1 < all.size(); ++k) {
    const double tau = 0.5 * (all[k] + all[k + 1]);
    const double j = youden(tau);
    if (j > best_j) {
      best_tau = tau;
      best_j = j;
    }
  }
  f.threshold = best_tau;
  return f;
}

PplDecision apply_ppl_filter(const PplFilter& filter, const Parameters& params,
                             const std::string& prompt) {
  const double score = perplexity(params, encode(prompt));
  return {score > filter.threshold, score};
}

}  // namespace softshield
