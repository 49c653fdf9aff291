#include "cb2cf/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace cb2cf::eval {

using Eigen::Index;

namespace {

Index as_index(std::size_t n) { return static_cast<Index>(n); }

double cos_or(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
              double fallback) {
  return embed::cosine(a, b).value_or(fallback);
}

void check_item(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted, const RowMatrix& catalog) {
  if (catalog.rows() < 2) throw std::invalid_argument("catalog needs at least two items");
  if (item >= static_cast<std::size_t>(catalog.rows())) throw std::out_of_range("item outside the catalog");
  if (predicted.size() != catalog.cols()) throw std::invalid_argument("prediction dimension does not match catalog");
}

// Pool indices (item excluded) ordered by descending score, ties by index.
std::vector<std::size_t> top_k(const std::vector<double>& score, std::size_t item, std::size_t k) {
  std::vector<std::size_t> pool;
  pool.reserve(score.size() - 1);
  for (std::size_t j = 0; j < score.size(); ++j)
    if (j != item) pool.push_back(j);
  const auto better = [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), better);
  pool.resize(k);
  return pool;
}

// NDCG at each cutoff in `ks` (all already validated) for one item.
std::vector<double> ndcg_all(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted,
                             const RowMatrix& catalog, std::span<const std::size_t> ks) {
  std::vector<double> out(ks.size(), 0.0);
  if (ks.empty() || predicted.squaredNorm() == 0.0) return out;
  const std::size_t m = static_cast<std::size_t>(catalog.rows());
  const auto own = catalog.row(as_index(item));
  std::vector<double> predicted_sim(m), relevance(m);
  for (std::size_t j = 0; j < m; ++j) {
    predicted_sim[j] = cos_or(predicted, catalog.row(as_index(j)), -1.0);
    relevance[j] = std::max(0.0, cos_or(catalog.row(as_index(j)), own, 0.0));
  }
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  const auto retrieved = top_k(predicted_sim, item, kmax);
  const auto ideal = top_k(relevance, item, kmax);
  for (std::size_t c = 0; c < ks.size(); ++c) {
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < ks[c]; ++r) {
      const double discount = std::log2(static_cast<double>(r) + 2.0);
      dcg += relevance[retrieved[r]] / discount;
      idcg += relevance[ideal[r]] / discount;
    }
    out[c] = idcg < 1e-12 ? 0.0 : dcg / idcg;
  }
  return out;
}

void check_cutoff(std::size_t k, std::size_t m) {
  if (k < 1) throw std::invalid_argument("NDCG cutoff must be >= 1");
  if (k > m - 1) throw std::invalid_argument("NDCG cutoff " + std::to_string(k) + " exceeds catalog size - 1");
}

}  // namespace

double mse_metric(const RowMatrix& originals, const RowMatrix& predictions) {
  if (originals.rows() == 0) throw std::invalid_argument("MSE over an empty test set");
  if (originals.rows() != predictions.rows() || originals.cols() != predictions.cols())
    throw std::invalid_argument("MSE: originals and predictions differ in shape");
  double total = 0.0;
  for (Index i = 0; i < originals.rows(); ++i)
    total += (originals.row(i) - predictions.row(i)).squaredNorm() / static_cast<double>(originals.cols());
  return total / static_cast<double>(originals.rows());
}

std::size_t percentile_rank(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted,
                            const RowMatrix& catalog) {
  check_item(item, predicted, catalog);
  const std::size_t m = static_cast<std::size_t>(catalog.rows());
  if (predicted.squaredNorm() == 0.0) return m - 1;
  const double own = cos_or(predicted, catalog.row(as_index(item)), -1.0);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (j != item && cos_or(predicted, catalog.row(as_index(j)), -1.0) > own) ++rank;
  }
  return rank;
}

double mpr(std::span<const std::size_t> items, const RowMatrix& predictions, const RowMatrix& catalog) {
  if (items.empty()) throw std::invalid_argument("MPR over an empty test set");
  if (predictions.rows() != as_index(items.size())) throw std::invalid_argument("one prediction per item required");
  const double denom = static_cast<double>(catalog.rows() - 1);
  double total = 0.0;
  for (std::size_t k = 0; k < items.size(); ++k)
    total += static_cast<double>(percentile_rank(items[k], predictions.row(as_index(k)), catalog)) / denom;
  return total / static_cast<double>(items.size());
}

double ndcg_at_k(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted, const RowMatrix& catalog,
                 std::size_t k) {
  check_item(item, predicted, catalog);
  check_cutoff(k, static_cast<std::size_t>(catalog.rows()));
  const std::size_t ks[] = {k};
  return ndcg_all(item, predicted, catalog, ks)[0];
}

double mean_ndcg(std::span<const std::size_t> items, const RowMatrix& predictions, const RowMatrix& catalog,
                 std::size_t k) {
  if (items.empty()) throw std::invalid_argument("NDCG over an empty test set");
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) total += ndcg_at_k(items[i], predictions.row(as_index(i)), catalog, k);
  return total / static_cast<double>(items.size());
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::size_t items, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (items < folds) throw std::invalid_argument("fewer items than folds");
  std::vector<std::size_t> order(items);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment out{folds, seed, std::vector<std::size_t>(items)};
  for (std::size_t k = 0; k < items; ++k) out.fold_of[order[k]] = k % folds;
  return out;
}

Dataset align_dataset(std::span<const ContentProfile> profiles, const embed::EmbeddingTable& cf,
                      embed::EmbeddingTable words) {
  Dataset d;
  std::vector<std::size_t> rows;
  for (const auto& p : profiles) {
    if (const auto row = cf.index_of(p.id)) {
      d.items.push_back(p);
      rows.push_back(*row);
    }
  }
  d.targets.resize(as_index(rows.size()), as_index(cf.dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) d.targets.row(as_index(i)) = cf.row(rows[i]);
  d.words = std::move(words);
  return d;
}

std::vector<std::size_t> valid_cutoffs(std::span<const std::size_t> ks, std::size_t catalog_size) {
  std::vector<std::size_t> out;
  for (std::size_t k : ks)
    if (k >= 1 && k + 1 <= catalog_size) out.push_back(k);
  return out;
}

Metrics score_fold(std::span<const std::size_t> test, const RowMatrix& predictions, const RowMatrix& catalog,
                   std::span<const std::size_t> ks) {
  for (std::size_t k : ks) check_cutoff(k, static_cast<std::size_t>(catalog.rows()));
  RowMatrix originals(as_index(test.size()), catalog.cols());
  for (std::size_t i = 0; i < test.size(); ++i) originals.row(as_index(i)) = catalog.row(as_index(test[i]));
  Metrics m;
  m.mse = mse_metric(originals, predictions);
  m.mpr = mpr(test, predictions, catalog);
  m.ndcg.assign(ks.size(), 0.0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto row = ndcg_all(test[i], predictions.row(as_index(i)), catalog, ks);
    for (std::size_t c = 0; c < ks.size(); ++c) m.ndcg[c] += row[c];
  }
  for (auto& v : m.ndcg) v /= static_cast<double>(test.size());
  return m;
}

RowMatrix shared_centroids(const Dataset& data, const features::FeatureConfig& config, bool needed) {
  if (!needed) return RowMatrix(0, as_index(data.words.dim()));
  return features::fit_kmeans(data.words.vectors(), config.bow_centroids, config.seed).centroids;
}

RowMatrix train_and_predict(const model::SystemSpec& spec, const FoldInput& fold, const RunConfig& config,
                            const RowMatrix& centroids, model::TrainReport* report, std::ostream* log) {
  std::vector<ContentProfile> train_items;
  train_items.reserve(fold.train.size());
  for (std::size_t i : fold.train) train_items.push_back(fold.data.items[i]);
  const auto ctx = features::fit_feature_context(train_items, fold.data.words, config.features, &centroids);
  const auto needs = model::needs_of(spec);

  std::vector<features::FeatureBundle> train_bundles;
  RowMatrix targets(as_index(fold.train.size()), fold.data.targets.cols());
  for (std::size_t k = 0; k < fold.train.size(); ++k) {
    train_bundles.push_back(features::featurize_item(train_items[k], ctx, needs));
    targets.row(as_index(k)) = fold.data.targets.row(as_index(fold.train[k]));
  }
  model::SystemSpec sized = spec;
  sized.output_dim = static_cast<std::size_t>(fold.data.targets.cols());
  model::TrainConfig train_config = config.train;
  train_config.seed = config.train.seed + 7919 * fold.fold;
  model::Cb2cfModel net(sized, model::input_dims(ctx), sized.uses_text() ? &ctx.words.vectors() : nullptr,
                        train_config.seed);
  auto result = model::train(net, train_bundles, targets, train_config, log);
  if (report) *report = std::move(result);

  std::vector<features::FeatureBundle> test_bundles;
  for (std::size_t i : fold.test) test_bundles.push_back(features::featurize_item(fold.data.items[i], ctx, needs));
  return model::predict(net, test_bundles);
}

EvalReport run_system(const model::SystemSpec& spec, const Dataset& data, const FoldAssignment& folds,
                      const RunConfig& config, const Predictor& predictor, std::ostream* log) {
  if (folds.fold_of.size() != data.items.size()) throw std::invalid_argument("fold assignment does not cover the dataset");
  if (data.targets.rows() != as_index(data.items.size())) throw std::invalid_argument("one target per item required");
  EvalReport report;
  report.system = model::system_label(spec);
  report.ks = valid_cutoffs(config.ndcg_k, data.items.size());
  const RowMatrix centroids =
      predictor ? RowMatrix() : shared_centroids(data, config.features, spec.has(model::Component::kBow));

  for (std::size_t f = 0; f < folds.folds; ++f) {
    const auto test = folds.members(f);
    const auto train = folds.complement(f);
    const FoldInput input{data, f, train, test};
    FoldResult result;
    result.fold = f;
    result.test_items = test.size();
    if (log) *log << "# " << report.system << " fold " << f << '\n';
    const RowMatrix predictions =
        predictor ? predictor(input) : train_and_predict(spec, input, config, centroids, &result.training, log);
    result.metrics = score_fold(test, predictions, data.targets, report.ks);
    report.folds.push_back(std::move(result));
  }

  report.mean.ndcg.assign(report.ks.size(), 0.0);
  for (const auto& f : report.folds) {
    report.mean.mse += f.metrics.mse;
    report.mean.mpr += f.metrics.mpr;
    for (std::size_t c = 0; c < report.ks.size(); ++c) report.mean.ndcg[c] += f.metrics.ndcg[c];
  }
  const double n = static_cast<double>(report.folds.size());
  report.mean.mse /= n;
  report.mean.mpr /= n;
  for (auto& v : report.mean.ndcg) v /= n;
  return report;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void tsv_row(std::ostringstream& out, const std::string& system, const std::string& fold, const Metrics& m) {
  out << system << '\t' << fold << '\t' << fixed(m.mse) << '\t' << fixed(m.mpr);
  for (double v : m.ndcg) out << '\t' << fixed(v);
  out << '\n';
}

nlohmann::json metrics_json(const Metrics& m, std::span<const std::size_t> ks) {
  nlohmann::json ndcg = nlohmann::json::object();
  for (std::size_t c = 0; c < ks.size(); ++c) ndcg[std::to_string(ks[c])] = m.ndcg[c];
  return {{"mse", m.mse}, {"mpr", m.mpr}, {"ndcg", ndcg}};
}

}  // namespace

std::string report_tsv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  // Systems may have been scored with different cutoff sets only if their
  // catalogs differ; the header follows the first report.
  out << "system\tfold\tmse\tmpr";
  if (!reports.empty())
    for (std::size_t k : reports.front().ks) out << "\tndcg@" << k;
  out << '\n';
  for (const auto& r : reports) {
    for (const auto& f : r.folds) tsv_row(out, r.system, std::to_string(f.fold), f.metrics);
    tsv_row(out, r.system, "mean", r.mean);
  }
  return out.str();
}

std::string report_json(std::span<const EvalReport> reports, std::size_t folds, std::uint64_t seed) {
  nlohmann::json systems = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json per_fold = nlohmann::json::array();
    for (const auto& f : r.folds) {
      auto j = metrics_json(f.metrics, r.ks);
      j["fold"] = f.fold;
      j["test_items"] = f.test_items;
      j["epochs"] = f.training.epochs.size();
      j["best_epoch"] = f.training.best_epoch;
      j["stop_reason"] = f.training.stop_reason;
      per_fold.push_back(std::move(j));
    }
    systems.push_back({{"system", r.system}, {"ks", r.ks}, {"folds", per_fold}, {"mean", metrics_json(r.mean, r.ks)}});
  }
  const nlohmann::json doc = {{"schema", "cb2cf-eval-report"},
                              {"version", 1},
                              {"folds", folds},
                              {"seed", seed},
                              {"systems", systems}};
  return doc.dump(2) + "\n";
}

}  // namespace cb2cf::eval
