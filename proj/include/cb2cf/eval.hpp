#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cb2cf/embed.hpp"
#include "cb2cf/featurize.hpp"
#include "cb2cf/model.hpp"
#include "cb2cf/profile.hpp"

namespace cb2cf::eval {

inline const std::vector<std::size_t> kDefaultNdcgCutoffs = {10, 30, 50, 100, 200, 500, 1000};

/// Mean over rows of (1/n) ||original - prediction||^2.
double mse_metric(const RowMatrix& originals, const RowMatrix& predictions);

/// Number of catalog items j != item whose cosine to `predicted` strictly
/// exceeds that of the item's own vector. Zero-norm predictions rank last
/// (M - 1); undefined cosines to zero-norm catalog rows count as -1.
std::size_t percentile_rank(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted,
                            const RowMatrix& catalog);

/// Mean of r_i / (M - 1); row k of `predictions` belongs to catalog row items[k].
double mpr(std::span<const std::size_t> items, const RowMatrix& predictions, const RowMatrix& catalog);

/// DCG of the K catalog items (item excluded) closest to `predicted`, with
/// relevance max(0, cos(v_j, v_item)), over the DCG of the ideal ordering by
/// the item's own vector. Zero when the ideal gain is below 1e-12 or the
/// prediction has zero norm.
double ndcg_at_k(std::size_t item, const Eigen::Ref<const Eigen::RowVectorXd>& predicted, const RowMatrix& catalog,
                 std::size_t k);

double mean_ndcg(std::span<const std::size_t> items, const RowMatrix& predictions, const RowMatrix& catalog,
                 std::size_t k);

struct FoldAssignment {
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;  // by item index

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Seeded shuffle, then round-robin.
FoldAssignment make_folds(std::size_t items, std::size_t folds, std::uint64_t seed);

/// Items with content profiles, their CF target vectors and a word table.
struct Dataset {
  std::vector<ContentProfile> items;
  RowMatrix targets;
  embed::EmbeddingTable words;
};

/// Keeps profiles that have a CF vector, in profile order.
Dataset align_dataset(std::span<const ContentProfile> profiles, const embed::EmbeddingTable& cf,
                      embed::EmbeddingTable words);

struct RunConfig {
  features::FeatureConfig features;
  model::TrainConfig train;
  std::vector<std::size_t> ndcg_k = kDefaultNdcgCutoffs;
};

struct FoldInput {
  const Dataset& data;
  std::size_t fold;
  std::span<const std::size_t> train;
  std::span<const std::size_t> test;
};

/// Returns predictions for `test`, one row per item in order.
using Predictor = std::function<RowMatrix(const FoldInput&)>;

struct Metrics {
  double mse = 0.0;
  double mpr = 0.0;
  std::vector<double> ndcg;  // aligned with EvalReport::ks
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t test_items = 0;
  Metrics metrics;
  model::TrainReport training;
};

struct EvalReport {
  std::string system;
  std::vector<std::size_t> ks;
  std::vector<FoldResult> folds;
  Metrics mean;
};

/// Cutoffs usable against a catalog of `catalog_size` items (K <= M - 1).
std::vector<std::size_t> valid_cutoffs(std::span<const std::size_t> ks, std::size_t catalog_size);

/// Computes every metric of one fold's predictions against the full catalog.
Metrics score_fold(std::span<const std::size_t> test, const RowMatrix& predictions, const RowMatrix& catalog,
                   std::span<const std::size_t> ks);

/// The default predictor: fit the feature context on the training items,
/// train `spec` on them and predict the test items. `centroids` may be shared
/// across folds since they depend on the word table only.
RowMatrix train_and_predict(const model::SystemSpec& spec, const FoldInput& fold, const RunConfig& config,
                            const RowMatrix& centroids, model::TrainReport* report = nullptr,
                            std::ostream* log = nullptr);

/// Cross-validates one system. `predictor` replaces the trained model when set.
EvalReport run_system(const model::SystemSpec& spec, const Dataset& data, const FoldAssignment& folds,
                      const RunConfig& config, const Predictor& predictor = {}, std::ostream* log = nullptr);

/// k-means centroids for BOW systems; an empty matrix when no BOW is needed.
RowMatrix shared_centroids(const Dataset& data, const features::FeatureConfig& config, bool needed);

/// Tab-separated table: header, one row per fold, and a `mean` row per system.
std::string report_tsv(std::span<const EvalReport> reports);
std::string report_json(std::span<const EvalReport> reports, std::size_t folds, std::uint64_t seed);

}  // namespace cb2cf::eval
