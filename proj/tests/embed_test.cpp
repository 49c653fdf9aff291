#include "cb2cf/embed.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

namespace cb2cf::embed {
namespace {

using ::testing::ElementsAre;

TEST(WordPairs, SingleTokenHasNoPairs) {
  Rng rng(1);
  const std::vector<std::size_t> s = {0};
  EXPECT_TRUE(build_word_pairs(s, 4, rng).empty());
}

TEST(WordPairs, TwoTokensWindowOne) {
  Rng rng(1);
  const std::vector<std::size_t> s = {0, 1};
  EXPECT_THAT(build_word_pairs(s, 1, rng), ElementsAre(Pair{0, 1}, Pair{1, 0}));
}

// Oracle: enumerate every joint draw of per-position windows (each uniform on
// 1..window) and average the number of in-range neighbours.
double expected_pair_count(std::size_t n, std::size_t window) {
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= window;
  double total = 0.0;
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t c = code;
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t w = 1 + c % window;
      c /= window;
      for (std::size_t other = 0; other < n; ++other) {
        const std::size_t dist = other > pos ? other - pos : pos - other;
        if (other != pos && dist <= w) total += 1.0;
      }
    }
  }
  return total / static_cast<double>(combos);
}

TEST(WordPairs, ExpectedCountMatchesEnumeration) {
  const double oracle = expected_pair_count(3, 2);
  EXPECT_DOUBLE_EQ(oracle, 5.0);
  Rng rng(3);
  const std::vector<std::size_t> s = {0, 1, 2};
  double sum = 0.0;
  const int trials = 40000;
  for (int t = 0; t < trials; ++t) sum += static_cast<double>(build_word_pairs(s, 2, rng).size());
  EXPECT_NEAR(sum / trials, oracle, 0.02);
}

TEST(ItemPairs, AllOrderedPairs) {
  const std::vector<std::size_t> two = {0, 1};
  EXPECT_THAT(build_item_pairs(two), ElementsAre(Pair{0, 1}, Pair{1, 0}));
  const std::vector<std::size_t> three = {4, 5, 6};
  const auto pairs = build_item_pairs(three);
  EXPECT_EQ(pairs.size(), 6u);
  for (const auto& p : pairs) EXPECT_NE(p.center, p.context);
  const std::vector<std::size_t> one = {0};
  EXPECT_THROW(build_item_pairs(one), std::invalid_argument);
}

TEST(Subsample, DiscardProbabilityFormula) {
  EXPECT_EQ(discard_probability(1e-5, 1e-4), 0.0);
  EXPECT_EQ(discard_probability(1e-4, 1e-4), 0.0);
  EXPECT_DOUBLE_EQ(discard_probability(4e-4, 1e-4), 0.5);
}

TEST(Subsample, EmpiricalRateMatchesFormula) {
  // id 0 has frequency 4t, id 1 frequency below t.
  const double t = 0.1;
  const std::vector<std::uint64_t> counts = {40, 6, 54};
  const std::uint64_t total = 100;
  std::vector<std::size_t> stream(100000, 0);
  Rng rng(5);
  const auto kept = subsample(stream, t, counts, total, rng);
  const double discard_rate = 1.0 - static_cast<double>(kept.size()) / stream.size();
  EXPECT_NEAR(discard_rate, 0.5, 0.01);

  std::vector<std::size_t> rare(1000, 1);
  EXPECT_EQ(subsample(rare, t, counts, total, rng).size(), rare.size());
}

TEST(NoiseSampler, MatchesUnigramPowerDistribution) {
  const std::vector<std::uint64_t> counts = {100, 50, 20, 5, 1};
  NoiseSampler sampler(counts);
  std::vector<double> expected(counts.size());
  double z = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) z += expected[i] = std::pow(double(counts[i]), 0.75);
  for (auto& e : expected) e /= z;

  Rng rng(9);
  std::vector<double> seen(counts.size(), 0.0);
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) seen[sampler(rng)] += 1.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) tv += std::abs(seen[i] / draws - expected[i]);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(SgnsModel, ZeroVectorsAreAFixedPoint) {
  SgnsModel model(RowMatrix::Zero(4, 3), RowMatrix::Zero(4, 3));
  const std::vector<std::size_t> negatives = {2, 3};
  const double loss = model.step(0, 1, negatives, 0.5);
  EXPECT_NEAR(loss, 3 * std::log(2.0), 1e-12);
  EXPECT_TRUE(model.input().isZero(0.0));
  EXPECT_TRUE(model.output().isZero(0.0));
}

TEST(SgnsModel, SinglePairLossDecreasesMonotonically) {
  Rng rng(17);
  SgnsModel model(5, 8, rng);
  const std::vector<std::size_t> negatives = {2, 3, 4};
  double previous = model.loss(0, 1, negatives);
  for (int i = 0; i < 100; ++i) {
    model.step(0, 1, negatives, 0.05);
    const double current = model.loss(0, 1, negatives);
    EXPECT_LT(current, previous) << "step " << i;
    previous = current;
  }
}

// Sets are drawn within four planted clusters of ten items each.
CooccurrenceSets planted_sets(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> cluster(0, 3);
  std::uniform_int_distribution<int> size(2, 5);
  CooccurrenceSets sets;
  for (std::size_t s = 0; s < count; ++s) {
    const int c = cluster(rng);
    std::vector<int> members(10);
    for (int i = 0; i < 10; ++i) members[i] = c * 10 + i;
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<std::string> set;
    for (int i = size(rng); i > 0; --i) set.push_back("item" + std::string(1, char('a' + members[i] / 10)) +
                                                      std::string(1, char('a' + members[i] % 10)));
    sets.push_back(set);
  }
  return sets;
}

int cluster_of(const std::string& id) { return id[4] - 'a'; }

TEST(TrainItem2Vec, RecoversPlantedClusters) {
  SgnsConfig config;
  config.dim = 10;
  config.epochs = 20;
  config.negatives = 5;
  config.subsample = 1.0;
  config.seed = 3;
  const auto table = train_item2vec(planted_sets(400, 21), config);
  ASSERT_EQ(table.size(), 40u);

  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = i + 1; j < table.size(); ++j) {
      const double c = *cosine(table.row(i), table.row(j));
      if (cluster_of(table.id(i)) == cluster_of(table.id(j))) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  EXPECT_GT(intra / n_intra, inter / n_inter);
  EXPECT_TRUE(table.vectors().allFinite());
  EXPECT_LE(table.vectors().cwiseAbs().maxCoeff(), 1e3);
}

TEST(TrainItem2Vec, DeterministicForFixedSeed) {
  SgnsConfig config;
  config.dim = 6;
  config.epochs = 3;
  config.seed = 99;
  const auto sets = planted_sets(100, 5);
  const auto a = train_item2vec(sets, config);
  const auto b = train_item2vec(sets, config);
  EXPECT_EQ(a.ids(), b.ids());
  EXPECT_TRUE(a.vectors() == b.vectors());
}

TEST(TrainItem2Vec, RejectsBadInput) {
  SgnsConfig config;
  EXPECT_THROW(train_item2vec({}, config), std::invalid_argument);
  EXPECT_THROW(train_item2vec({{"a"}}, config), std::invalid_argument);
  EXPECT_THROW(train_item2vec({{"a", "a"}}, config), std::invalid_argument);
  config.dim = 0;
  EXPECT_THROW(train_item2vec({{"a", "b"}}, config), std::invalid_argument);
}

TEST(TrainWord2Vec, TrainsOnSentences) {
  std::vector<corpus::TokenSequence> sentences;
  for (int i = 0; i < 50; ++i) {
    sentences.push_back({"cat", "dog", "pet", "fur"});
    sentences.push_back({"car", "road", "wheel", "fuel"});
  }
  const auto vocab = corpus::build_vocabulary(sentences, 100);
  SgnsConfig config = SgnsConfig::words();
  config.dim = 8;
  config.epochs = 30;
  config.subsample = 1.0;
  const auto table = train_word2vec(sentences, vocab, config);
  EXPECT_EQ(table.size(), 8u);
  const auto row = [&](const char* w) { return table.row(*table.index_of(w)); };
  EXPECT_GT(*cosine(row("cat"), row("dog")), *cosine(row("cat"), row("road")));
}

TEST(Cosine, ScaleInvariantAndOrthogonal) {
  Eigen::RowVectorXd a(3), b(3);
  a << 1, 2, -0.5;
  b << -3, 0.25, 4;
  for (double alpha : {0.1, 1.0, 7.5})
    for (double beta : {0.3, 2.0, 100.0})
      EXPECT_NEAR(*cosine(alpha * a, beta * b), *cosine(a, b), 1e-14);
  Eigen::RowVectorXd x(2), y(2);
  x << 1, 0;
  y << 0, 1;
  EXPECT_EQ(*cosine(x, y), 0.0);
  EXPECT_FALSE(cosine(x, Eigen::RowVectorXd::Zero(2)));
}

EmbeddingTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  EmbeddingTable table(dim);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = g(rng);
    table.add("v" + std::string(1, char('a' + i)), v);
  }
  return table;
}

TEST(SimilaritySearch, StoredVectorRanksFirst) {
  const auto table = random_table(6, 4, 1);
  const auto hits = similarity_search(table.row(3), table, 6);
  ASSERT_EQ(hits.size(), 6u);
  EXPECT_EQ(hits[0].id, table.id(3));
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
}

TEST(SimilaritySearch, MatchesBruteForceSort) {
  const auto table = random_table(5, 3, 42);
  Eigen::RowVectorXd query(3);
  query << 0.3, -1.0, 0.7;
  // Oracle: explicit loops for cosine, full sort by (-similarity, id).
  std::vector<std::pair<double, std::string>> oracle;
  for (std::size_t i = 0; i < table.size(); ++i) {
    double dot = 0, nq = 0, nv = 0;
    for (int k = 0; k < 3; ++k) {
      dot += query[k] * table.row(i)[k];
      nq += query[k] * query[k];
      nv += table.row(i)[k] * table.row(i)[k];
    }
    oracle.emplace_back(-dot / std::sqrt(nq * nv), table.id(i));
  }
  std::sort(oracle.begin(), oracle.end());
  const auto hits = similarity_search(query, table, 5);
  ASSERT_EQ(hits.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(hits[i].id, oracle[i].second);
    EXPECT_NEAR(hits[i].similarity, -oracle[i].first, 1e-12);
  }
}

TEST(SimilaritySearch, ExclusionTiesAndZeroNorm) {
  EmbeddingTable table(2);
  Eigen::RowVector2d e1(1, 0), zero(0, 0), e2(0, 1);
  table.add("b", e1);
  table.add("a", e1);
  table.add("z", zero);
  table.add("c", e2);
  const auto hits = similarity_search(e1, table, 10, {"c"});
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].id, "a");  // tie with "b" broken by id
  EXPECT_EQ(hits[1].id, "b");
  EXPECT_EQ(hits[2].id, "z");
  EXPECT_EQ(hits[2].similarity, -1.0);
  EXPECT_THROW(similarity_search(zero, table, 1), std::invalid_argument);
  EXPECT_THROW(similarity_search(Eigen::RowVector3d(1, 0, 0), table, 1), std::invalid_argument);
}

TEST(EmbeddingTable, VectorFileRoundTripIsExact) {
  const auto table = random_table(4, 5, 8);
  const auto path = std::filesystem::temp_directory_path() / "cb2cf_embed_test.vec";
  table.save(path);
  const auto loaded = EmbeddingTable::load(path);
  EXPECT_EQ(loaded.ids(), table.ids());
  EXPECT_TRUE(loaded.vectors() == table.vectors());
  std::filesystem::remove(path);
}

TEST(EmbeddingTable, RejectsDuplicatesAndMismatch) {
  EmbeddingTable table(2);
  table.add("x", Eigen::RowVector2d(1, 2));
  EXPECT_THROW(table.add("x", Eigen::RowVector2d(1, 2)), std::invalid_argument);
  EXPECT_THROW(table.add("y", Eigen::RowVector3d(1, 2, 3)), std::invalid_argument);
}

}  // namespace
}  // namespace cb2cf::embed
