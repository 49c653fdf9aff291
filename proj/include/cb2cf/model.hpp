#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cb2cf/embed.hpp"
#include "cb2cf/featurize.hpp"
#include "cb2cf/nn.hpp"
#include "cb2cf/profile.hpp"

namespace cb2cf::model {

enum class Component { kCnn = 0, kBow, kGenres, kActors, kDirector, kLanguage, kYear };

inline constexpr std::array<Component, 7> kComponents = {Component::kCnn,      Component::kBow,
                                                         Component::kGenres,   Component::kActors,
                                                         Component::kDirector, Component::kLanguage,
                                                         Component::kYear};

std::string_view component_name(Component c);
std::optional<Component> parse_component(std::string_view name);
std::optional<TagField> tag_field_of(Component c);
Component component_of(TagField f);

enum class CnnVariant { kNonStatic, kStatic, kRandom };

std::string_view variant_name(CnnVariant v);
std::optional<CnnVariant> parse_variant(std::string_view name);

struct SystemSpec {
  std::array<bool, 7> enabled{};
  std::array<std::size_t, 4> tag_hidden = {100, 100, 40, 20};  // by TagField
  std::size_t bow_hidden = 256;
  std::size_t cnn_filters = 300;
  std::size_t cnn_width = 3;
  std::size_t cnn_hidden = 256;
  std::size_t year_hidden = 8;
  std::size_t combiner_hidden = 256;
  std::size_t output_dim = 0;
  CnnVariant variant = CnnVariant::kNonStatic;

  bool has(Component c) const { return enabled[static_cast<std::size_t>(c)]; }
  SystemSpec& enable(Component c, bool on = true) {
    enabled[static_cast<std::size_t>(c)] = on;
    return *this;
  }
  bool uses_text() const { return has(Component::kCnn); }
  void validate() const;

  friend bool operator==(const SystemSpec&, const SystemSpec&) = default;
};

/// Parses "CNN+Tags+Year" style names. "Tags" expands to the four tag
/// components; "full" is CNN+Tags+Year. Dimensions keep their defaults.
SystemSpec named_system(std::string_view name, std::size_t output_dim);
std::string system_label(const SystemSpec& spec);

/// Input sizes that depend on the fitted feature context.
struct InputDims {
  std::array<std::size_t, 4> tags{};
  std::size_t bow = 0;
  std::size_t max_words = 0;

  friend bool operator==(const InputDims&, const InputDims&) = default;
};

InputDims input_dims(const features::FeatureContext& context);
features::FeatureNeeds needs_of(const SystemSpec& spec);

/// Intermediate values of one forward pass, kept for backward.
struct Trace {
  std::array<Eigen::VectorXd, 4> tag_pre;
  Eigen::VectorXd year_in, year_pre;
  Eigen::VectorXd bow_pre1, bow_mask, bow_drop, bow_pre2;
  RowMatrix text;
  std::vector<double> word_scales;
  nn::Conv1dMaxPool::Cache conv;
  Eigen::VectorXd pooled, cnn_pre;
  Eigen::VectorXd concat, combiner_pre;
};

struct DropoutRates {
  double word = 0.2;
  double unit = 0.2;
};

class Cb2cfModel {
 public:
  /// `words` must be given iff the CNN is enabled. Random-init replaces its
  /// values with uniform noise of matching variance.
  Cb2cfModel(const SystemSpec& spec, const InputDims& inputs, const RowMatrix* words, std::uint64_t seed);

  const SystemSpec& spec() const { return spec_; }
  const InputDims& inputs() const { return inputs_; }

  /// Predicted CF vector. Training mode draws word and unit dropout from `rng`.
  Eigen::VectorXd forward(const features::FeatureBundle& bundle, nn::Mode mode, Rng& rng,
                          const DropoutRates& rates = {}, Trace* trace = nullptr) const;
  Eigen::VectorXd predict(const features::FeatureBundle& bundle) const;
  /// Accumulates parameter gradients of `dout` (gradient w.r.t. the output).
  void backward(const features::FeatureBundle& bundle, const Trace& trace, const Eigen::VectorXd& dout);

  std::vector<nn::Param*> parameters();
  std::vector<const nn::Param*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  nn::Dense* tag_layer(TagField f) { return tags_[field_index(f)] ? &*tags_[field_index(f)] : nullptr; }
  const nn::Param* word_table() const { return words_ ? &*words_ : nullptr; }
  nn::Param* word_table() { return words_ ? &*words_ : nullptr; }
  nn::Dense& combiner() { return combiner_; }
  nn::Dense& output() { return output_; }

  /// Hidden activation of the field component for a one-hot input.
  Eigen::VectorXd tag_representation(TagField field, std::size_t tag) const;

 private:
  SystemSpec spec_;
  InputDims inputs_;
  std::array<std::optional<nn::Dense>, 4> tags_;
  std::optional<nn::Dense> year_;
  std::optional<nn::Dense> bow1_, bow2_;
  std::optional<nn::Param> words_;
  std::optional<nn::Conv1dMaxPool> conv_;
  std::optional<nn::Dense> cnn_fc_;
  nn::Dense combiner_;
  nn::Dense output_;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double word_dropout = 0.2;
  double dropout = 0.2;
  double l2 = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double validation_fraction = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainReport {
  std::vector<EpochLoss> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_validation = 0.0;
  std::string stop_reason;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle; the first floor(fraction * n) indices are held out.
Split validation_split(std::size_t n, double fraction, Rng& rng);

/// Adam on mean minibatch MSE plus L2. A seeded validation fraction of the
/// items is held out; training stops after `patience` epochs without a
/// validation improvement and the best parameters are restored. With no
/// validation items the training loss drives the selection instead.
TrainReport train(Cb2cfModel& model, std::span<const features::FeatureBundle> items, const RowMatrix& targets,
                  const TrainConfig& config, std::ostream* log = nullptr);

RowMatrix predict(const Cb2cfModel& model, std::span<const features::FeatureBundle> items);

/// Mean over items of the per-coordinate squared error, eval mode.
double evaluation_mse(const Cb2cfModel& model, std::span<const features::FeatureBundle> items,
                      const RowMatrix& targets);

struct RankedTag {
  std::size_t index;
  std::string tag;
  double similarity;
};

/// Tags of `field` closest by cosine to repr(C) + repr(A) - repr(B),
/// excluding A, B and C.
std::vector<RankedTag> analogy(const Cb2cfModel& model, TagField field, const features::FieldVocabulary& vocab,
                               const std::string& a, const std::string& b, const std::string& c,
                               std::size_t topk);

struct Checkpoint {
  Cb2cfModel model;
  std::filesystem::path features;
};

void save_checkpoint(const std::filesystem::path& path, const Cb2cfModel& model,
                     const std::filesystem::path& features_dir);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cb2cf::model
