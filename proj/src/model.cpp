#include "cb2cf/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cb2cf::model {

using Eigen::Index;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kComponentNames = {"CNN", "BOW", "Genres", "Actors",
                                                             "Director", "Language", "Year"};

Index as_index(std::size_t n) { return static_cast<Index>(n); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

const features::TextIndices& require_text(const features::FeatureBundle& b) {
  if (!b.text) throw std::invalid_argument("feature bundle lacks text for the CNN component");
  return *b.text;
}

const VectorXd& require(const std::optional<VectorXd>& v, std::string_view what) {
  if (!v) throw std::invalid_argument("feature bundle lacks " + std::string(what));
  return *v;
}

}  // namespace

std::string_view component_name(Component c) { return kComponentNames[static_cast<std::size_t>(c)]; }

std::optional<Component> parse_component(std::string_view name) {
  const auto key = lower(name);
  for (Component c : kComponents) {
    if (lower(component_name(c)) == key) return c;
  }
  if (key == "directors") return Component::kDirector;
  if (key == "languages") return Component::kLanguage;
  return std::nullopt;
}

std::optional<TagField> tag_field_of(Component c) {
  switch (c) {
    case Component::kGenres: return TagField::kGenres;
    case Component::kActors: return TagField::kActors;
    case Component::kDirector: return TagField::kDirectors;
    case Component::kLanguage: return TagField::kLanguages;
    default: return std::nullopt;
  }
}

Component component_of(TagField f) {
  switch (f) {
    case TagField::kGenres: return Component::kGenres;
    case TagField::kActors: return Component::kActors;
    case TagField::kDirectors: return Component::kDirector;
    case TagField::kLanguages: return Component::kLanguage;
  }
  throw std::logic_error("unknown tag field");
}

std::string_view variant_name(CnnVariant v) {
  switch (v) {
    case CnnVariant::kNonStatic: return "non-static";
    case CnnVariant::kStatic: return "static";
    case CnnVariant::kRandom: return "random-init";
  }
  return "?";
}

std::optional<CnnVariant> parse_variant(std::string_view name) {
  for (CnnVariant v : {CnnVariant::kNonStatic, CnnVariant::kStatic, CnnVariant::kRandom}) {
    if (variant_name(v) == name) return v;
  }
  if (name == "random" || name == "rand") return CnnVariant::kRandom;
  return std::nullopt;
}

void SystemSpec::validate() const {
  if (std::none_of(enabled.begin(), enabled.end(), [](bool b) { return b; }))
    throw std::invalid_argument("system must enable at least one component");
  const auto positive = [](std::size_t v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be >= 1");
  };
  for (std::size_t h : tag_hidden) positive(h, "tag hidden dim");
  positive(bow_hidden, "BOW hidden dim");
  positive(cnn_filters, "CNN filters");
  positive(cnn_width, "CNN filter width");
  positive(cnn_hidden, "CNN hidden dim");
  positive(year_hidden, "Year hidden dim");
  positive(combiner_hidden, "combiner hidden dim");
  positive(output_dim, "output dim");
}

SystemSpec named_system(std::string_view name, std::size_t output_dim) {
  SystemSpec spec;
  spec.output_dim = output_dim;
  std::string_view rest = name;
  if (lower(name) == "full") rest = "CNN+Tags+Year";
  while (!rest.empty()) {
    const auto plus = rest.find('+');
    const auto part = rest.substr(0, plus);
    if (lower(part) == "tags") {
      for (TagField f : kTagFields) spec.enable(component_of(f));
    } else if (const auto c = parse_component(part)) {
      spec.enable(*c);
    } else {
      throw std::invalid_argument("unknown component '" + std::string(part) + "' in system '" +
                                  std::string(name) + "'");
    }
    if (plus == std::string_view::npos) break;
    rest = rest.substr(plus + 1);
  }
  spec.validate();
  return spec;
}

std::string system_label(const SystemSpec& spec) {
  std::vector<std::string> parts;
  const bool all_tags = std::all_of(kTagFields.begin(), kTagFields.end(),
                                    [&](TagField f) { return spec.has(component_of(f)); });
  if (spec.has(Component::kCnn)) parts.emplace_back("CNN");
  if (spec.has(Component::kBow)) parts.emplace_back("BOW");
  if (all_tags) {
    parts.emplace_back("Tags");
  } else {
    for (TagField f : kTagFields)
      if (spec.has(component_of(f))) parts.emplace_back(component_name(component_of(f)));
  }
  if (spec.has(Component::kYear)) parts.emplace_back("Year");
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
  return out;
}

InputDims input_dims(const features::FeatureContext& context) {
  InputDims dims;
  for (TagField f : kTagFields) dims.tags[field_index(f)] = context.tags.field(f).size();
  dims.bow = static_cast<std::size_t>(context.centroids.rows());
  dims.max_words = context.config.max_words;
  return dims;
}

features::FeatureNeeds needs_of(const SystemSpec& spec) {
  features::FeatureNeeds needs;
  needs.text = spec.has(Component::kCnn);
  needs.bow = spec.has(Component::kBow);
  for (TagField f : kTagFields) needs.tags[field_index(f)] = spec.has(component_of(f));
  needs.year = spec.has(Component::kYear);
  return needs;
}

Cb2cfModel::Cb2cfModel(const SystemSpec& spec, const InputDims& inputs, const RowMatrix* words,
                       std::uint64_t seed)
    : spec_(spec), inputs_(inputs) {
  spec_.validate();
  if (spec_.uses_text() != (words != nullptr))
    throw std::invalid_argument(spec_.uses_text() ? "CNN component needs a word table"
                                                  : "word table given but no text component enabled");
  Rng rng(seed);
  Index combined = 0;

  for (TagField f : kTagFields) {
    if (!spec_.has(component_of(f))) continue;
    const auto vocab = inputs_.tags[field_index(f)];
    if (vocab < 1) throw std::invalid_argument("empty tag vocabulary for " + std::string(field_name(f)));
    const auto hidden = spec_.tag_hidden[field_index(f)];
    tags_[field_index(f)].emplace(std::string(field_name(f)), as_index(vocab), as_index(hidden), true, rng);
    combined += as_index(hidden);
  }
  if (spec_.has(Component::kYear)) {
    year_.emplace("year", 1, as_index(spec_.year_hidden), false, rng);
    combined += as_index(spec_.year_hidden);
  }
  if (spec_.has(Component::kBow)) {
    if (inputs_.bow < 1) throw std::invalid_argument("BOW component needs at least one centroid");
    bow1_.emplace("bow1", as_index(inputs_.bow), as_index(spec_.bow_hidden), false, rng);
    bow2_.emplace("bow2", as_index(spec_.bow_hidden), as_index(spec_.bow_hidden), false, rng);
    combined += as_index(spec_.bow_hidden);
  }
  if (spec_.has(Component::kCnn)) {
    if (words->rows() < 1 || words->cols() < 1) throw std::invalid_argument("word table is empty");
    if (inputs_.max_words < spec_.cnn_width)
      throw std::invalid_argument("text length must be at least the filter width");
    words_.emplace("words", words->rows(), words->cols(), false);
    words_->value = *words;
    words_->sparse = true;
    words_->trainable = spec_.variant != CnnVariant::kStatic;
    if (spec_.variant == CnnVariant::kRandom) {
      // Same spread as the pretrained table so the filters see a similar scale.
      const double mean = words->mean();
      const double var = (words->array() - mean).square().mean();
      const double limit = var > 0.0 ? std::sqrt(3.0 * var) : 0.25;
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Index i = 0; i < words_->value.size(); ++i) words_->value.data()[i] = u(rng);
    }
    conv_.emplace("conv", as_index(spec_.cnn_filters), as_index(spec_.cnn_width), words->cols(), true, rng);
    cnn_fc_.emplace("cnn_fc", as_index(spec_.cnn_filters), as_index(spec_.cnn_hidden), false, rng);
    combined += as_index(spec_.cnn_hidden);
  }
  combiner_ = nn::Dense("combiner", combined, as_index(spec_.combiner_hidden), true, rng);
  output_ = nn::Dense("output", as_index(spec_.combiner_hidden), as_index(spec_.output_dim), false, rng);
}

VectorXd Cb2cfModel::forward(const features::FeatureBundle& bundle, nn::Mode mode, Rng& rng,
                             const DropoutRates& rates, Trace* trace) const {
  Trace local;
  Trace& t = trace ? *trace : local;
  std::vector<VectorXd> parts;

  // Concatenation order: CNN, BOW, tag fields, Year.
  if (conv_) {
    const auto& idx = require_text(bundle);
    const std::size_t eff = idx.rows.size();
    if (eff > inputs_.max_words) throw std::invalid_argument("text longer than the model's input length");
    const auto& table = words_->value;
    t.text = RowMatrix::Zero(as_index(inputs_.max_words), table.cols());
    t.word_scales = mode == nn::Mode::kTrain ? nn::row_dropout_scales(as_index(eff), rates.word, rng)
                                             : std::vector<double>(eff, 1.0);
    for (std::size_t r = 0; r < eff; ++r) {
      if (t.word_scales[r] != 0.0) t.text.row(as_index(r)) = t.word_scales[r] * table.row(as_index(idx.rows[r]));
    }
    t.pooled = conv_->forward(t.text, &t.conv, as_index(eff));
    t.cnn_pre = cnn_fc_->forward(nn::relu(t.pooled));
    parts.push_back(nn::relu(t.cnn_pre));
  }
  if (bow1_) {
    const auto& x = require(bundle.bow, "BOW histogram");
    t.bow_pre1 = bow1_->forward(x);
    t.bow_drop = nn::dropout(nn::relu(t.bow_pre1), rates.unit, rng, mode, &t.bow_mask);
    t.bow_pre2 = bow2_->forward(t.bow_drop);
    parts.push_back(nn::relu(t.bow_pre2));
  }
  for (TagField f : kTagFields) {
    const auto& layer = tags_[field_index(f)];
    if (!layer) continue;
    const auto& x = require(bundle.tags[field_index(f)], std::string(field_name(f)) + " tags");
    t.tag_pre[field_index(f)] = layer->forward(x);
    parts.push_back(nn::relu(t.tag_pre[field_index(f)]));
  }
  if (year_) {
    if (!bundle.year) throw std::invalid_argument("feature bundle lacks the year feature");
    t.year_in = VectorXd::Constant(1, *bundle.year);
    t.year_pre = year_->forward(t.year_in);
    parts.push_back(nn::relu(t.year_pre));
  }

  t.concat.resize(combiner_.in());
  Index offset = 0;
  for (const auto& p : parts) {
    t.concat.segment(offset, p.size()) = p;
    offset += p.size();
  }
  t.combiner_pre = combiner_.forward(t.concat);
  return output_.forward(nn::relu(t.combiner_pre));
}

VectorXd Cb2cfModel::predict(const features::FeatureBundle& bundle) const {
  Rng unused(0);
  return forward(bundle, nn::Mode::kEval, unused);
}

void Cb2cfModel::backward(const features::FeatureBundle& bundle, const Trace& t, const VectorXd& dout) {
  const VectorXd dhidden = output_.backward(nn::relu(t.combiner_pre), dout);
  const VectorXd dconcat = combiner_.backward(t.concat, nn::relu_grad(t.combiner_pre, dhidden));
  Index offset = 0;
  const auto take = [&](Index n) {
    VectorXd seg = dconcat.segment(offset, n);
    offset += n;
    return seg;
  };

  if (conv_) {
    const auto& idx = require_text(bundle);
    const VectorXd d = take(cnn_fc_->out());
    const VectorXd dpool = nn::relu_grad(t.pooled, cnn_fc_->backward(nn::relu(t.pooled),
                                                                      nn::relu_grad(t.cnn_pre, d)));
    if (words_->trainable) {
      RowMatrix dx = RowMatrix::Zero(t.text.rows(), t.text.cols());
      conv_->backward(t.text, t.conv, dpool, &dx);
      for (std::size_t r = 0; r < idx.rows.size(); ++r) {
        const double s = t.word_scales[r];
        if (s == 0.0) continue;
        const Index row = as_index(idx.rows[r]);
        words_->grad.row(row) += s * dx.row(as_index(r));
        words_->touch(row);
      }
    } else {
      conv_->backward(t.text, t.conv, dpool, nullptr);
    }
  }
  if (bow1_) {
    const VectorXd d = take(bow2_->out());
    const VectorXd ddrop = bow2_->backward(t.bow_drop, nn::relu_grad(t.bow_pre2, d));
    const VectorXd dh1 = t.bow_mask.size() ? VectorXd(ddrop.cwiseProduct(t.bow_mask)) : ddrop;
    bow1_->backward(*bundle.bow, nn::relu_grad(t.bow_pre1, dh1));
  }
  for (TagField f : kTagFields) {
    auto& layer = tags_[field_index(f)];
    if (!layer) continue;
    const VectorXd d = take(layer->out());
    layer->backward(*bundle.tags[field_index(f)], nn::relu_grad(t.tag_pre[field_index(f)], d));
  }
  if (year_) {
    const VectorXd d = take(year_->out());
    year_->backward(t.year_in, nn::relu_grad(t.year_pre, d));
  }
}

std::vector<nn::Param*> Cb2cfModel::parameters() {
  std::vector<nn::Param*> out;
  const auto dense = [&](std::optional<nn::Dense>& d) {
    if (d) {
      out.push_back(&d->weight);
      out.push_back(&d->bias);
    }
  };
  if (words_) out.push_back(&*words_);
  if (conv_) {
    out.push_back(&conv_->weight);
    out.push_back(&conv_->bias);
  }
  dense(cnn_fc_);
  dense(bow1_);
  dense(bow2_);
  for (auto& t : tags_) dense(t);
  dense(year_);
  for (nn::Dense* d : {&combiner_, &output_}) {
    out.push_back(&d->weight);
    out.push_back(&d->bias);
  }
  return out;
}

std::vector<const nn::Param*> Cb2cfModel::parameters() const {
  auto mut = const_cast<Cb2cfModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t Cb2cfModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Cb2cfModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

VectorXd Cb2cfModel::tag_representation(TagField field, std::size_t tag) const {
  const auto& layer = tags_[field_index(field)];
  if (!layer) throw std::invalid_argument(std::string(field_name(field)) + " component is not enabled");
  if (tag >= static_cast<std::size_t>(layer->in())) throw std::out_of_range("tag index outside the vocabulary");
  return nn::relu(layer->weight.value.col(as_index(tag)) + layer->bias.value.col(0));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  for (double p : {word_dropout, dropout})
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rates must be in [0, 1)");
  if (!(l2 >= 0.0)) throw std::invalid_argument("L2 weight must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation fraction must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

RowMatrix predict(const Cb2cfModel& model, std::span<const features::FeatureBundle> items) {
  RowMatrix out(as_index(items.size()), as_index(model.spec().output_dim));
  for (std::size_t i = 0; i < items.size(); ++i) out.row(as_index(i)) = model.predict(items[i]).transpose();
  return out;
}

namespace {

double subset_mse(const Cb2cfModel& model, std::span<const features::FeatureBundle> items, const RowMatrix& targets,
                  std::span<const std::size_t> subset) {
  double total = 0.0;
  for (std::size_t i : subset)
    total += nn::mse_loss(model.predict(items[i]), targets.row(as_index(i)).transpose()).value;
  return total / static_cast<double>(subset.size());
}

}  // namespace

double evaluation_mse(const Cb2cfModel& model, std::span<const features::FeatureBundle> items,
                      const RowMatrix& targets) {
  if (items.empty()) throw std::invalid_argument("no items to evaluate");
  if (targets.rows() != as_index(items.size())) throw std::invalid_argument("one target per item required");
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  return subset_mse(model, items, targets, all);
}

Split validation_split(std::size_t n, double fraction, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return {{order.begin() + static_cast<std::ptrdiff_t>(held), order.end()},
          {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held)}};
}

TrainReport train(Cb2cfModel& model, std::span<const features::FeatureBundle> items, const RowMatrix& targets,
                  const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (items.empty()) throw std::invalid_argument("training set is empty");
  if (targets.rows() != as_index(items.size()) || targets.cols() != as_index(model.spec().output_dim))
    throw std::invalid_argument("targets must be items x output dim");

  Rng rng(config.seed);
  auto [training, validation] = validation_split(items.size(), config.validation_fraction, rng);
  if (training.empty()) throw std::invalid_argument("validation split leaves no training items");

  auto params = model.parameters();
  nn::Adam adam(params, {.learning_rate = config.learning_rate});
  const DropoutRates rates{config.word_dropout, config.dropout};

  TrainReport report;
  report.best_validation = std::numeric_limits<double>::infinity();
  std::vector<Eigen::MatrixXd> best;
  std::size_t since_best = 0;
  report.stop_reason = config.max_epochs == 0 ? "no-epochs" : "max-epochs";
  model.zero_grad();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(training.begin(), training.end(), rng);
    double train_total = 0.0;
    for (std::size_t start = 0; start < training.size(); start += config.batch_size) {
      const std::size_t end = std::min(training.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = training[k];
        Trace trace;
        const VectorXd pred = model.forward(items[i], nn::Mode::kTrain, rng, rates, &trace);
        const auto loss = nn::mse_loss(pred, targets.row(as_index(i)).transpose());
        train_total += loss.value;
        model.backward(items[i], trace, scale * loss.grad);
      }
      nn::l2_penalty(params, config.l2, true);
      adam.step();
      model.zero_grad();
    }
    const double train_loss = train_total / static_cast<double>(training.size());
    const double val_loss = validation.empty() ? train_loss : subset_mse(model, items, targets, validation);
    report.epochs.push_back({epoch, train_loss, val_loss});
    if (log) *log << epoch << '\t' << train_loss << '\t' << val_loss << '\n';

    if (val_loss < report.best_validation) {
      report.best_validation = val_loss;
      report.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (const auto* p : params) best.push_back(p->value);
    } else if (++since_best >= config.patience) {
      report.stop_reason = "early-stop";
      break;
    }
  }
  if (!best.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  }
  if (report.epochs.empty()) report.best_validation = 0.0;
  return report;
}

std::vector<RankedTag> analogy(const Cb2cfModel& model, TagField field, const features::FieldVocabulary& vocab,
                               const std::string& a, const std::string& b, const std::string& c,
                               std::size_t topk) {
  const auto lookup = [&](const std::string& tag) {
    const auto idx = vocab.index_of(tag);
    if (!idx || *idx == 0) throw std::invalid_argument("unknown " + std::string(field_name(field)) + " tag '" + tag + "'");
    return *idx;
  };
  const std::size_t ia = lookup(a), ib = lookup(b), ic = lookup(c);
  const VectorXd query =
      model.tag_representation(field, ic) + model.tag_representation(field, ia) - model.tag_representation(field, ib);
  if (query.squaredNorm() == 0.0) throw std::invalid_argument("analogy query vector has zero norm");

  std::vector<RankedTag> ranked;
  // Index 0 is the missing-value sentinel, not a tag.
  for (std::size_t t = 1; t < vocab.size(); ++t) {
    if (t == ia || t == ib || t == ic) continue;
    const auto sim = embed::cosine(query.transpose(), model.tag_representation(field, t).transpose());
    ranked.push_back({t, vocab.tags[t], sim.value_or(-1.0)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedTag& x, const RankedTag& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return x.tag < y.tag;
  });
  if (ranked.size() > topk) ranked.resize(topk);
  return ranked;
}

namespace {

constexpr int kCheckpointVersion = 1;

json spec_to_json(const SystemSpec& s) {
  json enabled = json::array();
  for (Component c : kComponents)
    if (s.has(c)) enabled.push_back(component_name(c));
  return {{"components", enabled},
          {"tag_hidden", s.tag_hidden},
          {"bow_hidden", s.bow_hidden},
          {"cnn_filters", s.cnn_filters},
          {"cnn_width", s.cnn_width},
          {"cnn_hidden", s.cnn_hidden},
          {"year_hidden", s.year_hidden},
          {"combiner_hidden", s.combiner_hidden},
          {"output_dim", s.output_dim},
          {"cnn_variant", variant_name(s.variant)}};
}

SystemSpec spec_from_json(const json& j) {
  SystemSpec s;
  for (const auto& name : j.at("components")) {
    const auto c = parse_component(name.get<std::string>());
    if (!c) throw std::runtime_error("checkpoint names unknown component " + name.dump());
    s.enable(*c);
  }
  s.tag_hidden = j.at("tag_hidden").get<std::array<std::size_t, 4>>();
  s.bow_hidden = j.at("bow_hidden");
  s.cnn_filters = j.at("cnn_filters");
  s.cnn_width = j.at("cnn_width");
  s.cnn_hidden = j.at("cnn_hidden");
  s.year_hidden = j.at("year_hidden");
  s.combiner_hidden = j.at("combiner_hidden");
  s.output_dim = j.at("output_dim");
  const auto v = parse_variant(j.at("cnn_variant").get<std::string>());
  if (!v) throw std::runtime_error("checkpoint names unknown CNN variant");
  s.variant = *v;
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Cb2cfModel& model,
                     const std::filesystem::path& features_dir) {
  const auto& in = model.inputs();
  const json meta = {{"format", "cb2cf-model"},
                     {"version", kCheckpointVersion},
                     {"spec", spec_to_json(model.spec())},
                     {"inputs", {{"tags", in.tags}, {"bow", in.bow}, {"max_words", in.max_words}}},
                     {"features", features_dir.empty() ? "" : std::filesystem::absolute(features_dir).string()}};
  std::vector<nn::NamedTensor> tensors;
  for (const auto* p : model.parameters()) tensors.push_back({p->name, p->value});
  nn::save_tensors(path, meta.dump(), tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto file = nn::load_tensors(path);
  json meta;
  try {
    meta = json::parse(file.metadata);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": checkpoint metadata is not JSON: " + e.what());
  }
  if (meta.value("format", "") != "cb2cf-model") throw std::runtime_error(path.string() + ": not a model checkpoint");
  if (meta.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + meta.value("version", json()).dump());
  const SystemSpec spec = spec_from_json(meta.at("spec"));
  InputDims in;
  in.tags = meta.at("inputs").at("tags").get<std::array<std::size_t, 4>>();
  in.bow = meta.at("inputs").at("bow");
  in.max_words = meta.at("inputs").at("max_words");

  const RowMatrix* words = nullptr;
  RowMatrix word_values;
  for (const auto& t : file.tensors) {
    if (t.name == "words") {
      word_values = t.value;
      words = &word_values;
    }
  }
  Checkpoint ck{Cb2cfModel(spec, in, words, 0), meta.value("features", "")};
  auto params = ck.model.parameters();
  if (params.size() != file.tensors.size())
    throw std::runtime_error(path.string() + ": tensor count does not match the system");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& t = file.tensors[k];
    if (t.name != params[k]->name || t.value.rows() != params[k]->value.rows() ||
        t.value.cols() != params[k]->value.cols())
      throw std::runtime_error(path.string() + ": tensor '" + t.name + "' does not match the system");
    params[k]->value = t.value;
  }
  return ck;
}

}  // namespace cb2cf::model
