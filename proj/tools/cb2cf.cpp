#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cb2cf/corpus.hpp"
#include "cb2cf/embed.hpp"
#include "cb2cf/eval.hpp"
#include "cb2cf/featurize.hpp"
#include "cb2cf/model.hpp"
#include "cb2cf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cb2cf;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::ofstream open_log(const std::string& path) {
  std::ofstream out;
  if (!path.empty()) {
    out.open(path);
    if (!out) throw std::runtime_error("cannot open log " + path);
  }
  return out;
}

// Shared SGNS flags; defaults come from `c`.
void add_sgns_options(CLI::App* cmd, embed::SgnsConfig& c, bool window) {
  cmd->add_option("--dim", c.dim, "Embedding dimension")->capture_default_str();
  cmd->add_option("--neg", c.negatives, "Negative samples per pair")->capture_default_str();
  cmd->add_option("--subsample", c.subsample, "Subsampling threshold")->capture_default_str();
  cmd->add_option("--epochs", c.epochs, "Passes over the data")->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Initial learning rate")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  if (window) cmd->add_option("--window", c.window, "Maximum context window")->capture_default_str();
}

void add_feature_options(CLI::App* cmd, features::FeatureConfig& c) {
  cmd->add_option("--bow-centroids", c.bow_centroids, "k-means clusters for BOW")->capture_default_str();
  cmd->add_option("--bow-temperature", c.bow_temperature, "Softmax temperature for BOW")->capture_default_str();
  cmd->add_option("--max-words", c.max_words, "Plot words kept for the CNN")->capture_default_str();
  cmd->add_option("--min-tag-count", c.min_tag_count, "Minimum tag frequency")->capture_default_str();
}

void add_train_options(CLI::App* cmd, model::TrainConfig& c) {
  cmd->add_option("--batch", c.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--l2", c.l2, "L2 weight")->capture_default_str();
  cmd->add_option("--dropout", c.dropout, "Unit dropout")->capture_default_str();
  cmd->add_option("--word-dropout", c.word_dropout, "Word dropout")->capture_default_str();
  cmd->add_option("--epochs", c.max_epochs, "Maximum epochs")->capture_default_str();
  cmd->add_option("--patience", c.patience, "Early-stopping patience")->capture_default_str();
  cmd->add_option("--validation-fraction", c.validation_fraction, "Held-out share of training items")
      ->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
}

struct Architecture {
  model::SystemSpec dims;
  std::vector<std::size_t> tag_hidden;
  std::string variant = "non-static";

  // Copies the sizes onto a named system.
  model::SystemSpec apply(model::SystemSpec spec) const {
    if (!tag_hidden.empty()) {
      if (tag_hidden.size() != 4) throw std::invalid_argument("--tag-hidden takes four sizes");
      std::copy(tag_hidden.begin(), tag_hidden.end(), spec.tag_hidden.begin());
    } else {
      spec.tag_hidden = dims.tag_hidden;
    }
    spec.bow_hidden = dims.bow_hidden;
    spec.cnn_filters = dims.cnn_filters;
    spec.cnn_width = dims.cnn_width;
    spec.cnn_hidden = dims.cnn_hidden;
    spec.year_hidden = dims.year_hidden;
    spec.combiner_hidden = dims.combiner_hidden;
    const auto v = model::parse_variant(variant);
    if (!v) throw std::invalid_argument("unknown CNN variant '" + variant + "'");
    spec.variant = *v;
    return spec;
  }
};

void add_architecture_options(CLI::App* cmd, Architecture& a) {
  cmd->add_option("--variant", a.variant, "non-static, static or random-init")->capture_default_str();
  cmd->add_option("--tag-hidden", a.tag_hidden, "Hidden sizes for genres,actors,directors,languages")
      ->delimiter(',');
  cmd->add_option("--bow-hidden", a.dims.bow_hidden)->capture_default_str();
  cmd->add_option("--cnn-filters", a.dims.cnn_filters)->capture_default_str();
  cmd->add_option("--cnn-width", a.dims.cnn_width)->capture_default_str();
  cmd->add_option("--cnn-hidden", a.dims.cnn_hidden)->capture_default_str();
  cmd->add_option("--year-hidden", a.dims.year_hidden)->capture_default_str();
  cmd->add_option("--combiner-hidden", a.dims.combiner_hidden)->capture_default_str();
}

const ContentProfile& find_item(const std::vector<ContentProfile>& items, const std::string& id) {
  for (const auto& p : items)
    if (p.id == id) return p;
  throw std::runtime_error("item '" + id + "' is not in the metadata");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-based prediction of collaborative-filtering item vectors"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file, one [subcommand] section per command; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  // train-word2vec
  embed::SgnsConfig w2v = embed::SgnsConfig::words();
  std::string corpus_path, out_path;
  std::size_t vocab_cap = corpus::Vocabulary::kDefaultCap;
  auto* word2vec = app.add_subcommand("train-word2vec", "Train word vectors on a text corpus");
  word2vec->add_option("--corpus", corpus_path, "One sentence per line")->required()->check(CLI::ExistingFile);
  word2vec->add_option("--vocab-cap", vocab_cap, "Most frequent tokens kept")->capture_default_str();
  word2vec->add_option("--out", out_path, "Output vector file")->required();
  add_sgns_options(word2vec, w2v, true);
  word2vec->callback([&] {
    const auto sentences = corpus::read_corpus(corpus_path);
    const auto vocab = corpus::build_vocabulary(sentences, vocab_cap);
    embed::train_word2vec(sentences, vocab, w2v).save(out_path);
    std::cerr << "wrote " << vocab.size() << " word vectors to " << out_path << "\n";
  });

  // train-item2vec
  embed::SgnsConfig i2v = embed::SgnsConfig::items();
  std::string ratings_path, sets_path;
  double threshold = 3.5;
  auto* item2vec = app.add_subcommand("train-item2vec", "Train CF item vectors from ratings or co-occurrence sets");
  auto* ratings_opt = item2vec->add_option("--ratings", ratings_path, "userId,movieId,rating,timestamp CSV")
                          ->check(CLI::ExistingFile);
  auto* sets_opt = item2vec->add_option("--sets", sets_path, "One set of item ids per line")->check(CLI::ExistingFile);
  ratings_opt->excludes(sets_opt);
  item2vec->add_option("--threshold", threshold, "Keep ratings strictly above this")->capture_default_str();
  item2vec->add_option("--out", out_path, "Output vector file")->required();
  add_sgns_options(item2vec, i2v, false);
  item2vec->callback([&] {
    embed::CooccurrenceSets sets;
    if (!ratings_path.empty()) {
      sets = pipeline::cooccurrence_from_ratings(pipeline::load_ratings(ratings_path), threshold);
    } else if (!sets_path.empty()) {
      auto file = pipeline::load_sets(sets_path);
      if (file.dropped) std::cerr << "dropped " << file.dropped << " lines with fewer than two items\n";
      sets = std::move(file.sets);
    } else {
      throw std::invalid_argument("one of --ratings or --sets is required");
    }
    const auto table = embed::train_item2vec(sets, i2v);
    table.save(out_path);
    std::cerr << "wrote " << table.size() << " item vectors from " << sets.size() << " sets to " << out_path << "\n";
  });

  // fit-features
  features::FeatureConfig fcfg;
  std::string metadata_path, words_path, out_dir;
  auto* fit = app.add_subcommand("fit-features", "Fit tag vocabularies, year stats and BOW centroids");
  fit->add_option("--metadata", metadata_path, "Item metadata (JSON Lines)")->required()->check(CLI::ExistingFile);
  fit->add_option("--word-vectors", words_path, "Word vector file")->required()->check(CLI::ExistingFile);
  fit->add_option("--seed", fcfg.seed, "k-means seed")->capture_default_str();
  fit->add_option("--out", out_dir, "Output directory")->required();
  add_feature_options(fit, fcfg);
  fit->callback([&] {
    const auto items = pipeline::load_metadata(metadata_path);
    const auto ctx = features::fit_feature_context(items, embed::EmbeddingTable::load(words_path), fcfg);
    fs::create_directories(out_dir);
    features::save_feature_context(ctx, out_dir, metadata_path);
    std::cerr << "fitted features on " << items.size() << " items into " << out_dir << "\n";
  });

  // train-model
  model::TrainConfig tcfg;
  Architecture arch;
  std::string system = "CNN+Tags+Year", features_dir, targets_path, log_path;
  auto* train = app.add_subcommand("train-model", "Train one system on every item with a target vector");
  train->add_option("--system", system, "Components joined by '+'")->capture_default_str();
  train->add_option("--features", features_dir, "Directory from fit-features")->required()->check(CLI::ExistingDirectory);
  train->add_option("--targets", targets_path, "CF item vectors")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", tcfg.seed, "Training seed")->capture_default_str();
  train->add_option("--out", out_path, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Per-epoch loss log");
  add_train_options(train, tcfg);
  add_architecture_options(train, arch);
  train->callback([&] {
    const auto loaded = features::load_feature_context(features_dir);
    const auto& ctx = loaded.context;
    const auto items = pipeline::load_metadata(loaded.metadata);
    const auto data = eval::align_dataset(items, embed::EmbeddingTable::load(targets_path), ctx.words);
    if (data.items.empty()) throw std::runtime_error("no metadata item has a target vector");
    auto spec = arch.apply(model::named_system(system, static_cast<std::size_t>(data.targets.cols())));
    const auto needs = model::needs_of(spec);
    std::vector<features::FeatureBundle> bundles;
    for (const auto& p : data.items) bundles.push_back(features::featurize_item(p, ctx, needs));
    model::Cb2cfModel net(spec, model::input_dims(ctx), spec.uses_text() ? &ctx.words.vectors() : nullptr, tcfg.seed);
    auto log = open_log(log_path);
    const auto report = model::train(net, bundles, data.targets, tcfg, log_path.empty() ? nullptr : &log);
    model::save_checkpoint(out_path, net, features_dir);
    std::cerr << model::system_label(spec) << ": " << report.epochs.size() << " epochs (" << report.stop_reason
              << "), best " << report.best_epoch << ", saved " << out_path << "\n";
  });

  // evaluate
  eval::RunConfig rcfg;
  Architecture eval_arch;
  std::vector<std::string> systems = {"CNN+Tags+Year"};
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  std::string report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate systems and report MSE, MPR and NDCG");
  evaluate->add_option("--systems", systems, "Comma-separated systems")->delimiter(',')->capture_default_str();
  evaluate->add_option("--folds", folds, "Number of folds")->capture_default_str();
  evaluate->add_option("--ndcg-k", rcfg.ndcg_k, "NDCG cutoffs")->delimiter(',')->capture_default_str();
  evaluate->add_option("--seed", seed, "Seed for folds, k-means and training")->capture_default_str();
  evaluate->add_option("--report", report_path, "Report file; .json for JSON, TSV otherwise");
  evaluate->add_option("--features", features_dir, "Directory from fit-features")->check(CLI::ExistingDirectory);
  evaluate->add_option("--metadata", metadata_path, "Item metadata (JSON Lines)")->check(CLI::ExistingFile);
  evaluate->add_option("--word-vectors", words_path, "Word vector file")->check(CLI::ExistingFile);
  evaluate->add_option("--targets", targets_path, "CF item vectors")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--log", log_path, "Per-epoch loss log");
  add_feature_options(evaluate, rcfg.features);
  add_train_options(evaluate, rcfg.train);
  add_architecture_options(evaluate, eval_arch);
  evaluate->callback([&] {
    embed::EmbeddingTable words;
    if (!features_dir.empty()) {
      auto loaded = features::load_feature_context(features_dir);
      // Explicit flags win over the recorded feature settings only for paths.
      if (metadata_path.empty()) metadata_path = loaded.metadata.string();
      if (words_path.empty()) words_path = loaded.word_vectors.string();
      rcfg.features.max_words = loaded.context.config.max_words;
      rcfg.features.bow_centroids = loaded.context.config.bow_centroids;
      rcfg.features.bow_temperature = loaded.context.config.bow_temperature;
      rcfg.features.min_tag_count = loaded.context.config.min_tag_count;
    }
    if (metadata_path.empty() || words_path.empty())
      throw std::invalid_argument("evaluate needs --features or both --metadata and --word-vectors");
    rcfg.features.seed = seed;
    rcfg.train.seed = seed;
    const auto data = eval::align_dataset(pipeline::load_metadata(metadata_path),
                                          embed::EmbeddingTable::load(targets_path),
                                          embed::EmbeddingTable::load(words_path));
    const auto assignment = eval::make_folds(data.items.size(), folds, seed);
    auto log = open_log(log_path);
    std::vector<eval::EvalReport> reports;
    for (const auto& name : systems) {
      const auto spec = eval_arch.apply(model::named_system(name, static_cast<std::size_t>(data.targets.cols())));
      if (!log_path.empty()) log << "# " << model::system_label(spec) << "\n";
      reports.push_back(eval::run_system(spec, data, assignment, rcfg, {}, log_path.empty() ? nullptr : &log));
      std::cerr << reports.back().system << ": MPR " << reports.back().mean.mpr << "\n";
    }
    const std::string tsv = eval::report_tsv(reports);
    if (report_path.empty()) {
      std::cout << tsv;
    } else if (fs::path(report_path).extension() == ".json") {
      write_text(report_path, eval::report_json(reports, folds, seed));
    } else {
      write_text(report_path, tsv);
    }
  });

  // recommend
  std::string model_path, catalog_path, item_id;
  std::size_t topk = 4;
  auto* recommend = app.add_subcommand("recommend", "Nearest catalog items to an item's predicted CF vector");
  recommend->add_option("--model", model_path, "Checkpoint from train-model")->required()->check(CLI::ExistingFile);
  recommend->add_option("--catalog", catalog_path, "CF item vectors to search")->required()->check(CLI::ExistingFile);
  recommend->add_option("--item", item_id, "Item id in the metadata")->required();
  recommend->add_option("--metadata", metadata_path, "Metadata holding the item; defaults to the fitted file")
      ->check(CLI::ExistingFile);
  recommend->add_option("--topk", topk, "Results to print")->capture_default_str();
  recommend->callback([&] {
    const auto ck = model::load_checkpoint(model_path);
    const auto loaded = features::load_feature_context(ck.features);
    const auto items = pipeline::load_metadata(metadata_path.empty() ? loaded.metadata : fs::path(metadata_path));
    const auto bundle = features::featurize_item(find_item(items, item_id), loaded.context,
                                                 model::needs_of(ck.model.spec()));
    const RowMatrix predicted = model::predict(ck.model, std::span(&bundle, 1));
    const auto catalog = embed::EmbeddingTable::load(catalog_path);
    if (catalog.dim() != static_cast<std::size_t>(predicted.cols()))
      throw std::runtime_error("catalog dimension does not match the model output");
    for (const auto& n : embed::similarity_search(predicted.row(0), catalog, topk, {item_id}))
      std::printf("%s\t%.6f\n", n.id.c_str(), n.similarity);
  });

  // analogy
  std::string field_name = "actors", a, b, c;
  std::size_t analogy_topk = 1;
  auto* analogy = app.add_subcommand("analogy", "Tag arithmetic: repr(C) + repr(A) - repr(B)");
  analogy->add_option("--model", model_path, "Checkpoint from train-model")->required()->check(CLI::ExistingFile);
  analogy->add_option("--field", field_name, "genres, actors, directors or languages")->capture_default_str();
  analogy->add_option("--a", a)->required();
  analogy->add_option("--b", b)->required();
  analogy->add_option("--c", c)->required();
  analogy->add_option("--topk", analogy_topk, "Results to print")->capture_default_str();
  analogy->callback([&] {
    const auto field = parse_field(field_name);
    if (!field) throw std::invalid_argument("unknown tag field '" + field_name + "'");
    const auto ck = model::load_checkpoint(model_path);
    const auto loaded = features::load_feature_context(ck.features);
    for (const auto& r : model::analogy(ck.model, *field, loaded.context.tags.field(*field), a, b, c, analogy_topk))
      std::printf("%s\t%.6f\n", r.tag.c_str(), r.similarity);
  });

  // synth
  pipeline::SyntheticSpec sspec;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with planted CF vectors");
  synth->add_option("--items", sspec.items)->capture_default_str();
  synth->add_option("--clusters", sspec.clusters)->capture_default_str();
  synth->add_option("--noise", sspec.noise)->capture_default_str();
  synth->add_option("--dim", sspec.dim, "Planted vector dimension")->capture_default_str();
  synth->add_option("--sets", sspec.sets)->capture_default_str();
  synth->add_option("--vocabulary", sspec.vocabulary, "Distinct plot words")->capture_default_str();
  synth->add_option("--corpus-sentences", sspec.corpus_sentences)->capture_default_str();
  synth->add_option("--missing-rate", sspec.missing_rate)->capture_default_str();
  synth->add_option("--seed", sspec.seed)->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->callback([&] {
    pipeline::write_synthetic(pipeline::generate_synthetic(sspec), out_dir);
    std::cerr << "wrote " << sspec.items << " synthetic items to " << out_dir << "\n";
  });

  // export
  std::string vectors_path, label_kind = "genre";
  auto* exporter = app.add_subcommand("export", "Write vectors with a genre or year label per row");
  exporter->add_option("--vectors", vectors_path, "Vector file")->required()->check(CLI::ExistingFile);
  exporter->add_option("--labels", label_kind, "genre or year")
      ->check(CLI::IsMember({"genre", "year"}))
      ->capture_default_str();
  exporter->add_option("--metadata", metadata_path, "Item metadata (JSON Lines)")->required()->check(CLI::ExistingFile);
  exporter->add_option("--out", out_path, "Output TSV")->required();
  exporter->callback([&] {
    const auto labels = pipeline::item_labels(pipeline::load_metadata(metadata_path),
                                              label_kind == "genre" ? pipeline::LabelKind::kGenre
                                                                    : pipeline::LabelKind::kYear);
    pipeline::export_labeled_vectors(embed::EmbeddingTable::load(vectors_path), labels, out_path);
  });

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    std::cerr << "cb2cf: " << e.what() << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 2;
  } catch (const std::exception& e) {
    std::cerr << "cb2cf: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
