// Command-line front end: features, stats, train, convert, eval.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "emovc/audio_io.hpp"
#include "emovc/dataset.hpp"
#include "emovc/error.hpp"
#include "emovc/feature_cache.hpp"
#include "emovc/pipeline.hpp"
#include "emovc/prosody.hpp"
#include "emovc/run_config.hpp"
#include "emovc/training.hpp"

namespace fs = std::filesystem;
using namespace emovc;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw InvalidInputError("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw InvalidInputError("cannot write " + p.string());
  f << text << '\n';
}

std::vector<dataset::ManifestEntry> load_index(const fs::path& features_dir) {
  const fs::path index = features_dir / pipeline::kIndexFileName;
  if (!fs::exists(index)) throw InvalidInputError(index.string() + " not found; run `emovc features` first");
  return dataset::load_manifest(index);
}

std::vector<features::FeatureRecord> load_records(const fs::path& dir, const std::vector<dataset::ManifestEntry>& index,
                                                  const std::string& speaker, const std::string& emotion) {
  std::vector<features::FeatureRecord> out;
  for (const auto& e : index) {
    if (e.split == dataset::Split::kTrain && e.speaker == speaker && e.emotion == emotion) {
      out.push_back(features::read_feature_record(dir / dataset::feature_file_name(e)));
    }
  }
  return out;
}

struct FeaturesArgs {
  std::string manifest, out;
  double vad_db = features::kDefaultVadThresholdDb;
  double ratio = dataset::kTrainRatio;
};

int run_features(const FeaturesArgs& a, std::uint64_t seed) {
  auto entries = dataset::load_manifest(a.manifest);
  const fs::path base = fs::path(a.manifest).parent_path();
  for (auto& e : entries) {
    fs::path p = e.audio_path;
    if (p.is_relative()) e.audio_path = fs::absolute(base / p).lexically_normal().string();
  }
  const auto split = dataset::split_train_test(entries, a.ratio, seed);
  fs::create_directories(a.out);
  std::size_t done = 0;
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& e : *part) {
      const auto wave = features::load_wav_16k(e.audio_path);
      const auto record = pipeline::extract_features(e, wave, a.vad_db);
      features::write_feature_record(fs::path(a.out) / dataset::feature_file_name(e), record);
      ++done;
    }
  }
  pipeline::write_index(fs::path(a.out) / pipeline::kIndexFileName, split.train, split.test);
  std::cout << "extracted " << done << " utterances (" << split.train.size() << " train, " << split.test.size()
            << " test) into " << a.out << '\n';
  return 0;
}

int run_stats(const std::string& features_dir, const std::string& out) {
  const auto index = load_index(features_dir);
  std::map<std::string, std::vector<features::McepSeq>> by_speaker;
  std::map<std::pair<std::string, std::string>, std::vector<std::vector<double>>> by_domain;
  for (const auto& e : index) {
    if (e.split != dataset::Split::kTrain) continue;
    const auto r = features::read_feature_record(fs::path(features_dir) / dataset::feature_file_name(e));
    by_speaker[e.speaker].push_back(r.mcep_seq());
    by_domain[{e.speaker, e.emotion}].push_back(r.f0);
  }
  if (by_speaker.empty()) throw EmptyResultError("no training utterances in " + features_dir);
  fs::create_directories(out);
  for (const auto& [speaker, seqs] : by_speaker) {
    write_text(fs::path(out) / pipeline::mcep_stats_file_name(speaker),
               features::mcep_stats_to_json(features::compute_mcep_stats(seqs), speaker));
  }
  for (const auto& [key, tracks] : by_domain) {
    write_text(fs::path(out) / pipeline::logf0_stats_file_name(key.first, key.second),
               prosody::logf0_stats_to_json(prosody::estimate_logf0_stats(tracks), key.first, key.second));
  }
  std::cout << "wrote statistics for " << by_speaker.size() << " speaker(s) and " << by_domain.size()
            << " domain(s) to " << out << '\n';
  return 0;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, bool resume) {
  RunConfig rc = load_run_config(config_path);
  if (seed) rc.train.seed = *seed;
  const auto index = load_index(rc.features_dir);
  const fs::path stats_path = rc.stats_dir / pipeline::mcep_stats_file_name(rc.speaker);
  if (!fs::exists(stats_path)) throw InvalidInputError(stats_path.string() + " not found; run `emovc stats` first");
  const auto mcep_stats = features::mcep_stats_from_json(read_text(stats_path));

  const auto d1 = dataset::build_domain_corpus(rc.speaker, rc.emotion_1,
                                               load_records(rc.features_dir, index, rc.speaker, rc.emotion_1), mcep_stats);
  const auto d2 = dataset::build_domain_corpus(rc.speaker, rc.emotion_2,
                                               load_records(rc.features_dir, index, rc.speaker, rc.emotion_2), mcep_stats);

  fs::create_directories(rc.out_dir);
  training::TrainingRun run;
  run.checkpoint_path = rc.out_dir / "checkpoint.emvk";
  run.loss_log_path = rc.out_dir / "loss_log.csv";
  run.checkpoint_every = rc.checkpoint_every;

  training::TrainState state;
  if (resume && fs::exists(run.checkpoint_path)) {
    auto loaded = training::load_checkpoint(run.checkpoint_path, rc.train);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    state = std::move(loaded.state);
    std::cout << "resuming at iteration " << state.iteration << '\n';
  } else {
    if (fs::exists(run.loss_log_path)) fs::remove(run.loss_log_path);
    state = training::make_initial_state(rc.train);
  }
  state.info.speaker = rc.speaker;
  state.info.emotion = {rc.emotion_1, rc.emotion_2};
  state.info.mcep_stats = mcep_stats;
  state.info.logf0 = {d1.logf0_stats, d2.logf0_stats};

  const auto total = state.config.schedule.total_iters;
  run.on_step = [total](const training::StepReport& r) {
    if (r.iteration % 100 == 0 || r.iteration == total) {
      std::cout << "iter " << r.iteration << "/" << total << " total " << r.parts.total << " recon "
                << r.parts.recon[0] + r.parts.recon[1] << " gan_d " << r.parts.gan_d << '\n';
    }
  };
  training::run_training(state, d1, d2, run);
  std::cout << "checkpoint: " << run.checkpoint_path.string() << "\nloss log: " << run.loss_log_path.string() << '\n';
  return 0;
}

struct ConvertArgs {
  std::string checkpoint, input, out, direction;
  std::string speaker, source_emotion, target_emotion;
  std::string mcep_stats, source_logf0, target_logf0;
  bool f0_only = false;
};

int run_convert(const ConvertArgs& a) {
  pipeline::ConversionConfig cfg;
  cfg.checkpoint = a.checkpoint;
  cfg.direction = pipeline::parse_direction(a.direction);
  cfg.speaker = a.speaker;
  cfg.source_emotion = a.source_emotion;
  cfg.target_emotion = a.target_emotion;
  if (!a.mcep_stats.empty()) cfg.mcep_stats_path = a.mcep_stats;
  if (!a.source_logf0.empty()) cfg.source_logf0_path = a.source_logf0;
  if (!a.target_logf0.empty()) cfg.target_logf0_path = a.target_logf0;
  cfg.f0_only = a.f0_only;
  const auto wave = features::load_wav_16k(a.input);
  const auto out = pipeline::convert_utterance(wave, cfg);
  features::write_wav(a.out, out);
  std::cout << "wrote " << a.out << " (" << out.samples.size() << " samples)\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& features_dir, const std::string& out) {
  const auto state = training::load_checkpoint(checkpoint).state;
  std::vector<dataset::ManifestEntry> test;
  for (const auto& e : load_index(features_dir)) {
    if (e.split == dataset::Split::kTest) test.push_back(e);
  }
  if (test.empty()) throw EmptyResultError("test split is empty");
  const auto report = pipeline::evaluate(state, test);
  const std::string json = report.to_json();
  if (out.empty()) {
    std::cout << json << '\n';
  } else {
    write_text(out, json);
    std::cout << "evaluated " << report.rows.size() << " utterances, mean MCD " << report.mean_mcd_db << " dB\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotional voice conversion: feature extraction, training, conversion and evaluation"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { seed = v, seed_given = true; }, "Random seed");
  };
  add_seed(&app);

  FeaturesArgs fa;
  auto* features_cmd = app.add_subcommand("features", "Extract and cache vocoder features for a manifest");
  features_cmd->add_option("--manifest", fa.manifest, "Manifest CSV")->required();
  features_cmd->add_option("--out", fa.out, "Feature directory")->required();
  features_cmd->add_option("--vad-db", fa.vad_db, "VAD threshold below the utterance peak (dB)");
  features_cmd->add_option("--train-ratio", fa.ratio, "Train fraction per (speaker, emotion)");
  add_seed(features_cmd);

  std::string stats_features, stats_out;
  auto* stats_cmd = app.add_subcommand("stats", "Compute normalization and log-F0 statistics from the train split");
  stats_cmd->add_option("--features-dir", stats_features, "Feature directory")->required();
  stats_cmd->add_option("--out", stats_out, "Statistics directory")->required();
  add_seed(stats_cmd);

  std::string config_path;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model for one emotion pair");
  train_cmd->add_option("--config", config_path, "key=value run configuration")->required();
  train_cmd->add_flag("--resume", resume, "Continue from the checkpoint in out_dir");
  add_seed(train_cmd);

  ConvertArgs ca;
  auto* convert_cmd = app.add_subcommand("convert", "Convert one utterance");
  convert_cmd->add_option("--checkpoint", ca.checkpoint, "Checkpoint file")->required();
  convert_cmd->add_option("--input", ca.input, "Input WAV")->required();
  convert_cmd->add_option("--out", ca.out, "Output WAV")->required();
  convert_cmd->add_option("--direction", ca.direction, "1to2, 2to1, 1to1 or 2to2")->required();
  convert_cmd->add_option("--speaker", ca.speaker, "Expected speaker");
  convert_cmd->add_option("--source-emotion", ca.source_emotion, "Expected source emotion");
  convert_cmd->add_option("--target-emotion", ca.target_emotion, "Expected target emotion");
  convert_cmd->add_option("--mcep-stats", ca.mcep_stats, "Override speaker MCEP statistics");
  convert_cmd->add_option("--source-logf0", ca.source_logf0, "Override source log-F0 statistics");
  convert_cmd->add_option("--target-logf0", ca.target_logf0, "Override target log-F0 statistics");
  convert_cmd->add_flag("--f0-only", ca.f0_only, "Convert only F0 (linear log-F0 baseline)");
  add_seed(convert_cmd);

  std::string eval_checkpoint, eval_features, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Objective evaluation on the test split");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--features-dir", eval_features, "Feature directory holding index.csv")->required();
  eval_cmd->add_option("--out", eval_out, "Report path (stdout when omitted)");
  add_seed(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "usage: emovc {features|stats|train|convert|eval} [options] [--seed N]\n";
    return 1;
  }

  try {
    if (*features_cmd) return run_features(fa, seed);
    if (*stats_cmd) return run_stats(stats_features, stats_out);
    if (*train_cmd) return run_train(config_path, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt, resume);
    if (*convert_cmd) return run_convert(ca);
    if (*eval_cmd) return run_eval(eval_checkpoint, eval_features, eval_out);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
