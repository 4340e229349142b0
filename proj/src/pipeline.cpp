#include "emovc/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "emovc/error.hpp"
#include "emovc/prosody.hpp"
#include "json.hpp"

namespace emovc::pipeline {

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw InvalidInputError("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<int>(m < n ? m : period - m);
}

// Voiced ln f0 mean and population std.
std::pair<double, double> voiced_log_moments(std::span<const double> f0) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (double f : f0) {
    if (f > 0.0) {
      const double l = std::log(f);
      sum += l;
      sq += l * l;
      ++n;
    }
  }
  if (n == 0) return {0.0, 0.0};
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sq / n - mean * mean))};
}

}  // namespace

Direction parse_direction(const std::string& text) {
  if (text.size() == 4 && text.substr(1, 2) == "to" && (text[0] == '1' || text[0] == '2') &&
      (text[3] == '1' || text[3] == '2')) {
    return {text[0] - '1', text[3] - '1'};
  }
  throw InvalidInputError("direction must be 1to2, 2to1, 1to1 or 2to2, got '" + text + "'");
}

std::string direction_string(Direction d) { return std::to_string(d.source + 1) + "to" + std::to_string(d.target + 1); }

Converter::Converter(training::TrainState state, const ConversionConfig& config)
    : state_(std::move(state)), config_(config) {
  const auto& info = state_.info;
  const Direction d = config_.direction;
  if (d.source < 0 || d.source > 1 || d.target < 0 || d.target > 1) throw InvalidInputError("bad direction");
  if (!config_.speaker.empty() && config_.speaker != info.speaker) {
    throw ConfigError("checkpoint was trained for speaker '" + info.speaker + "', not '" + config_.speaker + "'");
  }
  if (!config_.source_emotion.empty() && config_.source_emotion != info.emotion[d.source]) {
    throw ConfigError("source emotion '" + config_.source_emotion + "' is not domain " +
                      std::to_string(d.source + 1) + " ('" + info.emotion[d.source] + "') of the checkpoint");
  }
  if (!config_.target_emotion.empty() && config_.target_emotion != info.emotion[d.target]) {
    throw ConfigError("target emotion '" + config_.target_emotion + "' is not domain " +
                      std::to_string(d.target + 1) + " ('" + info.emotion[d.target] + "') of the checkpoint");
  }

  if (config_.mcep_stats_path) {
    mcep_stats_ = features::mcep_stats_from_json(read_text(*config_.mcep_stats_path));
  } else if (info.mcep_stats) {
    mcep_stats_ = *info.mcep_stats;
  } else if (!config_.f0_only) {
    throw InvalidInputError("missing mcep statistics: none in the checkpoint and no stats file given");
  }
  if (!config_.f0_only && static_cast<int>(mcep_stats_.mean.size()) != state_.config.model.mcep_dim) {
    throw InvalidInputError("mcep statistics do not match the model's mcep dimension");
  }

  const std::array<std::optional<std::filesystem::path>, 2> paths{config_.source_logf0_path,
                                                                   config_.target_logf0_path};
  const std::array<int, 2> domains{d.source, d.target};
  for (int k = 0; k < 2; ++k) {
    std::optional<prosody::LogF0Stats> s;
    if (paths[k]) {
      s = prosody::logf0_stats_from_json(read_text(*paths[k]));
    } else {
      s = info.logf0[domains[k]];
    }
    if (!s) {
      throw InvalidInputError("missing log-F0 statistics for domain " + std::to_string(domains[k] + 1));
    }
    logf0_[domains[k]] = *s;
  }

  if (!config_.f0_only && state_.styles.count[d.target] == 0) {
    throw InvalidInputError("untrained checkpoint: no style average for domain " + std::to_string(d.target + 1));
  }
}

Converter Converter::load(const ConversionConfig& config) {
  return Converter(training::load_checkpoint(config.checkpoint).state, config);
}

Matrix Converter::convert_mcep(const Matrix& mcep, Direction d) const {
  const int dim = state_.config.model.mcep_dim;
  if (mcep.rows() != dim) throw ShapeError("mcep has " + std::to_string(mcep.rows()) + " rows, expected " + std::to_string(dim));
  const long t = mcep.cols();
  if (t == 0) return mcep;
  if (state_.styles.count[d.target] == 0) {
    throw InvalidInputError("untrained checkpoint: no style average for domain " + std::to_string(d.target + 1));
  }
  const long padded = (t + 3) / 4 * 4;
  std::vector<double> x(static_cast<std::size_t>(dim) * padded);
  for (int r = 0; r < dim; ++r) {
    for (long c = 0; c < padded; ++c) x[r * padded + c] = mcep(r, reflect_index(c, t));
  }
  nn::NoGradGuard guard;
  const auto& m = state_.model;
  const nn::Tensor in({1, dim, static_cast<int>(padded)}, std::move(x));
  const nn::Tensor style({1, state_.config.model.style_dim}, state_.styles.mean[d.target]);
  const nn::Tensor out = m.decoder[d.target](m.content[d.source](in), style);
  const auto v = out.values();
  Matrix result(dim, t);
  for (int r = 0; r < dim; ++r) {
    for (long c = 0; c < t; ++c) result(r, c) = v[r * padded + c];
  }
  return result;
}

features::VocoderFrames Converter::convert_frames(const features::VocoderFrames& frames) const {
  frames.validate();
  const Direction d = config_.direction;
  features::VocoderFrames out = frames;
  out.f0 = prosody::convert_f0(frames.f0, logf0_[d.source], logf0_[d.target]);
  if (config_.f0_only || frames.num_frames() == 0) return out;

  const int dim = state_.config.model.mcep_dim;
  const features::McepSeq mcep = features::sp_to_mcep(frames.sp, dim, features::kMcepAlpha, frames.fft_size);
  const features::McepSeq norm = features::normalize(mcep, mcep_stats_);
  features::McepSeq converted{convert_mcep(norm.coeffs, d), mcep.alpha, mcep.fft_size};
  out.sp = features::mcep_to_sp(features::denormalize(converted, mcep_stats_), dim);
  return out;
}

Waveform Converter::convert(const Waveform& wave) const {
  if (wave.sample_rate != features::kSampleRate) {
    return convert(features::resample(wave, features::kSampleRate));
  }
  const features::VocoderFrames frames = features::analyze(wave);
  return features::synthesize(convert_frames(frames));
}

Waveform convert_utterance(const Waveform& wave, const ConversionConfig& config) {
  return Converter::load(config).convert(wave);
}

double mel_cepstral_distortion(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("mcd: coefficient counts differ");
  const long t = std::min(a.cols(), b.cols());
  if (t == 0) throw EmptyResultError("mcd: no shared frames");
  const double k = 10.0 / std::log(10.0);
  double total = 0.0;
  for (long c = 0; c < t; ++c) {
    double s = 0.0;
    for (long r = 1; r < a.rows(); ++r) {
      const double diff = a(r, c) - b(r, c);
      s += diff * diff;
    }
    total += k * std::sqrt(2.0 * s);
  }
  return total / t;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"audio_path", r.audio_path},
                         {"emotion", r.emotion},
                         {"direction", r.direction},
                         {"mcd_db", r.mcd_db},
                         {"logf0_mean_distance", r.logf0_mean_distance},
                         {"logf0_std_distance", r.logf0_std_distance},
                         {"duration_delta_frames", r.duration_delta_frames}});
  }
  j["mean_mcd_db"] = mean_mcd_db;
  j["mean_logf0_mean_distance"] = mean_logf0_mean_distance;
  j["mean_logf0_std_distance"] = mean_logf0_std_distance;
  j["mean_duration_delta_frames"] = mean_duration_delta_frames;
  j["count"] = rows.size();
  return j.dump(2);
}

EvalReport evaluate(const training::TrainState& state, std::span<const dataset::ManifestEntry> test,
                    const std::filesystem::path& audio_root) {
  const auto& info = state.info;
  std::array<std::optional<Converter>, 2> converters;
  EvalReport report;
  for (const auto& e : test) {
    if (e.speaker != info.speaker) continue;
    int domain = -1;
    for (int d = 0; d < 2; ++d) {
      if (e.emotion == info.emotion[d]) domain = d;
    }
    if (domain < 0) continue;
    if (!converters[domain]) {
      ConversionConfig cfg;
      cfg.direction = {domain, 1 - domain};
      converters[domain].emplace(state, cfg);
    }
    const Converter& conv = *converters[domain];

    std::filesystem::path path = e.audio_path;
    if (path.is_relative() && !audio_root.empty()) path = audio_root / path;
    const Waveform wave = features::load_wav_16k(path);
    const features::VocoderFrames frames = features::analyze(wave);

    EvalRow row;
    row.audio_path = e.audio_path;
    row.emotion = e.emotion;
    row.direction = direction_string(conv.direction());

    const int dim = state.config.model.mcep_dim;
    const auto mcep = features::sp_to_mcep(frames.sp, dim);
    const auto norm = features::normalize(mcep, *info.mcep_stats);
    const features::McepSeq rec{conv.convert_mcep(norm.coeffs, {domain, domain}), mcep.alpha, mcep.fft_size};
    row.mcd_db = mel_cepstral_distortion(mcep.coeffs, features::denormalize(rec, *info.mcep_stats).coeffs);

    const features::VocoderFrames converted = conv.convert_frames(frames);
    const auto [mean, stdev] = voiced_log_moments(converted.f0);
    const auto& tgt = *info.logf0[1 - domain];
    row.logf0_mean_distance = std::abs(mean - tgt.mu);
    row.logf0_std_distance = std::abs(stdev - tgt.sigma);
    const Waveform out = features::synthesize(converted);
    const double hop = wave.sample_rate * features::kFramePeriodMs / 1000.0;
    row.duration_delta_frames = std::lround((static_cast<double>(out.samples.size()) - wave.samples.size()) / hop);
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty()) throw EmptyResultError("evaluation: no test utterances for the checkpoint's domains");
  const double n = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.mean_mcd_db += r.mcd_db;
    report.mean_logf0_mean_distance += r.logf0_mean_distance;
    report.mean_logf0_std_distance += r.logf0_std_distance;
    report.mean_duration_delta_frames += static_cast<double>(r.duration_delta_frames);
  }
  report.mean_mcd_db /= n;
  report.mean_logf0_mean_distance /= n;
  report.mean_logf0_std_distance /= n;
  report.mean_duration_delta_frames /= n;
  return report;
}

features::FeatureRecord extract_features(const dataset::ManifestEntry& entry, const Waveform& wave,
                                         double vad_threshold_db) {
  const features::VocoderFrames frames = features::analyze(wave);
  const features::McepSeq mcep = features::sp_to_mcep(frames.sp);
  const features::VadResult vad = features::energy_vad(mcep, frames, vad_threshold_db);
  features::FeatureRecord r;
  r.speaker = entry.speaker;
  r.emotion = entry.emotion;
  r.session = entry.session;
  r.utterance_id = entry.audio_path;
  r.frame_period_ms = frames.frame_period_ms;
  r.sample_rate = frames.sample_rate;
  r.fft_size = frames.fft_size;
  r.alpha = mcep.alpha;
  r.vad_applied = std::isfinite(vad_threshold_db);
  r.f0 = vad.frames.f0;
  r.mcep = vad.mcep.coeffs;
  r.ap = vad.frames.ap;
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_index(const std::filesystem::path& path, std::span<const dataset::ManifestEntry> train,
                 std::span<const dataset::ManifestEntry> test) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InvalidInputError("cannot write " + path.string());
  f << "audio_path,speaker,session,emotion,split\n";
  for (const auto* part : {&train, &test}) {
    const char* split = part == &train ? "train" : "test";
    for (const auto& e : *part) {
      f << csv_field(e.audio_path) << ',' << csv_field(e.speaker) << ',' << csv_field(e.session) << ','
        << e.emotion << ',' << split << '\n';
    }
  }
  if (!f) throw InvalidInputError("failed writing " + path.string());
}

std::string mcep_stats_file_name(const std::string& speaker) { return "mcep_" + speaker + ".json"; }

std::string logf0_stats_file_name(const std::string& speaker, const std::string& emotion) {
  return "logf0_" + speaker + "_" + emotion + ".json";
}

}  // namespace emovc::pipeline
