#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emovc/error.hpp"
#include "emovc/training.hpp"
#include "json.hpp"

namespace emovc::training {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'M', 'O', 'V', 'C', 'K', 'P', 'T'};

json config_to_json(const TrainConfig& c) {
  const auto& m = c.model;
  const auto& s = c.schedule;
  return json{
      {"model",
       {{"mcep_dim", m.mcep_dim},
        {"crop_len", m.crop_len},
        {"content_channels", m.content_channels},
        {"style_dim", m.style_dim},
        {"mlp_hidden", m.mlp_hidden},
        {"width_divisor", m.width_divisor},
        {"epsilon_in", m.epsilon_in}}},
      {"weights",
       {{"lambda_s", c.weights.lambda_s},
        {"lambda_c", c.weights.lambda_c},
        {"lambda_g", c.weights.lambda_g},
        {"lambda_x", c.weights.lambda_x}}},
      {"schedule",
       {{"lr_d", s.lr_d},
        {"lr_g", s.lr_g},
        {"beta1", s.beta1},
        {"beta2", s.beta2},
        {"adam_eps", s.adam_eps},
        {"decay_start", s.decay_start},
        {"ratio_switch_iter", s.ratio_switch_iter},
        {"gen_steps_before_switch", s.gen_steps_before_switch},
        {"total_iters", s.total_iters}}},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"generator_loss", c.generator_loss == GanGeneratorLoss::kNonSaturating ? "non_saturating" : "minimax"},
      {"prob_clamp", c.prob_clamp},
      {"style_ema_decay", c.style_ema_decay},
      {"nan_check_every", c.nan_check_every}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  const auto& m = j.at("model");
  m.at("mcep_dim").get_to(c.model.mcep_dim);
  m.at("crop_len").get_to(c.model.crop_len);
  m.at("content_channels").get_to(c.model.content_channels);
  m.at("style_dim").get_to(c.model.style_dim);
  m.at("mlp_hidden").get_to(c.model.mlp_hidden);
  m.at("width_divisor").get_to(c.model.width_divisor);
  m.at("epsilon_in").get_to(c.model.epsilon_in);
  const auto& w = j.at("weights");
  w.at("lambda_s").get_to(c.weights.lambda_s);
  w.at("lambda_c").get_to(c.weights.lambda_c);
  w.at("lambda_g").get_to(c.weights.lambda_g);
  w.at("lambda_x").get_to(c.weights.lambda_x);
  const auto& s = j.at("schedule");
  s.at("lr_d").get_to(c.schedule.lr_d);
  s.at("lr_g").get_to(c.schedule.lr_g);
  s.at("beta1").get_to(c.schedule.beta1);
  s.at("beta2").get_to(c.schedule.beta2);
  s.at("adam_eps").get_to(c.schedule.adam_eps);
  s.at("decay_start").get_to(c.schedule.decay_start);
  s.at("ratio_switch_iter").get_to(c.schedule.ratio_switch_iter);
  s.at("gen_steps_before_switch").get_to(c.schedule.gen_steps_before_switch);
  s.at("total_iters").get_to(c.schedule.total_iters);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  c.generator_loss = j.at("generator_loss").get<std::string>() == "minimax" ? GanGeneratorLoss::kMinimax
                                                                            : GanGeneratorLoss::kNonSaturating;
  j.at("prob_clamp").get_to(c.prob_clamp);
  j.at("style_ema_decay").get_to(c.style_ema_decay);
  j.at("nan_check_every").get_to(c.nan_check_every);
  return c;
}

json info_to_json(const DomainInfo& info) {
  json j{{"speaker", info.speaker}, {"emotion", info.emotion}};
  if (info.mcep_stats) j["mcep_stats"] = {{"mean", info.mcep_stats->mean}, {"std", info.mcep_stats->std}};
  json f0 = json::array();
  for (const auto& s : info.logf0) {
    if (s) {
      f0.push_back({{"mu", s->mu}, {"sigma", s->sigma}, {"n_frames", s->n_frames}});
    } else {
      f0.push_back(nullptr);
    }
  }
  j["logf0"] = f0;
  return j;
}

DomainInfo info_from_json(const json& j) {
  DomainInfo info;
  j.at("speaker").get_to(info.speaker);
  info.emotion = j.at("emotion").get<std::array<std::string, 2>>();
  if (j.contains("mcep_stats")) {
    info.mcep_stats = features::McepStats{j["mcep_stats"].at("mean").get<std::vector<double>>(),
                                          j["mcep_stats"].at("std").get<std::vector<double>>()};
  }
  const auto& f0 = j.at("logf0");
  for (std::size_t d = 0; d < 2 && d < f0.size(); ++d) {
    if (f0[d].is_null()) continue;
    info.logf0[d] = prosody::LogF0Stats{f0[d].at("mu").get<double>(), f0[d].at("sigma").get<double>(),
                                        f0[d].at("n_frames").get<std::size_t>()};
  }
  return info;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_block(std::string& out, std::span<const double> values) {
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  std::uint64_t u(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void block(std::span<double> out) {
    need(out.size() * 8);
    for (auto& v : out) v = std::bit_cast<double>(u(8));
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(source_ + ": truncated checkpoint");
  }
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
  json header;
  header["config"] = config_to_json(s.config);
  header["config_hash"] = config_hash(s.config);
  header["model_fingerprint"] = model::config_fingerprint(s.config.model);
  header["iteration"] = s.iteration;
  header["rng"] = s.rng.serialize();
  header["style_mean"] = s.styles.mean;
  header["style_count"] = s.styles.count;
  header["style_decay"] = s.styles.decay;
  header["gen_steps"] = s.gen_opt.steps();
  header["disc_steps"] = s.disc_opt.steps();
  header["info"] = info_to_json(s.info);
  json params = json::array();
  const auto all = s.model.all_parameters();
  for (const auto& p : all) params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  header["parameters"] = params;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out += text;
  for (const auto& p : all) put_block(out, p.tensor.values());
  for (const Adam* opt : {&s.gen_opt, &s.disc_opt}) {
    for (const auto& m : opt->first_moments()) put_block(out, m);
    for (const auto& v : opt->second_moments()) put_block(out, v);
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInputError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw InvalidInputError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<TrainConfig>& expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  const std::string src = path.string();
  Reader r(data, src);

  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw VersionError(src + ": not a checkpoint (bad magic)");
  }
  r.bytes(sizeof(kMagic));
  const auto version = static_cast<std::uint32_t>(r.u(4));
  if (version != kCheckpointVersion) {
    throw VersionError(src + ": checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const std::uint64_t len = r.u(8);
  if (len > data.size()) throw FormatError(src + ": truncated checkpoint header");
  json header;
  try {
    header = json::parse(r.bytes(len));
  } catch (const json::exception& e) {
    throw FormatError(src + ": bad checkpoint header: " + e.what());
  }

  LoadedCheckpoint out;
  try {
    const TrainConfig config = config_from_json(header.at("config"));
    out.state = make_initial_state(config);
    auto& s = out.state;
    const std::string stored_hash = header.at("config_hash").get<std::string>();
    if (stored_hash != config_hash(config)) {
      out.warnings.push_back("stored config hash " + stored_hash + " does not match its embedded config");
    }
    if (expected && config_hash(*expected) != stored_hash) {
      out.warnings.push_back("checkpoint config hash " + stored_hash + " differs from current config hash " +
                             config_hash(*expected));
    }
    s.iteration = header.at("iteration").get<std::int64_t>();
    s.rng.deserialize(header.at("rng").get<std::string>());
    s.styles.mean = header.at("style_mean").get<std::array<std::vector<double>, 2>>();
    s.styles.count = header.at("style_count").get<std::array<std::uint64_t, 2>>();
    s.styles.decay = header.at("style_decay").get<double>();
    s.gen_opt.set_steps(header.at("gen_steps").get<std::int64_t>());
    s.disc_opt.set_steps(header.at("disc_steps").get<std::int64_t>());
    s.info = info_from_json(header.at("info"));

    auto all = s.model.all_parameters();
    const auto& params = header.at("parameters");
    if (params.size() != all.size()) throw FormatError(src + ": parameter count mismatch");
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (params[i].at("name").get<std::string>() != all[i].name ||
          params[i].at("shape").get<nn::Shape>() != all[i].tensor.shape()) {
        throw FormatError(src + ": parameter " + all[i].name + " does not match the architecture");
      }
      r.block(all[i].tensor.mutable_values());
    }
    for (Adam* opt : {&s.gen_opt, &s.disc_opt}) {
      for (auto& m : opt->first_moments()) r.block(m);
      for (auto& v : opt->second_moments()) r.block(v);
    }
  } catch (const json::exception& e) {
    throw FormatError(src + ": bad checkpoint header: " + e.what());
  }
  if (!r.done()) throw FormatError(src + ": trailing bytes after checkpoint payload");
  return out;
}

}  // namespace emovc::training
