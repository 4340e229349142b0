#include "emovc/run_config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "emovc/dataset.hpp"
#include "emovc/error.hpp"

namespace emovc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key, const std::string& source, std::size_t line) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(source, line, "bad value '" + v + "' for " + key);
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig rc;
  rc.train = training::desk_scale_config();
  auto& t = rc.train;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (line == 1 && raw.rfind("\xEF\xBB\xBF", 0) == 0) raw.erase(0, 3);
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(source, line, "expected key=value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError(source, line, "duplicate key " + key);

    auto i64 = [&] { return parse_number<std::int64_t>(value, key, source, line); };
    auto dbl = [&] { return parse_number<double>(value, key, source, line); };
    if (key == "speaker") rc.speaker = value;
    else if (key == "emotion_1") rc.emotion_1 = value;
    else if (key == "emotion_2") rc.emotion_2 = value;
    else if (key == "features_dir") rc.features_dir = value;
    else if (key == "stats_dir") rc.stats_dir = value;
    else if (key == "out_dir") rc.out_dir = value;
    else if (key == "batch_size") t.batch_size = static_cast<int>(i64());
    else if (key == "total_iters") t.schedule.total_iters = i64();
    else if (key == "decay_start") t.schedule.decay_start = i64();
    else if (key == "ratio_switch_iter") t.schedule.ratio_switch_iter = i64();
    else if (key == "lambda_s") t.weights.lambda_s = dbl();
    else if (key == "lambda_c") t.weights.lambda_c = dbl();
    else if (key == "lambda_x") t.weights.lambda_x = dbl();
    else if (key == "lambda_g") t.weights.lambda_g = dbl();
    else if (key == "lr_g") t.schedule.lr_g = dbl();
    else if (key == "lr_d") t.schedule.lr_d = dbl();
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(value, key, source, line);
    else if (key == "width_divisor") t.model.width_divisor = static_cast<int>(i64());
    else if (key == "checkpoint_every") rc.checkpoint_every = i64();
    else throw ParseError(source, line, "unknown key " + key);
  }
  for (const char* k : {"speaker", "emotion_1", "emotion_2", "features_dir", "stats_dir", "out_dir"}) {
    if (!seen.count(k)) throw ConfigError(source + ": missing required key " + k);
  }
  for (const auto* e : {&rc.emotion_1, &rc.emotion_2}) {
    if (!dataset::is_known_emotion(*e)) throw ConfigError(source + ": unknown emotion label '" + *e + "'");
  }
  if (rc.checkpoint_every < 0) throw ConfigError(source + ": checkpoint_every must be non-negative");
  t.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

}  // namespace emovc
