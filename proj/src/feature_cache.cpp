#include "emovc/feature_cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "emovc/error.hpp"

namespace emovc::features {
namespace {


void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t load_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void append_f64(std::string& out, const double* values, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) append_u64(out, std::bit_cast<std::uint64_t>(values[i]));
}

void load_f64(const char* p, double* values, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(load_u64(p + 8 * i));
}

}  // namespace

std::string encode_feature_record(const FeatureRecord& r) {
  const auto frames = r.num_frames();
  if (static_cast<std::size_t>(r.mcep.cols()) != frames || static_cast<std::size_t>(r.ap.rows()) != frames) {
    throw ShapeError("feature record: f0/mcep/ap frame counts differ");
  }
  nlohmann::json header;
  header["speaker"] = r.speaker;
  header["emotion"] = r.emotion;
  header["session"] = r.session;
  header["utterance_id"] = r.utterance_id;
  header["frame_period_ms"] = r.frame_period_ms;
  header["sample_rate"] = r.sample_rate;
  header["fft_size"] = r.fft_size;
  header["alpha"] = r.alpha;
  header["vad_applied"] = r.vad_applied;
  header["dtype"] = "f64le";
  header["shapes"] = {{"f0", {frames}},
                      {"mcep", {r.mcep.rows(), r.mcep.cols()}},
                      {"ap", {r.ap.rows(), r.ap.cols()}}};
  const std::string text = header.dump();

  std::string out(kFeatureMagic, sizeof kFeatureMagic);
  append_u64(out, text.size());
  out += text;
  append_f64(out, r.f0.data(), r.f0.size());
  append_f64(out, r.mcep.data(), static_cast<std::size_t>(r.mcep.size()));
  append_f64(out, r.ap.data(), static_cast<std::size_t>(r.ap.size()));
  return out;
}

FeatureRecord decode_feature_record(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, sizeof kFeatureMagic) != 0) {
    throw FormatError("feature cache: bad magic");
  }
  const std::uint64_t header_len = load_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw FormatError("feature cache: truncated header");

  FeatureRecord r;
  std::size_t f0_len = 0, mcep_rows = 0, mcep_cols = 0, ap_rows = 0, ap_cols = 0;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
    if (header.at("dtype").get<std::string>() != "f64le") throw FormatError("feature cache: unsupported dtype");
    r.speaker = header.at("speaker").get<std::string>();
    r.emotion = header.at("emotion").get<std::string>();
    r.session = header.value("session", "");
    r.utterance_id = header.value("utterance_id", "");
    r.frame_period_ms = header.at("frame_period_ms").get<double>();
    r.sample_rate = header.at("sample_rate").get<int>();
    r.fft_size = header.at("fft_size").get<int>();
    r.alpha = header.at("alpha").get<double>();
    r.vad_applied = header.value("vad_applied", false);
    const auto& shapes = header.at("shapes");
    f0_len = shapes.at("f0").at(0).get<std::size_t>();
    mcep_rows = shapes.at("mcep").at(0).get<std::size_t>();
    mcep_cols = shapes.at("mcep").at(1).get<std::size_t>();
    ap_rows = shapes.at("ap").at(0).get<std::size_t>();
    ap_cols = shapes.at("ap").at(1).get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("feature cache: bad header: ") + e.what());
  }
  if (mcep_cols != f0_len || ap_rows != f0_len) throw FormatError("feature cache: inconsistent shapes");

  const std::size_t values = f0_len + mcep_rows * mcep_cols + ap_rows * ap_cols;
  const std::size_t offset = 16 + header_len;
  if (bytes.size() - offset != values * 8) throw FormatError("feature cache: payload size mismatch");

  const char* p = bytes.data() + offset;
  r.f0.resize(f0_len);
  load_f64(p, r.f0.data(), f0_len);
  p += 8 * f0_len;
  r.mcep.resize(static_cast<Eigen::Index>(mcep_rows), static_cast<Eigen::Index>(mcep_cols));
  load_f64(p, r.mcep.data(), mcep_rows * mcep_cols);
  p += 8 * mcep_rows * mcep_cols;
  r.ap.resize(static_cast<Eigen::Index>(ap_rows), static_cast<Eigen::Index>(ap_cols));
  load_f64(p, r.ap.data(), ap_rows * ap_cols);
  return r;
}

void write_feature_record(const std::filesystem::path& path, const FeatureRecord& record) {
  const std::string bytes = encode_feature_record(record);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FeatureRecord read_feature_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_record(bytes);
}

}  // namespace emovc::features
