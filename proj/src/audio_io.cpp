#include "emovc/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "emovc/error.hpp"

namespace emovc::features {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

double decode_sample(const unsigned char* p, int format, int bits) {
  if (format == 3) {
    float f;
    std::uint32_t raw = read_u32(p);
    std::memcpy(&f, &raw, sizeof f);
    return f;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      throw InvalidInputError("unsupported PCM bit depth " + std::to_string(bits));
  }
}

// Zeroth-order modified Bessel function, power series.
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 50; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-12 * sum) break;
  }
  return sum;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }

  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk = read_u32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    const std::size_t available = bytes.size() - (pos + 8);
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk < 16 || available < 16) throw FormatError(path.string() + ": short fmt chunk");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == 0xFFFE && chunk >= 26) format = read_u16(body + 24);
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = std::min<std::size_t>(chunk, available);
      break;
    }
    pos += 8 + chunk + (chunk & 1);
  }
  if (pcm == nullptr || channels <= 0 || rate == 0) {
    throw FormatError(path.string() + ": missing fmt or data chunk");
  }
  if (format != 1 && !(format == 3 && bits == 32)) {
    throw FormatError(path.string() + ": only integer PCM and float32 are supported");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = pcm_bytes / frame_bytes;
  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += decode_sample(pcm + i * frame_bytes + c * (bits / 8), format, bits);
    }
    wave.samples[i] = acc / channels;
  }
  return wave;
}

Waveform load_wav_16k(const std::filesystem::path& path) {
  Waveform wave = read_wav(path);
  if (wave.sample_rate != kSampleRate) wave = resample(wave, kSampleRate);
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : wave.samples) {
    const double clipped = std::clamp(std::isfinite(s) ? s : 0.0, -1.0, 1.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32767.0))));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InvalidInputError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (wave.sample_rate <= 0 || target_rate <= 0) throw InvalidInputError("resample: bad sample rate");
  if (wave.sample_rate == target_rate) return wave;

  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;  // relative to input Nyquist
  constexpr int kHalfTaps = 32;
  constexpr double kBeta = 8.6;
  const double half_width = kHalfTaps / cutoff;
  const double i0_beta = bessel_i0(kBeta);

  const auto out_len = static_cast<std::size_t>(std::floor(wave.samples.size() * ratio));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const auto n_in = static_cast<long>(wave.samples.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double center = i / ratio;
    const long lo = static_cast<long>(std::ceil(center - half_width));
    const long hi = static_cast<long>(std::floor(center + half_width));
    double acc = 0.0;
    for (long j = std::max(0L, lo); j <= std::min(n_in - 1, hi); ++j) {
      const double d = j - center;
      const double arg = std::numbers::pi * cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double r = d / half_width;
      const double window = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      acc += wave.samples[static_cast<std::size_t>(j)] * cutoff * sinc * window;
    }
    out.samples[i] = acc;
  }
  return out;
}

}  // namespace emovc::features
