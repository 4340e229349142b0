#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "emovc/audio_io.hpp"
#include "fixtures.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string(EMOVC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const auto dir = fixtures::temp_dir("cli_usage");
  CHECK(run("", dir).code == 1);
  const auto unknown = run("convert --checkpoint c --input a.wav --out b.wav --direction 1to2 --bogus", dir);
  CHECK(unknown.code == 1);
  CHECK(unknown.output.find("bogus") != std::string::npos);
  CHECK(unknown.output.find("usage") != std::string::npos);
  const auto missing = run("convert --input a.wav --out b.wav --direction 1to2", dir);
  CHECK(missing.code == 1);
  CHECK(missing.output.find("--checkpoint") != std::string::npos);
  CHECK(run("train --config " + (dir / "none.cfg").string() + " --seed 3", dir).code == 1);
  CHECK(run("--help", dir).code == 0);
  CHECK(run("eval --help", dir).code == 0);

  std::ofstream(dir / "bad.csv") << "audio_path,speaker,session,emotion\na.wav,F,S,fear\n";
  const auto bad = run("features --manifest " + (dir / "bad.csv").string() + " --out " + (dir / "f").string(), dir);
  CHECK(bad.code == 1);
  CHECK(bad.output.find(":2:") != std::string::npos);
}

TEST_CASE("features, stats, train, convert and eval end to end") {
  const auto dir = fixtures::temp_dir("cli_flow");
  fs::create_directories(dir / "wav");
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "audio_path,speaker,session,emotion,split\n";
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < 3; ++i) {
      fixtures::VoiceParams p;
      p.f0 = d == 0 ? 130.0 + 4 * i : 190.0 + 4 * i;
      p.tilt = d == 0 ? -0.6 : 0.8;
      p.seconds = 0.9;
      p.seed = 10u * d + i + 1;
      const std::string name = "wav/" + std::to_string(d) + "_" + std::to_string(i) + ".wav";
      emovc::features::write_wav(dir / name, fixtures::synth_speech(p));
      manifest << name << ",F01,Session1," << (d == 0 ? "neu" : "ang") << ",\n";
    }
  }
  manifest.close();

  const std::string feat = (dir / "feat").string(), stats = (dir / "stats").string(), out = (dir / "out").string();
  auto r = run("features --manifest " + (dir / "manifest.csv").string() + " --out " + feat + " --seed 4", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(fs::path(feat) / "index.csv"));
  const std::string index = read(fs::path(feat) / "index.csv");
  CHECK(index.find(",train") != std::string::npos);
  CHECK(index.find(",test") != std::string::npos);

  r = run("stats --features-dir " + feat + " --out " + stats + " --seed 4", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(fs::path(stats) / "mcep_F01.json"));
  CHECK(fs::exists(fs::path(stats) / "logf0_F01_neu.json"));
  CHECK(fs::exists(fs::path(stats) / "logf0_F01_ang.json"));

  std::ofstream(dir / "run.cfg") << "speaker=F01\nemotion_1=neu\nemotion_2=ang\nfeatures_dir=" << feat
                                  << "\nstats_dir=" << stats << "\nout_dir=" << out
                                  << "\nbatch_size=2\ntotal_iters=12\ndecay_start=8\nratio_switch_iter=5\nseed=1\n";
  r = run("train --config " + (dir / "run.cfg").string(), dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const fs::path ckpt = fs::path(out) / "checkpoint.emvk";
  CHECK(fs::exists(ckpt));
  const std::string log = read(fs::path(out) / "loss_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 13);

  // resuming a finished run is a no-op that keeps the log intact
  r = run("train --config " + (dir / "run.cfg").string() + " --resume", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(read(fs::path(out) / "loss_log.csv") == log);

  const std::string wav_in = (dir / "wav" / "0_0.wav").string(), wav_out = (dir / "conv.wav").string();
  r = run("convert --checkpoint " + ckpt.string() + " --input " + wav_in + " --out " + wav_out + " --direction 1to2", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto in_wave = emovc::features::read_wav(wav_in);
  const auto out_wave = emovc::features::read_wav(wav_out);
  CHECK(out_wave.sample_rate == 16000);
  CHECK(std::abs(static_cast<long>(out_wave.samples.size()) - static_cast<long>(in_wave.samples.size())) <= 80);

  r = run("convert --checkpoint " + ckpt.string() + " --input " + wav_in + " --out " + wav_out +
              " --direction 1to2 --f0-only --seed 9",
          dir);
  CHECK(r.code == 0);
  r = run("convert --checkpoint " + ckpt.string() + " --input " + wav_in + " --out " + wav_out +
              " --direction 1to2 --source-emotion sad",
          dir);
  CHECK(r.code == 1);
  r = run("convert --checkpoint " + (dir / "manifest.csv").string() + " --input " + wav_in + " --out " + wav_out +
              " --direction 1to2",
          dir);
  CHECK(r.code == 1);

  const std::string report = (dir / "report.json").string();
  r = run("eval --checkpoint " + ckpt.string() + " --features-dir " + feat + " --out " + report + " --seed 2", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto j = nlohmann::json::parse(read(report));
  CHECK(j.at("count").get<int>() == 2);
  CHECK(j.at("mean_mcd_db").get<double>() >= 0.0);
}
