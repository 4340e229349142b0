#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "emovc/training.hpp"

namespace emovc {

// Flat UTF-8 key=value document. '#' starts a comment, blank lines are
// ignored. Known keys: speaker, emotion_1, emotion_2, features_dir,
// stats_dir, out_dir, batch_size, total_iters, decay_start,
// ratio_switch_iter, lambda_s, lambda_c, lambda_x, lambda_g, lr_g, lr_d,
// seed, width_divisor, checkpoint_every.
struct RunConfig {
  std::string speaker;
  std::string emotion_1;
  std::string emotion_2;
  std::filesystem::path features_dir;
  std::filesystem::path stats_dir;
  std::filesystem::path out_dir;
  std::int64_t checkpoint_every = 0;
  training::TrainConfig train;
};

// Unset training keys take the desk-scale profile's values.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace emovc
