#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "flowservo/servo.hpp"

namespace flowservo {

/// JSON document with the episode summary, poses and per-step metrics.
/// NaN metrics are written as null.
std::string episode_to_json(const EpisodeRecord& record);
/// Inverse of episode_to_json. Throws FormatError on malformed input.
EpisodeRecord episode_from_json(std::string_view text);

/// Flat per-step table: step,t_err,r_err,photometric,wall_ms,loss.
std::string steps_csv(const EpisodeRecord& record);
/// Camera positions: step,x,y,z.
std::string trajectory_csv(const EpisodeRecord& record);
/// Inner-loop loss traces: step,iteration,loss.
std::string training_csv(const EpisodeRecord& record);

/// Depth map as `height` lines of `width` comma-separated values in shortest
/// round-trip form; invalid pixels keep DepthMap::kInvalid.
std::string depth_map_csv(const DepthMap& depth);
/// Throws FormatError on ragged rows or bad numbers.
DepthMap parse_depth_map_csv(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Writes episode.json, steps.csv and trajectory.csv into `dir` (created if needed),
/// plus training.csv when `with_training` is set.
void write_episode_artifacts(const EpisodeRecord& record, const std::filesystem::path& dir,
                             bool with_training);

}  // namespace flowservo
