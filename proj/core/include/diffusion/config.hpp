#pragma once

#include <filesystem>
#include <string>

#include "diffusion/models.hpp"
#include "diffusion/schedule.hpp"
#include "diffusion/train.hpp"

namespace diffusion {

/// Flat key=value run configuration. Unknown keys are rejected; data and
/// output paths resolve relative to the config file's directory.
struct RunConfig {
  std::filesystem::path base_dir;
  std::string experiment;
  std::filesystem::path data_path;
  std::filesystem::path out_dir;

  int steps_T = 0;
  double beta1 = 1e-4;
  ScheduleMode schedule_mode = ScheduleMode::fixed_rule;

  ModelDescriptor model;
  TrainConfig train;
};

RunConfig parse_run_config(const std::filesystem::path& path);

}  // namespace diffusion
