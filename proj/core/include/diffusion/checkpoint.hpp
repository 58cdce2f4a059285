#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "diffusion/models.hpp"
#include "diffusion/params.hpp"
#include "diffusion/schedule.hpp"

namespace diffusion {

enum class CheckpointStatus {
  ok,
  bad_magic,
  version_mismatch,
  truncated,
  checksum_mismatch,
  malformed,
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointStatus status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  CheckpointStatus status() const { return status_; }

 private:
  CheckpointStatus status_;
};

/// Self-describing binary container: magic + version header, explicit
/// little-endian encoding, named 64-bit parameter arrays, checksum trailer.
/// save -> load -> save is byte-identical.
struct Checkpoint {
  DiffusionSpec spec;
  ModelDescriptor model_desc;
  ParameterVector params;
  std::uint64_t train_step = 0;
  std::uint64_t seed = 0;
  double standardization = 1.0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reconstructs the model described by the checkpoint with its saved
/// parameter values.
std::unique_ptr<ReverseModel> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace diffusion
